//! Anchor-Gaussian scaffold built from aggregated LiDAR and the decoder that
//! turns each anchor into renderable auxiliary Gaussians.

pub mod cloud;
pub mod decoder;
pub mod mlp;

use nalgebra::Vector3;
use rand::Rng;

pub use cloud::{aggregate, compute_voxel_size, scene_scale, voxelize, PointCloud};
pub use decoder::{
    decode, decode_backward, decode_with_cache, AnchorGrad, AnchorRef, AuxGaussian, AuxGaussianGrad, DecodeCache,
    DecodeGrad, DecoderNet, Head, NetGrads, DEFAULT_OFFSPRING, FEATURE_DIM,
};

use crate::error::{Error, Result};

/// Half-width of the uniform feature initialization.
pub const FEATURE_INIT: f64 = 1.0;

/// Owned copy of one anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct Anchor {
    pub center: Vector3<f64>,
    pub feature: Vec<f64>,
    pub scale: f64,
    /// Running mean of the largest offspring opacity, if ever observed.
    pub opacity_mean: Option<f64>,
}

/// Fixed anchor centers with trainable per-anchor features and scales, plus
/// the shared decoder networks.
///
/// Anchor scales are stored as logarithms so that they stay positive under
/// unconstrained updates.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianScene {
    centers: Vec<Vector3<f64>>,
    features: Vec<f64>,
    log_scales: Vec<f64>,
    opacity_sum: Vec<f64>,
    opacity_count: Vec<u32>,
    observed_iterations: u64,
    nets: DecoderNet,
    scene_scale: f64,
    voxel_size: f64,
}

impl GaussianScene {
    /// Voxelizes `cloud` with `epsilon = scene_scale / voxel_constant` and
    /// places one anchor on every occupied voxel. Features start uniform in
    /// `[-FEATURE_INIT, FEATURE_INIT)` so that anchors are distinguishable
    /// to the zero-initialized output layers from the first step.
    pub fn from_cloud<R: Rng + ?Sized>(cloud: &PointCloud, voxel_constant: f64, offspring: usize, rng: &mut R) -> Result<Self> {
        let voxel_size = compute_voxel_size(cloud, voxel_constant)?;
        let centers = voxelize(cloud, voxel_size)?;
        let scale = scene_scale(cloud);
        let nets = DecoderNet::new(offspring, FEATURE_DIM, scale / 10.0, rng);
        let n = centers.len();
        let features = (0..n * FEATURE_DIM).map(|_| rng.random_range(-FEATURE_INIT..FEATURE_INIT)).collect();
        Self::from_parts(centers, features, vec![voxel_size.ln(); n], nets, scale, voxel_size)
    }

    pub fn from_parts(
        centers: Vec<Vector3<f64>>,
        features: Vec<f64>,
        log_scales: Vec<f64>,
        nets: DecoderNet,
        scene_scale: f64,
        voxel_size: f64,
    ) -> Result<Self> {
        let n = centers.len();
        if features.len() != n * nets.feature_dim() || log_scales.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} anchors need {} feature values and {n} scales, got {} and {}",
                n * nets.feature_dim(),
                features.len(),
                log_scales.len()
            )));
        }
        Ok(Self {
            centers,
            features,
            log_scales,
            opacity_sum: vec![0.0; n],
            opacity_count: vec![0; n],
            observed_iterations: 0,
            nets,
            scene_scale,
            voxel_size,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[Vector3<f64>] {
        &self.centers
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn features_mut(&mut self) -> &mut [f64] {
        &mut self.features
    }

    pub fn log_scales(&self) -> &[f64] {
        &self.log_scales
    }

    pub fn log_scales_mut(&mut self) -> &mut [f64] {
        &mut self.log_scales
    }

    pub fn nets(&self) -> &DecoderNet {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut DecoderNet {
        &mut self.nets
    }

    pub fn scene_scale(&self) -> f64 {
        self.scene_scale
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        let f = self.nets.feature_dim();
        &self.features[i * f..(i + 1) * f]
    }

    pub fn scale(&self, i: usize) -> f64 {
        self.log_scales[i].exp()
    }

    pub fn anchor_ref(&self, i: usize) -> AnchorRef<'_> {
        AnchorRef { center: self.centers[i], feature: self.feature(i), scale: self.scale(i) }
    }

    pub fn anchor(&self, i: usize) -> Anchor {
        Anchor {
            center: self.centers[i],
            feature: self.feature(i).to_vec(),
            scale: self.scale(i),
            opacity_mean: self.opacity_mean(i),
        }
    }

    pub fn opacity_mean(&self, i: usize) -> Option<f64> {
        (self.opacity_count[i] > 0).then(|| self.opacity_sum[i] / self.opacity_count[i] as f64)
    }

    /// Records the largest offspring opacity seen for anchor `i` this iteration.
    pub fn record_opacity(&mut self, i: usize, max_opacity: f64) {
        self.opacity_sum[i] += max_opacity;
        self.opacity_count[i] += 1;
    }

    /// Marks the end of one iteration's worth of opacity observations.
    pub fn finish_observation(&mut self) {
        self.observed_iterations += 1;
    }

    pub fn observed_iterations(&self) -> u64 {
        self.observed_iterations
    }

    pub fn reset_opacity_stats(&mut self) {
        self.opacity_sum.fill(0.0);
        self.opacity_count.fill(0);
        self.observed_iterations = 0;
    }

    /// `true` for anchors to keep: never observed, or mean opacity at or
    /// above `threshold`.
    pub fn keep_mask(&self, threshold: f64) -> Vec<bool> {
        (0..self.len()).map(|i| self.opacity_mean(i).is_none_or(|m| m >= threshold)).collect()
    }

    /// Drops every anchor whose mask entry is `false`.
    pub fn retain(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.len());
        let f = self.nets.feature_dim();
        let mut i = 0;
        self.centers.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        self.features = self
            .features
            .chunks(f)
            .zip(keep)
            .filter(|(_, &k)| k)
            .flat_map(|(c, _)| c.iter().copied())
            .collect();
        retain_by(&mut self.log_scales, keep);
        retain_by(&mut self.opacity_sum, keep);
        retain_by(&mut self.opacity_count, keep);
    }
}

pub(crate) fn retain_by<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut i = 0;
    v.retain(|_| {
        i += 1;
        keep[i - 1]
    });
}

/// Removes anchors whose mean maximum offspring opacity is below
/// `opacity_threshold`, once at least `window` iterations of statistics have
/// been gathered. Statistics restart after every pruning pass.
pub fn prune_floaters(scene: &mut GaussianScene, opacity_threshold: f64, window: u64) -> usize {
    prune_floaters_with_mask(scene, opacity_threshold, window).map_or(0, |keep| keep.iter().filter(|k| !**k).count())
}

/// Like [`prune_floaters`] but returns the keep mask that was applied, so
/// that per-anchor optimizer state can be filtered the same way.
pub fn prune_floaters_with_mask(scene: &mut GaussianScene, opacity_threshold: f64, window: u64) -> Option<Vec<bool>> {
    if scene.observed_iterations < window {
        return None;
    }
    let keep = scene.keep_mask(opacity_threshold);
    scene.retain(&keep);
    scene.reset_opacity_stats();
    Some(keep)
}
