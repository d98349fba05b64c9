use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every tunable of a calibration run. Missing JSON keys take the defaults
/// below; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub total_iters: u64,
    pub weight_decay: f64,
    /// Weight decay applies while `iteration < weight_decay_until`.
    pub weight_decay_until: u64,
    pub lr_pose_rotation: f64,
    pub lr_pose_translation: f64,
    pub lr_features: f64,
    pub lr_mlp: f64,
    /// Learning rate of the log anchor scales.
    pub lr_anchor_scale: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub lambda_dssim: f64,
    /// Auxiliary Gaussians decoded per anchor.
    pub offspring: usize,
    /// Largest tolerated ratio between a Gaussian's longest and shortest axis.
    pub scale_ratio: f64,
    pub min_cycles: u32,
    pub prune_opacity: f64,
    pub prune_window: u64,
    pub voxel_constant: f64,
    /// Seeds image sampling.
    pub seed: u64,
    /// Seeds network initialization.
    pub network_seed: u64,
    /// Zero disables periodic checkpoints; a final one is always emitted.
    pub checkpoint_every: u64,
    pub log_every: u64,
    pub background: [f64; 3],
    pub early_exit: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_iters: 30_000,
            weight_decay: 1e-2,
            weight_decay_until: 15_000,
            lr_pose_rotation: 2e-3,
            lr_pose_translation: 8e-3,
            lr_features: 2.5e-3,
            lr_mlp: 2e-3,
            lr_anchor_scale: 5e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            lambda_dssim: 0.2,
            offspring: 10,
            scale_ratio: 10.0,
            min_cycles: 5,
            prune_opacity: 0.05,
            prune_window: 1000,
            voxel_constant: 100.0,
            seed: 0,
            network_seed: 0,
            checkpoint_every: 1000,
            log_every: 100,
            background: [0.0; 3],
            early_exit: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("weight_decay", self.weight_decay),
            ("lr_pose_rotation", self.lr_pose_rotation),
            ("lr_pose_translation", self.lr_pose_translation),
            ("lr_features", self.lr_features),
            ("lr_mlp", self.lr_mlp),
            ("lr_anchor_scale", self.lr_anchor_scale),
            ("prune_opacity", self.prune_opacity),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda_dssim) {
            return Err(Error::Config(format!("lambda_dssim must lie in [0, 1], got {}", self.lambda_dssim)));
        }
        if self.offspring == 0 {
            return Err(Error::Config("offspring must be at least 1".into()));
        }
        if !(self.scale_ratio > 0.0) {
            return Err(Error::Config("scale_ratio must be positive".into()));
        }
        if self.min_cycles == 0 {
            return Err(Error::Config("min_cycles must be at least 1".into()));
        }
        if self.prune_window == 0 {
            return Err(Error::Config("prune_window must be at least 1".into()));
        }
        if !(self.voxel_constant > 0.0) {
            return Err(Error::Config(format!("voxel_constant must be positive, got {}", self.voxel_constant)));
        }
        if self.background.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("background must be finite".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}
