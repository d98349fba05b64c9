//! One image's worth of forward and reverse computation: decode the anchors
//! in front of the camera, project, render, score, and push the image
//! gradient back to anchors, networks and the camera pose.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::color_image::ColorImage;
use crate::error::Result;
use crate::lie::Pose;
use crate::losses::{photometric, scale_reg, LossReport};
use crate::raster::{
    project, project_backward, render, render_backward, splat_pose_gradient, view_pose_gradient, PinholeCamera,
    PoseGradient, Projection, ProjectionCache, RenderOptions, RenderPacket, Splat2D,
};
use crate::scene::decoder::{covariance_backward, decode_backward_into};
use crate::scene::{decode_with_cache, AnchorGrad, AuxGaussian, AuxGaussianGrad, DecodeCache, GaussianScene, Head, NetGrads};

/// Decoder backward work is split into this many contiguous chunks whose
/// partial sums are added in chunk order.
const REDUCTION_CHUNKS: usize = 16;

#[derive(Clone, Copy, Debug)]
struct VisibleSplat {
    slot: u32,
    offspring: u32,
    cache: ProjectionCache,
}

/// Forward state of one frame, kept for the reverse pass.
#[derive(Clone, Debug)]
pub struct FrameForward {
    cam_pose: Pose,
    cam: PinholeCamera,
    cam_center: Vector3<f64>,
    /// Anchor index per decoded slot.
    anchors: Vec<usize>,
    decoded: Vec<Vec<AuxGaussian>>,
    caches: Vec<DecodeCache>,
    visible: Vec<VisibleSplat>,
    pub packet: RenderPacket,
}

impl FrameForward {
    pub fn image(&self) -> &ColorImage {
        &self.packet.image
    }

    pub fn visible_count(&self) -> usize {
        self.visible.len()
    }

    pub fn decoded_anchor_count(&self) -> usize {
        self.anchors.len()
    }

    fn gaussian(&self, v: &VisibleSplat) -> &AuxGaussian {
        &self.decoded[v.slot as usize][v.offspring as usize]
    }

    /// Decoded Gaussians that survived projection, in render input order.
    pub fn visible_gaussians(&self) -> Vec<AuxGaussian> {
        self.visible.iter().map(|v| *self.gaussian(v)).collect()
    }

    pub fn visible_scales(&self) -> Vec<Vector3<f64>> {
        self.visible.iter().map(|v| self.gaussian(v).scale).collect()
    }

    /// `(anchor, largest offspring opacity)` for anchors with at least one
    /// visible offspring, in anchor order.
    pub fn anchor_max_opacity(&self) -> Vec<(usize, f64)> {
        let mut seen = vec![false; self.anchors.len()];
        for v in &self.visible {
            seen[v.slot as usize] = true;
        }
        seen.iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(slot, _)| {
                let m = self.decoded[slot].iter().map(|g| g.opacity).fold(f64::NEG_INFINITY, f64::max);
                (self.anchors[slot], m)
            })
            .collect()
    }
}

/// Decodes every anchor whose offspring could lie in front of the camera,
/// projects the offspring and renders them.
pub fn forward_frame(scene: &GaussianScene, cam_pose: &Pose, cam: &PinholeCamera, opts: &RenderOptions) -> FrameForward {
    let cam_center = cam_pose.center();
    let r = cam_pose.rotation.matrix();
    // Offsets are bounded by scale per axis, so by sqrt(3) scale in norm.
    let anchors: Vec<usize> = (0..scene.len())
        .filter(|&i| {
            let z = (r * scene.centers()[i] + cam_pose.translation).z;
            let reach = 3f64.sqrt() * scene.scale(i);
            z + reach > cam.near && z - reach < cam.far
        })
        .collect();
    let nets = scene.nets();
    let (decoded, caches): (Vec<_>, Vec<_>) =
        anchors.par_iter().map(|&i| decode_with_cache(&scene.anchor_ref(i), &cam_center, nets)).unzip();

    let mut visible = Vec::new();
    let mut splats: Vec<Splat2D> = Vec::new();
    for (slot, gs) in decoded.iter().enumerate() {
        for (k, g) in gs.iter().enumerate() {
            if let Projection::Visible(s, cache) = project(g, cam_pose, cam) {
                visible.push(VisibleSplat { slot: slot as u32, offspring: k as u32, cache });
                splats.push(s);
            }
        }
    }
    let packet = render(&splats, cam, opts);
    FrameForward { cam_pose: *cam_pose, cam: *cam, cam_center, anchors, decoded, caches, visible, packet }
}

/// Photometric loss plus the scale regularizer over the visible Gaussians.
/// Also returns the regularizer's gradient per visible Gaussian.
pub fn frame_loss(
    fwd: &FrameForward,
    observed: &ColorImage,
    lambda_dssim: f64,
    scale_ratio: f64,
) -> Result<(LossReport, Vec<Vector3<f64>>)> {
    let (photo, d_image) = photometric(fwd.image(), observed, lambda_dssim)?;
    let (reg, reg_grads) = scale_reg(&fwd.visible_scales(), scale_ratio);
    Ok((LossReport { total: photo + reg, photo, scale_reg: reg, d_image }, reg_grads))
}

/// Gradients of one frame's loss.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameGradients {
    /// Dense, `scene.len() * feature_dim`.
    pub features: Vec<f64>,
    /// With respect to the log anchor scales.
    pub log_scales: Vec<f64>,
    pub nets: NetGrads,
    pub pose: PoseGradient,
}

impl FrameGradients {
    pub fn is_finite(&self) -> bool {
        self.features.iter().chain(&self.log_scales).all(|v| v.is_finite())
            && self.nets.heads.iter().all(|h| h.iter().all(|v| v.is_finite()))
            && self.pose.total().is_finite()
    }
}

/// Reverse pass of [`forward_frame`] followed by [`frame_loss`].
/// `scale_grads` holds one entry per visible Gaussian.
pub fn backward_frame(
    scene: &GaussianScene,
    fwd: &FrameForward,
    d_image: &ColorImage,
    scale_grads: &[Vector3<f64>],
) -> Result<FrameGradients> {
    let splat_grads = render_backward(&fwd.packet, d_image)?;
    let k_count = scene.nets().offspring();
    let mut upstream = vec![vec![AuxGaussianGrad::default(); k_count]; fwd.anchors.len()];
    let mut touched = vec![false; fwd.anchors.len()];
    let mut pose = PoseGradient::default();
    for (j, v) in fwd.visible.iter().enumerate() {
        let pg = project_backward(&v.cache, &fwd.cam_pose, &fwd.cam, &splat_grads[j]);
        let (m, c) = splat_pose_gradient(&v.cache, &pg);
        pose.mean += m;
        pose.covariance += c;
        let g = fwd.gaussian(v);
        let (d_rot, mut d_scale) = covariance_backward(&g.rotation, &g.scale, &pg.world_cov);
        if let Some(s) = scale_grads.get(j) {
            d_scale += s;
        }
        upstream[v.slot as usize][v.offspring as usize] = AuxGaussianGrad {
            center: pg.world_mean,
            rotation: d_rot,
            scale: d_scale,
            color: splat_grads[j].color,
            opacity: splat_grads[j].opacity,
        };
        touched[v.slot as usize] = true;
    }

    let nets = scene.nets();
    let slots: Vec<usize> = (0..fwd.anchors.len()).filter(|&s| touched[s]).collect();
    let chunk = slots.len().div_ceil(REDUCTION_CHUNKS).max(1);
    let partial: Vec<Result<(NetGrads, Vec<(usize, AnchorGrad)>)>> = slots
        .par_chunks(chunk)
        .map(|part| {
            let mut ng = NetGrads::zeros(nets);
            let mut out = Vec::with_capacity(part.len());
            for &s in part {
                let a = fwd.anchors[s];
                let g = decode_backward_into(
                    &scene.anchor_ref(a),
                    &fwd.cam_center,
                    nets,
                    Some(&fwd.caches[s]),
                    &upstream[s],
                    &mut ng,
                )?;
                out.push((a, g));
            }
            Ok((ng, out))
        })
        .collect();

    let f = nets.feature_dim();
    let mut grads = FrameGradients {
        features: vec![0.0; scene.len() * f],
        log_scales: vec![0.0; scene.len()],
        nets: NetGrads::zeros(nets),
        pose,
    };
    let mut d_center_color = Vector3::zeros();
    let mut d_center_geometry = Vector3::zeros();
    for p in partial {
        let (ng, anchors) = p?;
        grads.nets.add(&ng);
        for (a, g) in anchors {
            grads.features[a * f..(a + 1) * f].copy_from_slice(&g.feature);
            grads.log_scales[a] = g.scale * scene.scale(a);
            for h in Head::ALL {
                if h == Head::Color {
                    d_center_color += g.cam_center_by_head[h.index()];
                } else {
                    d_center_geometry += g.cam_center_by_head[h.index()];
                }
            }
        }
    }
    grads.pose.view_color = view_pose_gradient(&fwd.cam_pose, &d_center_color);
    grads.pose.view_geometry = view_pose_gradient(&fwd.cam_pose, &d_center_geometry);
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{exp, Twist};
    use crate::scene::{DecoderNet, FEATURE_DIM};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Setup {
        scene: GaussianScene,
        pose: Pose,
        cam: PinholeCamera,
        observed: ColorImage,
    }

    fn setup(seed: u64) -> Setup {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nets = DecoderNet::new(10, FEATURE_DIM, 0.5, &mut rng);
        for h in Head::ALL {
            for w in nets.head_mut(h).params_mut() {
                *w += rng.random_range(-0.1..0.1);
            }
        }
        let centers = vec![Vector3::new(-0.15, 0.05, 2.0), Vector3::new(0.12, -0.04, 2.3)];
        let features = (0..2 * FEATURE_DIM).map(|_| rng.random_range(-0.5..0.5)).collect();
        let scene = GaussianScene::from_parts(centers, features, vec![0.15f64.ln(); 2], nets, 5.0, 0.15).unwrap();
        let cam = PinholeCamera { fx: 40.0, fy: 40.0, cx: 15.5, cy: 11.5, width: 32, height: 24, near: 0.1, far: 20.0 };
        let observed =
            ColorImage::from_data(32, 24, (0..32 * 24 * 3).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let pose = exp(&Twist::from_array([0.02, -0.01, 0.03, 0.01, 0.02, -0.01]));
        Setup { scene, pose, cam, observed }
    }

    fn loss(s: &Setup, scene: &GaussianScene, pose: &Pose) -> f64 {
        let opts = RenderOptions { early_exit: false, ..Default::default() };
        let fwd = forward_frame(scene, pose, &s.cam, &opts);
        frame_loss(&fwd, &s.observed, 0.2, 10.0).unwrap().0.total
    }

    fn grads(s: &Setup) -> FrameGradients {
        let opts = RenderOptions { early_exit: false, ..Default::default() };
        let fwd = forward_frame(&s.scene, &s.pose, &s.cam, &opts);
        assert_eq!(fwd.visible_count(), 20);
        let (report, reg) = frame_loss(&fwd, &s.observed, 0.2, 10.0).unwrap();
        backward_frame(&s.scene, &fwd, &report.d_image, &reg).unwrap()
    }

    fn close(fd: f64, an: f64, tol: f64) -> bool {
        (fd - an).abs() <= tol * fd.abs().max(an.abs()).max(1e-6)
    }

    #[test]
    fn pose_gradient_matches_finite_differences() {
        let s = setup(1);
        let an = grads(&s).pose.total().to_vector();
        let h = 1e-5;
        for k in 0..6 {
            let mut e = [0.0; 6];
            e[k] = h;
            let p = exp(&Twist::from_array(e)) * s.pose;
            e[k] = -h;
            let m = exp(&Twist::from_array(e)) * s.pose;
            let fd = (loss(&s, &s.scene, &p) - loss(&s, &s.scene, &m)) / (2.0 * h);
            assert!(close(fd, an[k], 1e-3), "component {k}: fd {fd} analytic {}", an[k]);
        }
    }

    #[test]
    fn scene_gradients_match_finite_differences() {
        let s = setup(2);
        let g = grads(&s);
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let i = rng.random_range(0..s.scene.features().len());
            let mut a = s.scene.clone();
            a.features_mut()[i] += h;
            let mut b = s.scene.clone();
            b.features_mut()[i] -= h;
            let fd = (loss(&s, &a, &s.pose) - loss(&s, &b, &s.pose)) / (2.0 * h);
            assert!(close(fd, g.features[i], 1e-3), "feature {i}: fd {fd} analytic {}", g.features[i]);
        }
        for i in 0..2 {
            let mut a = s.scene.clone();
            a.log_scales_mut()[i] += h;
            let mut b = s.scene.clone();
            b.log_scales_mut()[i] -= h;
            let fd = (loss(&s, &a, &s.pose) - loss(&s, &b, &s.pose)) / (2.0 * h);
            assert!(close(fd, g.log_scales[i], 1e-3), "scale {i}: fd {fd} analytic {}", g.log_scales[i]);
        }
        for head in Head::ALL {
            for _ in 0..10 {
                let n = s.scene.nets().head(head).num_params();
                let i = rng.random_range(0..n);
                let mut a = s.scene.clone();
                a.nets_mut().head_mut(head).params_mut()[i] += h;
                let mut b = s.scene.clone();
                b.nets_mut().head_mut(head).params_mut()[i] -= h;
                let fd = (loss(&s, &a, &s.pose) - loss(&s, &b, &s.pose)) / (2.0 * h);
                let an = g.nets.head(head)[i];
                assert!(close(fd, an, 1e-3), "{} weight {i}: fd {fd} analytic {an}", head.name());
            }
        }
    }
}
