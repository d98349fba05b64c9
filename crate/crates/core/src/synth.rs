//! Synthetic scenes with known geometry, extrinsics and images.
//!
//! The world is a room seen from a LiDAR that drives forward along its x
//! axis: a back wall, a floor, two side walls and an optional ceiling, each
//! covered in flat checker-textured Gaussians, plus colored blobs near the
//! walls. The LiDAR frame is x forward, y left, z up and sits `1.0` above
//! the floor at every timestamp. Camera frames are x right, y down, z forward.
//!
//! Scans come from a spinning sensor ray-cast against the exact geometry
//! (rectangles for planes, spheres of radius `2 s` for blobs). Images are
//! renders of the ground-truth Gaussians through the repository's own
//! rasterizer, quantized to 8 bits so that they equal what is stored on disk.

use nalgebra::{Matrix3, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::color_image::ColorImage;
use crate::dataset::{Dataset, Scan};
use crate::error::{Error, Result};
use crate::lie::{Pose, Rotation};
use crate::raster::{render_gaussians, PinholeCamera, RenderOptions};
use crate::rig::{CameraRig, RigCamera};
use crate::optim::TrainConfig;
use crate::scene::{AuxGaussian, PointCloud};

const LIDAR_HEIGHT: f64 = 1.0;
const MAX_PLANES: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub blobs: usize,
    /// Back wall, floor, left wall, right wall, ceiling, in that order.
    pub planes: usize,
    /// Depth of the room ahead of the first LiDAR position, meters.
    pub extent: f64,
    pub cameras: usize,
    pub timestamps: usize,
    pub rotation_noise_deg: f64,
    pub translation_noise: f64,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub lidar_channels: usize,
    pub azimuth_step_deg: f64,
    /// Standard deviation of Gaussian pixel noise added before quantization.
    pub pixel_noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            blobs: 120,
            planes: 4,
            extent: 4.0,
            cameras: 2,
            timestamps: 10,
            rotation_noise_deg: 0.5,
            translation_noise: 0.02,
            width: 128,
            height: 96,
            focal: 100.0,
            lidar_channels: 32,
            azimuth_step_deg: 1.0,
            pixel_noise: 0.0,
        }
    }
}

pub const PRESETS: [&str; 2] = ["from-blueprint-noise", "from-lidar-noise"];

impl SynthSpec {
    /// Small injected noise, as from design drawings.
    pub fn from_blueprint_noise() -> Self {
        Self { rotation_noise_deg: 0.5, translation_noise: 0.02, ..Self::default() }
    }

    /// Large injected noise, as from a coarse LiDAR-based guess.
    pub fn from_lidar_noise() -> Self {
        Self { rotation_noise_deg: 5.0, translation_noise: 0.3, ..Self::default() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "from-blueprint-noise" => Ok(Self::from_blueprint_noise()),
            "from-lidar-noise" => Ok(Self::from_lidar_noise()),
            other => Err(Error::Config(format!("unknown preset {other:?}, expected one of {PRESETS:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::DegenerateSpec(m));
        if !(self.extent > 1.0 && self.extent.is_finite()) {
            return bad(format!("extent must exceed 1 m, got {}", self.extent));
        }
        if self.cameras == 0 || self.timestamps == 0 {
            return bad("need at least one camera and one timestamp".into());
        }
        if !(1..=MAX_PLANES).contains(&self.planes) {
            return bad(format!("planes must be between 1 and {MAX_PLANES}, got {}", self.planes));
        }
        if !(self.rotation_noise_deg >= 0.0 && self.translation_noise >= 0.0) {
            return bad("noise magnitudes must be non-negative".into());
        }
        if self.rotation_noise_deg >= 90.0 {
            return bad("rotation noise must stay below 90 degrees".into());
        }
        if self.width < 8 || self.height < 8 || !(self.focal > 0.0) {
            return bad("image must be at least 8x8 with a positive focal length".into());
        }
        if self.lidar_channels == 0 || !(self.azimuth_step_deg > 0.0) {
            return bad("LiDAR needs channels and a positive azimuth step".into());
        }
        if !(0.0..=0.05).contains(&self.pixel_noise) {
            return bad(format!("pixel noise must lie in [0, 0.05], got {}", self.pixel_noise));
        }
        Ok(())
    }
}

/// Finite rectangle `origin + a u + b v` for `a in [0, lu]`, `b in [0, lv]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub origin: Vector3<f64>,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
    pub lu: f64,
    pub lv: f64,
}

impl Rect {
    pub fn normal(&self) -> Vector3<f64> {
        self.u.cross(&self.v)
    }

    /// Signed distance of `p` from the supporting plane.
    pub fn plane_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal().dot(&(p - self.origin))
    }

    pub fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        let n = self.normal();
        let den = n.dot(d);
        if den.abs() < 1e-12 {
            return None;
        }
        let t = n.dot(&(self.origin - o)) / den;
        let q = o + d * t - self.origin;
        let (a, b) = (q.dot(&self.u), q.dot(&self.v));
        (t > 0.0 && (0.0..=self.lu).contains(&a) && (0.0..=self.lv).contains(&b)).then_some(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
}

impl Sphere {
    pub fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        let oc = o - self.center;
        let b = oc.dot(d);
        let c = oc.norm_squared() - self.radius * self.radius;
        let disc = b * b - c;
        if disc < 0.0 {
            return None;
        }
        let s = disc.sqrt();
        [-b - s, -b + s].into_iter().find(|&t| t > 0.0)
    }
}

/// Exact surfaces of a synthetic scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub planes: Vec<Rect>,
    pub spheres: Vec<Sphere>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Surface {
    Plane(usize),
    Sphere(usize),
}

impl Geometry {
    /// Nearest hit along the unit ray `o + t d`.
    pub fn raycast(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, Surface)> {
        let planes = self.planes.iter().enumerate().filter_map(|(i, p)| Some((p.intersect(o, d)?, Surface::Plane(i))));
        let spheres = self.spheres.iter().enumerate().filter_map(|(i, s)| Some((s.intersect(o, d)?, Surface::Sphere(i))));
        planes.chain(spheres).min_by(|a, b| a.0.total_cmp(&b.0))
    }
}

/// Everything a synthetic run knows.
#[derive(Clone, Debug)]
pub struct SynthScene {
    pub spec: SynthSpec,
    /// `rig` is the perturbed initial guess, `ground_truth` the true rig.
    pub dataset: Dataset,
    pub gaussians: Vec<AuxGaussian>,
    pub geometry: Geometry,
}

fn room(spec: &SynthSpec) -> Vec<Rect> {
    let e = spec.extent;
    let back = -1.5;
    let half = e / 2.0;
    let floor = -LIDAR_HEIGHT;
    let top = 1.5;
    let depth = e - back;
    let all = [
        // Back wall, facing -x.
        Rect { origin: Vector3::new(e, -half, floor), u: Vector3::y(), v: Vector3::z(), lu: e, lv: top - floor },
        // Floor, facing +z.
        Rect { origin: Vector3::new(back, -half, floor), u: Vector3::x(), v: Vector3::y(), lu: depth, lv: e },
        // Left wall (y = +half), facing -y.
        Rect { origin: Vector3::new(back, half, floor), u: Vector3::z(), v: Vector3::x(), lu: top - floor, lv: depth },
        // Right wall (y = -half), facing +y.
        Rect { origin: Vector3::new(back, -half, floor), u: Vector3::x(), v: Vector3::z(), lu: depth, lv: top - floor },
        // Ceiling, facing -z.
        Rect { origin: Vector3::new(back, -half, top), u: Vector3::y(), v: Vector3::x(), lu: e, lv: depth },
    ];
    all[..spec.planes].to_vec()
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        let n: f64 = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn random_color<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(0.05..0.95))
}

fn plane_gaussians<R: Rng + ?Sized>(rect: &Rect, spacing: f64, checker: f64, rng: &mut R) -> Vec<AuxGaussian> {
    let n = rect.normal();
    let q = Rotation::from_matrix(&Matrix3::from_columns(&[rect.u, rect.v, n])).wxyz();
    let light = random_color(rng).map(|c| 0.55 + 0.4 * c);
    let dark = random_color(rng).map(|c| 0.05 + 0.35 * c);
    let nu = (rect.lu / spacing).floor() as usize;
    let nv = (rect.lv / spacing).floor() as usize;
    let mut out = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b) = ((i as f64 + 0.5) * spacing, (j as f64 + 0.5) * spacing);
            let parity = ((a / checker).floor() as i64 + (b / checker).floor() as i64).rem_euclid(2);
            let base = if parity == 0 { light } else { dark };
            let jitter = rng.random_range(0.85..1.15);
            out.push(AuxGaussian {
                center: rect.origin + rect.u * a + rect.v * b,
                rotation: Vector4::new(q[0], q[1], q[2], q[3]),
                scale: Vector3::new(0.6 * spacing, 0.6 * spacing, 0.01 * spacing),
                color: (base * jitter).map(|c| c.clamp(0.0, 1.0)),
                opacity: 0.95,
            });
        }
    }
    out
}

/// LiDAR-to-world pose at timestamp index `t`: forward drive with a lateral
/// wobble, a heading swing of up to 30 degrees and a few degrees of pitch
/// and roll, so that a fixed extrinsic error maps to different world-frame
/// motions across frames.
pub fn lidar_pose(t: usize) -> Pose {
    let s = t as f64;
    let yaw = Rotation::from_axis_angle(&Vector3::z(), (30.0 * (0.7 * s).sin()).to_radians());
    let pitch = Rotation::from_axis_angle(&Vector3::y(), (4.0 * (1.1 * s).sin()).to_radians());
    let roll = Rotation::from_axis_angle(&Vector3::x(), (3.0 * (1.3 * s).sin()).to_radians());
    Pose::new(yaw * pitch * roll, Vector3::new(0.15 * s, 0.2 * (0.9 * s).sin(), 0.0))
}

/// Ground-truth extrinsic of camera `n`: mounted near the LiDAR, pitched down
/// 8 degrees and yawed 30 degrees further left per index.
pub fn camera_extrinsic(n: usize) -> Pose {
    // Columns: camera x, y, z axes expressed in the LiDAR frame.
    let base = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    let yaw = Rotation::from_axis_angle(&Vector3::z(), (30.0 * n as f64).to_radians()).matrix();
    let pitch = Rotation::from_axis_angle(&Vector3::y(), 8f64.to_radians()).matrix();
    let cam_to_lidar = Pose::new(
        Rotation::from_matrix(&(yaw * pitch * base)),
        Vector3::new(0.1, 0.08 * n as f64, -0.1),
    );
    cam_to_lidar.inverse()
}

pub fn camera_name(n: usize) -> String {
    format!("cam{n}")
}

/// Composes every extrinsic with a random rigid offset whose rotation angle
/// is exactly `rot_deg` and whose shift of the camera center is exactly
/// `trans` meters.
pub fn perturb_rig(rig: &CameraRig, rot_deg: f64, trans: f64, seed: u64) -> CameraRig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = rig.clone();
    for i in 0..rig.len() {
        let axis = random_unit(&mut rng);
        let dir = random_unit(&mut rng);
        if rot_deg == 0.0 && trans == 0.0 {
            continue;
        }
        let delta = Pose::new(Rotation::from_axis_angle(&axis, rot_deg.to_radians()), dir * trans);
        out.set_extrinsic(i, delta * *rig.extrinsic(i));
    }
    out
}

fn scan(geometry: &Geometry, pose: &Pose, spec: &SynthSpec) -> Vec<Vector3<f64>> {
    let steps = (360.0 / spec.azimuth_step_deg).floor() as usize;
    let channels = spec.lidar_channels;
    let (lo, hi) = (-35f64, 20f64);
    let r = pose.rotation.matrix();
    let mut points = Vec::new();
    for c in 0..channels {
        let el = if channels == 1 { 0.0 } else { lo + (hi - lo) * c as f64 / (channels - 1) as f64 }.to_radians();
        for a in 0..steps {
            let az = (a as f64 * spec.azimuth_step_deg).to_radians();
            let local = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            let d = r * local;
            if let Some((t, _)) = geometry.raycast(&pose.translation, &d) {
                points.push(local * t);
            }
        }
    }
    points
}

/// Builds the scene, scans, ground-truth rig, perturbed rig and images.
pub fn generate(spec: &SynthSpec) -> Result<SynthScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let planes = room(spec);
    let spacing = 0.05 * spec.extent / 4.0;
    let checker = 0.25 * spec.extent / 4.0;
    let mut gaussians: Vec<AuxGaussian> = Vec::new();
    for p in &planes {
        gaussians.extend(plane_gaussians(p, spacing, checker, &mut rng));
    }
    let mut spheres = Vec::with_capacity(spec.blobs);
    for _ in 0..spec.blobs {
        let p = &planes[rng.random_range(0..planes.len())];
        let s = rng.random_range(0.04..0.1) * spec.extent / 4.0;
        let center = p.origin
            + p.u * rng.random_range(0.1..0.9) * p.lu
            + p.v * rng.random_range(0.1..0.9) * p.lv
            + p.normal() * rng.random_range(2.5 * s..0.4 * spec.extent / 4.0);
        spheres.push(Sphere { center, radius: 2.0 * s });
        gaussians.push(AuxGaussian {
            center,
            rotation: Vector4::new(1.0, 0.0, 0.0, 0.0),
            scale: Vector3::repeat(s),
            color: random_color(&mut rng),
            opacity: 0.9,
        });
    }
    let geometry = Geometry { planes, spheres };
    // Checkpoints store f32, so the saved scene renders the emitted images exactly.
    let q = |v: f64| v as f32 as f64;
    for g in &mut gaussians {
        g.center = g.center.map(q);
        g.rotation = g.rotation.map(q);
        g.scale = g.scale.map(q);
        g.color = g.color.map(q);
        g.opacity = q(g.opacity);
    }

    let intrinsics = PinholeCamera {
        fx: spec.focal,
        fy: spec.focal,
        cx: (spec.width as f64 - 1.0) / 2.0,
        cy: (spec.height as f64 - 1.0) / 2.0,
        width: spec.width,
        height: spec.height,
        near: 0.1,
        far: 50.0,
    };
    let gt = CameraRig::new(
        (0..spec.cameras)
            .map(|n| RigCamera { name: camera_name(n), intrinsics, extrinsic: camera_extrinsic(n) })
            .collect(),
    )?;
    let initial = perturb_rig(&gt, spec.rotation_noise_deg, spec.translation_noise, spec.seed.wrapping_add(1));

    let mut scans = Vec::with_capacity(spec.timestamps);
    for t in 0..spec.timestamps {
        let pose = lidar_pose(t);
        let points = scan(&geometry, &pose, spec);
        if points.is_empty() {
            return Err(Error::DegenerateSpec(format!("scan {t} hit nothing")));
        }
        // Stored at the precision of the PLY format so that written datasets reload exactly.
        let points = points.into_iter().map(|p| p.map(|v| v as f32 as f64)).collect();
        scans.push(Scan { timestamp: t as f64 * 0.1, cloud: PointCloud::new(points)?, pose });
    }

    let noise = Normal::new(0.0, spec.pixel_noise.max(f64::MIN_POSITIVE)).expect("valid deviation");
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(2));
    let mut images = Vec::new();
    for n in 0..spec.cameras {
        for (t, s) in scans.iter().enumerate() {
            let cam_pose = gt.world_to_camera(n, &s.pose);
            let mut img = render_gaussians(&gaussians, &cam_pose, &intrinsics, &RenderOptions { keep_cache: false, ..Default::default() }).image;
            if spec.pixel_noise > 0.0 {
                for v in img.data_mut() {
                    *v += noise.sample(&mut noise_rng);
                }
            }
            images.push((camera_name(n), t as f64 * 0.1, img.quantized()));
        }
    }
    let dataset = Dataset::new(scans, initial, Some(gt), images)?;
    Ok(SynthScene { spec: spec.clone(), dataset, gaussians, geometry })
}

/// Training settings for the synthetic presets. These scenes are small
/// (about ten images per camera), so the voxel grid is coarser than the
/// default and the pose gate waits for more passes over the images before
/// the scene is trusted to drive the extrinsics.
pub fn synthetic_train_config() -> TrainConfig {
    TrainConfig { total_iters: 5000, voxel_constant: 40.0, min_cycles: 25, ..TrainConfig::default() }
}

/// Renders the explicit ground-truth Gaussians for one frame.
pub fn render_ground_truth(gaussians: &[AuxGaussian], dataset: &Dataset, rig: &CameraRig, frame: usize) -> ColorImage {
    let cam = rig.camera(dataset.frames[frame].camera).intrinsics;
    let pose = dataset.camera_pose(rig, frame);
    render_gaussians(gaussians, &pose, &cam, &RenderOptions { keep_cache: false, ..Default::default() }).image
}
