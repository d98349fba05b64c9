//! Binary scene checkpoints.
//!
//! All integers are little-endian `u32` and all reals little-endian `f32`.
//!
//! ```text
//! offset  field
//! 0       magic "SPLATCAL" (8 bytes)
//! 8       version = 1
//! 12      kind: 1 = neural anchor scene, 2 = explicit Gaussians
//! 16      body
//! ```
//!
//! Kind 1 body: `N` anchors, feature width `F`, offspring `K`, hidden width
//! `H`, then `scene_scale`, `voxel_size`, `max_scale`, then `N * 3` centers,
//! `N * F` features, `N` log anchor scales, then the parameters of the
//! offset, covariance, color and opacity heads in that order. Each head has
//! input width `I = F + 5` and output width `O = K * w` with `w` = 3, 7, 3, 1
//! and stores `W1 (H x I), b1 (H), W2 (O x H), b2 (O)` row-major.
//!
//! Kind 2 body: count `M`, then per Gaussian 14 reals: center (3), unit
//! quaternion `w x y z` (4), scale (3), color (3), opacity (1).

use std::fs;
use std::path::Path;

use nalgebra::{Vector3, Vector4};

use crate::error::{Error, Result};
use crate::lie::Pose;
use crate::optim::forward_frame;
use crate::raster::{render_gaussians, PinholeCamera, RenderOptions};
use crate::scene::mlp::Mlp;
use crate::scene::{AuxGaussian, DecoderNet, GaussianScene, Head};
use crate::ColorImage;

pub const MAGIC: &[u8; 8] = b"SPLATCAL";
pub const VERSION: u32 = 1;
const KIND_NEURAL: u32 = 1;
const KIND_EXPLICIT: u32 = 2;
const VIEW_INPUTS: usize = 5;

/// Contents of a checkpoint file.
#[derive(Clone, Debug, PartialEq)]
pub enum SavedScene {
    Neural(GaussianScene),
    Explicit(Vec<AuxGaussian>),
}

impl SavedScene {
    pub fn render(&self, cam_pose: &Pose, cam: &PinholeCamera, opts: &RenderOptions) -> ColorImage {
        let opts = RenderOptions { keep_cache: false, ..*opts };
        match self {
            SavedScene::Neural(scene) => forward_frame(scene, cam_pose, cam, &opts).image().clone(),
            SavedScene::Explicit(g) => render_gaussians(g, cam_pose, cam, &opts).image,
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(kind: u32) -> Self {
        let mut w = Writer(MAGIC.to_vec());
        w.u32(VERSION);
        w.u32(kind);
        w
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn reals<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) {
        for v in vs {
            self.0.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
}

/// Serialized neural scene. Opacity statistics are not stored.
pub fn encode_scene(scene: &GaussianScene) -> Vec<u8> {
    let nets = scene.nets();
    let mut w = Writer::new(KIND_NEURAL);
    w.u32(scene.len() as u32);
    w.u32(nets.feature_dim() as u32);
    w.u32(nets.offspring() as u32);
    w.u32(nets.head(Head::Offset).hidden() as u32);
    w.reals(&[scene.scene_scale(), scene.voxel_size(), nets.max_scale()]);
    for c in scene.centers() {
        w.reals(c.iter());
    }
    w.reals(scene.features());
    w.reals(scene.log_scales());
    for h in Head::ALL {
        w.reals(nets.head(h).params());
    }
    w.0
}

pub fn encode_gaussians(gaussians: &[AuxGaussian]) -> Vec<u8> {
    let mut w = Writer::new(KIND_EXPLICIT);
    w.u32(gaussians.len() as u32);
    for g in gaussians {
        w.reals(g.center.iter());
        w.reals(g.rotation.iter());
        w.reals(g.scale.iter());
        w.reals(g.color.iter());
        w.reals(&[g.opacity]);
    }
    w.0
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::Parse(format!("{}: {msg}", self.path.display()))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self.bytes.get(self.at..self.at + n).ok_or_else(|| self.err("checkpoint is truncated"))?;
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn reals(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(4).ok_or_else(|| self.err("size overflow"))?;
        let b = self.take(len)?;
        let v: Vec<f64> = b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(self.err("non-finite value"));
        }
        Ok(v)
    }
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<SavedScene> {
    let mut r = Reader { bytes, at: 0, path };
    if r.take(8)? != MAGIC {
        return Err(r.err("not a checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(r.err(format!("unsupported checkpoint version {version}")));
    }
    let scene = match r.u32()? as u32 {
        KIND_NEURAL => {
            let (n, f, k, hidden) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
            let [scene_scale, voxel_size, max_scale] = r.reals(3)?[..] else { unreachable!() };
            let centers = r.reals(n * 3)?.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect();
            let features = r.reals(n * f)?;
            let log_scales = r.reals(n)?;
            let inputs = f + VIEW_INPUTS;
            let mut heads = Vec::with_capacity(4);
            for h in Head::ALL {
                let outputs = h.width() * k;
                let count = hidden * inputs + hidden + outputs * hidden + outputs;
                let params = r.reals(count)?;
                heads.push(Mlp::from_params(inputs, hidden, outputs, params).expect("length computed from shape"));
            }
            let heads: [Mlp; 4] = heads.try_into().expect("four heads");
            let nets = DecoderNet::from_heads(k, f, max_scale, heads)?;
            SavedScene::Neural(GaussianScene::from_parts(centers, features, log_scales, nets, scene_scale, voxel_size)?)
        }
        KIND_EXPLICIT => {
            let m = r.u32()?;
            let v = r.reals(m * 14)?;
            SavedScene::Explicit(
                v.chunks_exact(14)
                    .map(|g| AuxGaussian {
                        center: Vector3::new(g[0], g[1], g[2]),
                        rotation: Vector4::new(g[3], g[4], g[5], g[6]),
                        scale: Vector3::new(g[7], g[8], g[9]),
                        color: Vector3::new(g[10], g[11], g[12]),
                        opacity: g[13],
                    })
                    .collect(),
            )
        }
        other => return Err(r.err(format!("unknown checkpoint kind {other}"))),
    };
    if r.at != bytes.len() {
        return Err(r.err("trailing bytes after checkpoint body"));
    }
    Ok(scene)
}

pub fn save_scene(path: &Path, scene: &GaussianScene) -> Result<()> {
    fs::write(path, encode_scene(scene)).map_err(|e| Error::io(path, e))
}

pub fn save_gaussians(path: &Path, gaussians: &[AuxGaussian]) -> Result<()> {
    fs::write(path, encode_gaussians(gaussians)).map_err(|e| Error::io(path, e))
}

/// Missing files are reported as [`Error::MissingCheckpoint`].
pub fn load_checkpoint(path: &Path) -> Result<SavedScene> {
    let bytes = fs::read(path).map_err(|e| match Error::io(path, e) {
        Error::MissingFile(p) => Error::MissingCheckpoint(p),
        other => other,
    })?;
    decode_checkpoint(&bytes, path)
}
