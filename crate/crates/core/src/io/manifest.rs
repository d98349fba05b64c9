//! Dataset manifest and rig files.
//!
//! A manifest is one JSON object:
//!
//! ```json
//! {
//!   "version": 1,
//!   "scans": [{"timestamp": 0.0, "cloud": "scans/000.ply", "pose": POSE}],
//!   "rig": {"cameras": [{"name": "cam0", "intrinsics": {...}, "extrinsic": POSE}]},
//!   "ground_truth_rig": {"cameras": [...]},
//!   "images": [{"camera": "cam0", "timestamp": 0.0, "path": "images/cam0_000.png"}]
//! }
//! ```
//!
//! A POSE is either `{"rotation_wxyz": [w, x, y, z], "translation": [x, y, z]}`
//! or 12 numbers, row-major `[R | t]`. Files are written in the quaternion
//! form, which reloads bit-for-bit; the matrix form is accepted for
//! convenience. Scan poses map the LiDAR frame at that timestamp to the
//! world frame; extrinsics map the LiDAR frame to the camera frame.
//! `ground_truth_rig` is optional. Relative paths resolve against the
//! manifest's directory. Unknown keys are errors.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Scan};
use crate::error::{Error, Result};
use crate::io::image::{read_png, write_png};
use crate::io::ply::{read_ply, write_ply};
use crate::lie::{Pose, Rotation};
use crate::raster::PinholeCamera;
use crate::rig::{CameraRig, RigCamera};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuaternionPose {
    pub rotation_wxyz: [f64; 4],
    pub translation: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoseEntry {
    Quaternion(QuaternionPose),
    RowMajor([f64; 12]),
}

impl PoseEntry {
    pub fn from_pose(p: &Pose) -> Self {
        let t = p.translation;
        PoseEntry::Quaternion(QuaternionPose { rotation_wxyz: p.rotation.wxyz(), translation: [t.x, t.y, t.z] })
    }

    /// `entry` names the owning record in error messages.
    pub fn to_pose(&self, entry: &str) -> Result<Pose> {
        match self {
            PoseEntry::RowMajor(v) => pose_from_row_major(v, entry),
            PoseEntry::Quaternion(q) => {
                let [w, x, y, z] = q.rotation_wxyz;
                if q.rotation_wxyz.iter().chain(&q.translation).any(|v| !v.is_finite()) {
                    return Err(Error::Parse(format!("{entry}: pose has non-finite entries")));
                }
                if ((w * w + x * x + y * y + z * z).sqrt() - 1.0).abs() > 1e-6 {
                    return Err(Error::Parse(format!("{entry}: rotation quaternion is not unit length")));
                }
                Ok(Pose::new(Rotation::from_stored_wxyz(w, x, y, z), Vector3::from(q.translation)))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraEntry {
    pub name: String,
    pub intrinsics: PinholeCamera,
    pub extrinsic: PoseEntry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigFile {
    pub cameras: Vec<CameraEntry>,
}

impl RigFile {
    pub fn from_rig(rig: &CameraRig) -> Self {
        RigFile {
            cameras: rig
                .cameras()
                .iter()
                .map(|c| CameraEntry { name: c.name.clone(), intrinsics: c.intrinsics, extrinsic: PoseEntry::from_pose(&c.extrinsic) })
                .collect(),
        }
    }

    pub fn to_rig(&self) -> Result<CameraRig> {
        CameraRig::new(
            self.cameras
                .iter()
                .map(|c| {
                    Ok(RigCamera { name: c.name.clone(), intrinsics: c.intrinsics, extrinsic: c.extrinsic.to_pose(&c.name)? })
                })
                .collect::<Result<Vec<_>>>()?,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanEntry {
    pub timestamp: f64,
    pub cloud: String,
    pub pose: PoseEntry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageEntry {
    pub camera: String,
    pub timestamp: f64,
    pub path: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub scans: Vec<ScanEntry>,
    pub rig: RigFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_rig: Option<RigFile>,
    pub images: Vec<ImageEntry>,
}

fn pose_from_row_major(v: &[f64; 12], entry: &str) -> Result<Pose> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parse(format!("{entry}: pose has non-finite entries")));
    }
    let pose = Pose::from_row_major(v);
    let r = pose.rotation.matrix();
    let given = nalgebra::Matrix3::from_fn(|i, j| v[i * 4 + j]);
    if (r - given).abs().max() > 1e-6 {
        return Err(Error::Parse(format!("{entry}: rotation block is not orthonormal")));
    }
    Ok(pose)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_rig(path: &Path) -> Result<CameraRig> {
    read_json::<RigFile>(path)?.to_rig()
}

pub fn write_rig(path: &Path, rig: &CameraRig) -> Result<()> {
    write_json(path, &RigFile::from_rig(rig))
}

/// One `name r00 r01 r02 t0 r10 ... t2` line per camera.
pub fn rig_to_text(rig: &CameraRig) -> String {
    rig.cameras().iter().map(|c| format!("{} {}\n", c.name, c.extrinsic.to_kitti_line())).collect()
}

fn resolve(root: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

/// Reads and validates the dataset described by the manifest at `path`.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest: Manifest = read_json(path)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Parse(format!(
            "{}: manifest version {} is not supported (expected {MANIFEST_VERSION})",
            path.display(),
            manifest.version
        )));
    }
    let root = path.parent().unwrap_or(Path::new("."));
    let scans = manifest
        .scans
        .iter()
        .map(|s| {
            Ok(Scan {
                timestamp: s.timestamp,
                cloud: read_ply(&resolve(root, &s.cloud))?,
                pose: s.pose.to_pose(&s.cloud)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rig = manifest.rig.to_rig()?;
    let ground_truth = manifest.ground_truth_rig.as_ref().map(RigFile::to_rig).transpose()?;
    let images = manifest
        .images
        .iter()
        .map(|e| Ok((e.camera.clone(), e.timestamp, read_png(&resolve(root, &e.path))?)))
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset::new(scans, rig, ground_truth, images).map_err(|e| match e {
        Error::DimensionMismatch { entry, detail } => {
            let file = manifest.images.iter().find(|i| entry == format!("{}@{}", i.camera, i.timestamp));
            let entry = file.map_or(entry, |f| f.path.clone());
            Error::DimensionMismatch { entry, detail }
        }
        other => other,
    })?;
    log::info!(
        "loaded {}: {} scans, {} cameras, {} images",
        path.display(),
        dataset.scans.len(),
        dataset.rig.len(),
        dataset.frames.len()
    );
    Ok(dataset)
}

/// Writes `dataset` under `root` as binary PLY scans, PNG images and a
/// manifest, returning the manifest path. Images are quantized to 8 bits.
pub fn write_dataset(root: &Path, dataset: &Dataset) -> Result<PathBuf> {
    for dir in ["scans", "images"] {
        let d = root.join(dir);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut scans = Vec::with_capacity(dataset.scans.len());
    for (i, s) in dataset.scans.iter().enumerate() {
        let rel = format!("scans/{i:04}.ply");
        write_ply(&root.join(&rel), &s.cloud)?;
        scans.push(ScanEntry { timestamp: s.timestamp, cloud: rel, pose: PoseEntry::from_pose(&s.pose) });
    }
    let mut images = Vec::with_capacity(dataset.frames.len());
    for (i, f) in dataset.frames.iter().enumerate() {
        let camera = dataset.rig.camera(f.camera).name.clone();
        let rel = format!("images/{camera}_{i:04}.png");
        write_png(&root.join(&rel), &f.image)?;
        images.push(ImageEntry { camera, timestamp: f.timestamp, path: rel });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        scans,
        rig: RigFile::from_rig(&dataset.rig),
        ground_truth_rig: dataset.ground_truth.as_ref().map(RigFile::from_rig),
        images,
    };
    let path = root.join(MANIFEST_NAME);
    write_json(&path, &manifest)?;
    Ok(path)
}
