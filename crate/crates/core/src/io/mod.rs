//! Files in and out: point clouds, images, float dumps, manifests, rigs,
//! checkpoints and loss histories, plus image metrics and LiDAR overlays.

pub mod checkpoint;
pub mod history;
pub mod image;
pub mod manifest;
pub mod npy;
pub mod overlay;
pub mod ply;

pub use checkpoint::{load_checkpoint, save_gaussians, save_scene, SavedScene};
pub use history::{loss_csv, write_loss_csv};
pub use image::{image_metrics, psnr, read_png, write_png};
pub use manifest::{
    load_dataset, read_json, read_rig, rig_to_text, write_dataset, write_json, write_rig, CameraEntry, ImageEntry, Manifest, PoseEntry, QuaternionPose, RigFile, ScanEntry, MANIFEST_NAME,
};
pub use npy::{read_npy, write_npy};
pub use overlay::{project_points, turbo, PointProjection, ProjectedPoint};
pub use ply::{read_ply, write_ply};
