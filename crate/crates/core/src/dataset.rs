//! In-memory calibration dataset: posed LiDAR scans, a camera rig and images.

use crate::color_image::ColorImage;
use crate::error::{Error, Result};
use crate::lie::Pose;
use crate::rig::CameraRig;
use crate::scene::{aggregate, PointCloud};

/// Image timestamps must match a scan timestamp within this many seconds.
pub const TIMESTAMP_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Scan {
    pub timestamp: f64,
    pub cloud: PointCloud,
    /// LiDAR frame at this timestamp to the world frame.
    pub pose: Pose,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    /// Index into the rig.
    pub camera: usize,
    pub timestamp: f64,
    /// Pose of the scan sharing this frame's timestamp.
    pub lidar_pose: Pose,
    pub image: ColorImage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub scans: Vec<Scan>,
    pub rig: CameraRig,
    pub ground_truth: Option<CameraRig>,
    pub frames: Vec<Frame>,
}

impl Dataset {
    /// Builds frames from `(camera name, timestamp, image)` triples, checking
    /// names, image sizes and timestamps.
    pub fn new(
        scans: Vec<Scan>,
        rig: CameraRig,
        ground_truth: Option<CameraRig>,
        images: Vec<(String, f64, ColorImage)>,
    ) -> Result<Self> {
        if scans.is_empty() {
            return Err(Error::EmptyInput("dataset has no LiDAR scans".into()));
        }
        if images.is_empty() {
            return Err(Error::EmptyInput("dataset has no images".into()));
        }
        if let Some(gt) = &ground_truth {
            crate::rig::pose_errors(&rig, gt)?;
        }
        let frames = images
            .into_iter()
            .map(|(name, timestamp, image)| {
                let camera = rig.index_of(&name)?;
                let k = &rig.camera(camera).intrinsics;
                if image.width() != k.width || image.height() != k.height {
                    return Err(Error::DimensionMismatch {
                        entry: format!("{name}@{timestamp}"),
                        detail: format!(
                            "image is {}x{} but intrinsics declare {}x{}",
                            image.width(),
                            image.height(),
                            k.width,
                            k.height
                        ),
                    });
                }
                let scan = scans
                    .iter()
                    .find(|s| (s.timestamp - timestamp).abs() <= TIMESTAMP_TOLERANCE)
                    .ok_or_else(|| Error::TimestampGap(format!("image {name}@{timestamp} has no LiDAR scan")))?;
                Ok(Frame { camera, timestamp, lidar_pose: scan.pose, image })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { scans, rig, ground_truth, frames })
    }

    /// All scans in the world frame.
    pub fn aggregated_cloud(&self) -> Result<PointCloud> {
        let pairs: Vec<(PointCloud, Pose)> = self.scans.iter().map(|s| (s.cloud.clone(), s.pose)).collect();
        aggregate(&pairs)
    }

    /// World-to-camera pose of `frame` under `rig`.
    pub fn camera_pose(&self, rig: &CameraRig, frame: usize) -> Pose {
        let f = &self.frames[frame];
        rig.world_to_camera(f.camera, &f.lidar_pose)
    }
}
