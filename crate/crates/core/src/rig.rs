//! Multi-camera rig: intrinsics plus one LiDAR-to-camera extrinsic per camera.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::lie::{rotation_distance, Pose};
use crate::raster::PinholeCamera;

#[derive(Clone, Debug, PartialEq)]
pub struct RigCamera {
    pub name: String,
    pub intrinsics: PinholeCamera,
    /// Maps LiDAR-frame points into this camera's frame.
    pub extrinsic: Pose,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraRig {
    cameras: Vec<RigCamera>,
}

impl CameraRig {
    /// At least one camera, unique names, valid intrinsics.
    pub fn new(cameras: Vec<RigCamera>) -> Result<Self> {
        if cameras.is_empty() {
            return Err(Error::EmptyInput("camera rig has no cameras".into()));
        }
        let mut seen = HashSet::new();
        for c in &cameras {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::NameMismatch(format!("duplicate camera name {:?}", c.name)));
            }
            c.intrinsics.validate()?;
        }
        Ok(Self { cameras })
    }

    pub fn cameras(&self) -> &[RigCamera] {
        &self.cameras
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn camera(&self, i: usize) -> &RigCamera {
        &self.cameras[i]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.cameras
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::NameMismatch(format!("no camera named {name:?} in the rig")))
    }

    pub fn extrinsic(&self, i: usize) -> &Pose {
        &self.cameras[i].extrinsic
    }

    pub fn set_extrinsic(&mut self, i: usize, pose: Pose) {
        self.cameras[i].extrinsic = pose;
    }

    /// World-to-camera pose of camera `i` when the LiDAR sits at `lidar_pose`
    /// (LiDAR frame to world).
    pub fn world_to_camera(&self, i: usize, lidar_pose: &Pose) -> Pose {
        self.cameras[i].extrinsic * lidar_pose.inverse()
    }
}

/// Rotation error in degrees and distance between camera centers expressed
/// in the LiDAR frame, for two extrinsics of the same camera.
pub fn extrinsic_error(estimated: &Pose, reference: &Pose) -> (f64, f64) {
    if estimated == reference {
        return (0.0, 0.0);
    }
    let rot = rotation_distance(&estimated.rotation, &reference.rotation).to_degrees();
    let trans = (estimated.center() - reference.center()).norm();
    (rot, trans)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseError {
    pub camera: String,
    pub rotation_deg: f64,
    pub translation_m: f64,
}

/// Per-camera errors of `estimated` against `reference`, in the order of
/// `estimated`. Both rigs must hold the same camera names.
pub fn pose_errors(estimated: &CameraRig, reference: &CameraRig) -> Result<Vec<PoseError>> {
    if estimated.len() != reference.len() {
        return Err(Error::NameMismatch(format!(
            "rigs have {} and {} cameras",
            estimated.len(),
            reference.len()
        )));
    }
    estimated
        .cameras()
        .iter()
        .map(|c| {
            let r = reference.index_of(&c.name)?;
            let (rotation_deg, translation_m) = extrinsic_error(&c.extrinsic, reference.extrinsic(r));
            Ok(PoseError { camera: c.name.clone(), rotation_deg, translation_m })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{exp, Rotation, Twist};
    use nalgebra::Vector3;

    fn cam() -> PinholeCamera {
        PinholeCamera { fx: 100.0, fy: 100.0, cx: 50.0, cy: 50.0, width: 100, height: 100, near: 0.1, far: 100.0 }
    }

    fn rig(poses: &[Pose]) -> CameraRig {
        CameraRig::new(
            poses
                .iter()
                .enumerate()
                .map(|(i, p)| RigCamera { name: format!("cam{i}"), intrinsics: cam(), extrinsic: *p })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_rigs_have_zero_error() {
        let r = rig(&[exp(&Twist::from_array([0.1, 0.2, 0.3, 0.1, -0.2, 0.3]))]);
        let e = pose_errors(&r, &r).unwrap();
        assert_eq!(e[0].rotation_deg, 0.0);
        assert_eq!(e[0].translation_m, 0.0);
    }

    #[test]
    fn yaw_offset() {
        let a = rig(&[Pose::identity()]);
        let b = rig(&[Pose::new(Rotation::from_axis_angle(&Vector3::z(), 10f64.to_radians()), Vector3::zeros())]);
        let e = pose_errors(&b, &a).unwrap();
        assert!((e[0].rotation_deg - 10.0).abs() < 1e-10);
        assert!(e[0].translation_m < 1e-15);
    }

    #[test]
    fn small_perturbation_matches_angle() {
        let base = exp(&Twist::from_array([0.3, -0.1, 0.2, 0.4, 0.1, -0.2]));
        let phi = Vector3::new(0.006, -0.008, 0.0);
        let p = exp(&Twist::new(Vector3::zeros(), phi)) * base;
        let (rot, _) = extrinsic_error(&p, &base);
        assert!((rot.to_radians() - phi.norm()).abs() < 1e-6);
    }

    #[test]
    fn name_and_count_mismatch() {
        let a = rig(&[Pose::identity()]);
        let b = rig(&[Pose::identity(), Pose::identity()]);
        assert!(matches!(pose_errors(&a, &b), Err(Error::NameMismatch(_))));
        let mut c = a.clone();
        c.cameras[0].name = "other".into();
        assert!(matches!(pose_errors(&a, &c), Err(Error::NameMismatch(_))));
    }

    #[test]
    fn duplicate_names_rejected() {
        let c = RigCamera { name: "a".into(), intrinsics: cam(), extrinsic: Pose::identity() };
        assert!(CameraRig::new(vec![c.clone(), c]).is_err());
    }
}
