//! LiDAR-on-image overlays for visual inspection of an extrinsic estimate.
//!
//! Depth is mapped to color with the polynomial turbo approximation below,
//! evaluated at `x = 1 - (d - d_min) / (d_max - d_min)` over the depths of
//! the drawn points, so the nearest point is dark red (`x = 1`), far points
//! are blue and the farthest (`x = 0`) is nearly black.

use nalgebra::{Vector2, Vector3};

use crate::color_image::ColorImage;
use crate::error::Result;
use crate::rig::CameraRig;
use crate::scene::PointCloud;

const TURBO_R: [f64; 6] = [0.13572138, 4.61539260, -42.66032258, 132.13108234, -152.94239396, 59.28637943];
const TURBO_G: [f64; 6] = [0.09140261, 2.19418839, 4.84296658, -14.18503333, 4.27729857, 2.82956604];
const TURBO_B: [f64; 6] = [0.10667330, 12.64194608, -60.58204836, 110.36276771, -89.90310912, 27.34824973];

fn horner(c: &[f64; 6], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, k| acc * x + k)
}

/// Turbo colormap for `x` in `[0, 1]`, clamped.
pub fn turbo(x: f64) -> Vector3<f64> {
    let x = x.clamp(0.0, 1.0);
    Vector3::new(horner(&TURBO_R, x), horner(&TURBO_G, x), horner(&TURBO_B, x)).map(|v| v.clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedPoint {
    /// Index into the input cloud.
    pub index: usize,
    pub pixel: Vector2<f64>,
    /// Camera-frame z.
    pub depth: f64,
}

#[derive(Clone, Debug)]
pub struct PointProjection {
    pub overlay: ColorImage,
    pub points: Vec<ProjectedPoint>,
    /// Points behind the camera or outside the image.
    pub skipped: usize,
}

/// Projects a LiDAR-frame cloud into camera `camera` of `rig` and paints
/// each landing point onto a copy of `image`, nearer points on top.
pub fn project_points(cloud: &PointCloud, rig: &CameraRig, camera: &str, image: &ColorImage) -> Result<PointProjection> {
    let i = rig.index_of(camera)?;
    let cam = &rig.camera(i).intrinsics;
    let extrinsic = rig.extrinsic(i);
    let mut points = Vec::new();
    let mut skipped = 0;
    for (index, p) in cloud.points().iter().enumerate() {
        let q = extrinsic.apply(p);
        match cam.project(&q).filter(|uv| cam.contains(uv)) {
            Some(pixel) => points.push(ProjectedPoint { index, pixel, depth: q.z }),
            None => skipped += 1,
        }
    }

    let mut overlay = image.clone();
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.depth), hi.max(p.depth)));
    let mut order: Vec<&ProjectedPoint> = points.iter().collect();
    order.sort_by(|a, b| b.depth.total_cmp(&a.depth));
    for p in order {
        let x = if hi > lo { 1.0 - (p.depth - lo) / (hi - lo) } else { 1.0 };
        let (u, v) = (p.pixel.x.round() as usize, p.pixel.y.round() as usize);
        if u < overlay.width() && v < overlay.height() {
            overlay.set_pixel(u, v, turbo(x));
        }
    }
    Ok(PointProjection { overlay, points, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::lie::Pose;
    use crate::raster::PinholeCamera;
    use crate::rig::RigCamera;

    fn rig() -> CameraRig {
        let intrinsics = PinholeCamera { fx: 50.0, fy: 50.0, cx: 15.5, cy: 11.5, width: 32, height: 24, near: 0.1, far: 100.0 };
        CameraRig::new(vec![RigCamera { name: "front".into(), intrinsics, extrinsic: Pose::identity() }]).unwrap()
    }

    #[test]
    fn on_axis_point_lands_on_principal_point() {
        let cloud = PointCloud::new(vec![Vector3::new(0.0, 0.0, 5.0)]).unwrap();
        let out = project_points(&cloud, &rig(), "front", &ColorImage::new(32, 24)).unwrap();
        assert_eq!(out.skipped, 0);
        assert_eq!(out.points[0].pixel, Vector2::new(15.5, 11.5));
        assert_eq!(out.points[0].depth, 5.0);
    }

    #[test]
    fn behind_and_outside_points_are_counted() {
        let cloud = PointCloud::new(vec![
            Vector3::new(0.0, 0.0, -5.0),
            Vector3::new(100.0, 0.0, 1.0),
            Vector3::new(0.1, 0.0, 2.0),
        ])
        .unwrap();
        let out = project_points(&cloud, &rig(), "front", &ColorImage::new(32, 24)).unwrap();
        assert_eq!(out.skipped, 2);
        assert_eq!(out.points.len(), 1);
        assert_eq!(out.points[0].index, 2);
    }

    #[test]
    fn near_is_red_and_far_is_blue() {
        let near = turbo(1.0);
        let far = turbo(0.1);
        assert!(near.x > near.z && near.x > 0.4);
        assert!(far.z > far.x && far.z > far.y && far.z > 0.5);
        assert!(turbo(0.0).max() < 0.15);
        let cloud = PointCloud::new(vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.0, 0.0, 9.0)]).unwrap();
        let out = project_points(&cloud, &rig(), "front", &ColorImage::new(32, 24)).unwrap();
        assert_eq!(out.overlay.pixel(16, 12), turbo(1.0));
    }

    #[test]
    fn unknown_camera() {
        let cloud = PointCloud::new(vec![Vector3::new(0.0, 0.0, 1.0)]).unwrap();
        assert!(matches!(project_points(&cloud, &rig(), "rear", &ColorImage::new(32, 24)), Err(Error::NameMismatch(_))));
    }
}
