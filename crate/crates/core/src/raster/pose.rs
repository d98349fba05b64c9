//! Tangent-space gradient of the loss with respect to a world-to-camera pose
//! under left perturbation `T <- exp(xi) T`, `xi = (rho, phi)`.
//!
//! Three paths carry pose dependence:
//! * the camera-frame mean, through the projected center;
//! * the projected covariance, through both the projection Jacobian (which
//!   depends on the camera-frame mean) and the rotated 3D covariance;
//! * the camera center fed to the decoder. The center `o = -R^T t` moves as
//!   `do/drho = -R^T`, `do/dphi = 0`.

use nalgebra::{Matrix3, Vector3};

use super::project::{ProjectGrad, ProjectionCache};
use crate::lie::{hat, Pose, Twist};

/// Pose gradient split by the path it came through.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseGradient {
    pub mean: Twist,
    pub covariance: Twist,
    /// Camera-center gradient flowing through the color head.
    pub view_color: Twist,
    /// Camera-center gradient flowing through the offset, covariance and opacity heads.
    pub view_geometry: Twist,
}

impl Default for PoseGradient {
    fn default() -> Self {
        Self { mean: Twist::zero(), covariance: Twist::zero(), view_color: Twist::zero(), view_geometry: Twist::zero() }
    }
}

impl PoseGradient {
    pub fn total(&self) -> Twist {
        self.mean + self.covariance + self.view_color + self.view_geometry
    }

    pub fn add(&mut self, o: &PoseGradient) {
        self.mean += o.mean;
        self.covariance += o.covariance;
        self.view_color += o.view_color;
        self.view_geometry += o.view_geometry;
    }
}

fn point_twist(p: &Vector3<f64>, g: &Vector3<f64>) -> Twist {
    Twist::new(*g, p.cross(g))
}

/// Mean and covariance contributions of one projected Gaussian.
pub fn splat_pose_gradient(cache: &ProjectionCache, grad: &ProjectGrad) -> (Twist, Twist) {
    let p = &cache.cam_mean;
    let mean = point_twist(p, &grad.cam_mean_from_center);
    let mut cov = point_twist(p, &grad.cam_mean_from_jacobian);
    let g = (grad.cam_cov + grad.cam_cov.transpose()) * 0.5;
    for k in 0..3 {
        let rotated: Matrix3<f64> = hat(&Vector3::ith(k, 1.0)) * cache.cam_cov;
        cov.phi[k] += 2.0 * g.component_mul(&rotated).sum();
    }
    (mean, cov)
}

/// Contribution of a gradient on the world-frame camera center.
pub fn view_pose_gradient(cam_pose: &Pose, d_center: &Vector3<f64>) -> Twist {
    Twist::new(-(cam_pose.rotation.matrix() * d_center), Vector3::zeros())
}

/// Sums every path for a set of visible splats and the decoder's
/// camera-center gradients.
pub fn pose_backward<'a>(
    cam_pose: &Pose,
    splats: impl IntoIterator<Item = (&'a ProjectionCache, &'a ProjectGrad)>,
    d_center_color: &Vector3<f64>,
    d_center_geometry: &Vector3<f64>,
) -> PoseGradient {
    let mut out = PoseGradient::default();
    for (cache, grad) in splats {
        let (m, c) = splat_pose_gradient(cache, grad);
        out.mean += m;
        out.covariance += c;
    }
    out.view_color = view_pose_gradient(cam_pose, d_center_color);
    out.view_geometry = view_pose_gradient(cam_pose, d_center_geometry);
    out
}
