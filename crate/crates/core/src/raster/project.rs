//! EWA projection of 3D Gaussians into 2D image-plane Gaussians.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::Pose;
use crate::scene::AuxGaussian;

/// Added to the diagonal of every projected covariance, in pixels squared.
pub const COVARIANCE_BLUR: f64 = 0.3;

/// Footprint radius in standard deviations; contributions vanish beyond it.
pub const SUPPORT_SIGMAS: f64 = 3.0;

/// Pinhole intrinsics. Pixel `(u, v)` has its center at image coordinates
/// `(u, v)`, so the principal point of a 100-pixel wide image centered on
/// the optical axis is 49.5.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

impl PinholeCamera {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config(format!("focal lengths must be positive: fx={} fy={}", self.fx, self.fy)));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::Config(format!("need 0 < near < far, got near={} far={}", self.near, self.far)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image size must be non-zero".into()));
        }
        Ok(())
    }

    /// Projects a camera-frame point; `None` when it is not in front of the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        (p.z > 0.0).then(|| Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    pub fn contains(&self, uv: &Vector2<f64>) -> bool {
        uv.x >= -0.5 && uv.y >= -0.5 && uv.x < self.width as f64 - 0.5 && uv.y < self.height as f64 - 0.5
    }

    /// Jacobian of the perspective projection at camera-frame point `p`.
    pub fn projection_jacobian(&self, p: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / p.z;
        let iz2 = iz * iz;
        Matrix2x3::new(self.fx * iz, 0.0, -self.fx * p.x * iz2, 0.0, self.fy * iz, -self.fy * p.y * iz2)
    }
}

/// A Gaussian on the image plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Splat2D {
    pub mean: Vector2<f64>,
    /// Projected covariance including [`COVARIANCE_BLUR`].
    pub cov: Matrix2<f64>,
    pub color: Vector3<f64>,
    pub opacity: f64,
    /// Camera-frame depth of the 3D center.
    pub depth: f64,
}

/// Intermediates of [`project`] needed by the backward passes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionCache {
    pub cam_mean: Vector3<f64>,
    pub cam_cov: Matrix3<f64>,
    pub jacobian: Matrix2x3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Projection {
    Visible(Splat2D, ProjectionCache),
    Culled,
}

impl Projection {
    pub fn splat(&self) -> Option<&Splat2D> {
        match self {
            Projection::Visible(s, _) => Some(s),
            Projection::Culled => None,
        }
    }
}

/// Projects `g` through the world-to-camera pose `cam_pose`.
///
/// Culled when the center is not strictly between the near and far planes or
/// when the projected center lies farther than 3 sigma outside the image.
pub fn project(g: &AuxGaussian, cam_pose: &Pose, cam: &PinholeCamera) -> Projection {
    let r = cam_pose.rotation.matrix();
    let cam_mean = r * g.center + cam_pose.translation;
    if cam_mean.z <= cam.near || cam_mean.z >= cam.far {
        return Projection::Culled;
    }
    let jacobian = cam.projection_jacobian(&cam_mean);
    let cam_cov = r * g.covariance() * r.transpose();
    let cov = jacobian * cam_cov * jacobian.transpose() + Matrix2::identity() * COVARIANCE_BLUR;
    let cov = (cov + cov.transpose()) * 0.5;
    let mean = Vector2::new(
        cam.fx * cam_mean.x / cam_mean.z + cam.cx,
        cam.fy * cam_mean.y / cam_mean.z + cam.cy,
    );
    let margin = SUPPORT_SIGMAS * max_eigenvalue(&cov).sqrt();
    if mean.x < -margin
        || mean.y < -margin
        || mean.x > (cam.width - 1) as f64 + margin
        || mean.y > (cam.height - 1) as f64 + margin
    {
        return Projection::Culled;
    }
    Projection::Visible(
        Splat2D { mean, cov, color: g.color, opacity: g.opacity, depth: cam_mean.z },
        ProjectionCache { cam_mean, cam_cov, jacobian },
    )
}

pub(crate) fn max_eigenvalue(m: &Matrix2<f64>) -> f64 {
    let mid = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    mid + (mid * mid - det).max(0.0).sqrt()
}

/// Gradient on one splat's differentiable attributes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplatGrad {
    pub mean: Vector2<f64>,
    /// Symmetric gradient on the projected covariance: `dL = <cov, dSigma>`.
    pub cov: Matrix2<f64>,
    pub color: Vector3<f64>,
    pub opacity: f64,
}

impl Default for SplatGrad {
    fn default() -> Self {
        Self { mean: Vector2::zeros(), cov: Matrix2::zeros(), color: Vector3::zeros(), opacity: 0.0 }
    }
}

impl SplatGrad {
    pub fn add(&mut self, o: &SplatGrad) {
        self.mean += o.mean;
        self.cov += o.cov;
        self.color += o.color;
        self.opacity += o.opacity;
    }
}

/// Gradients of [`project`] with the camera-frame mean gradient kept apart by
/// the path it came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectGrad {
    /// Through the projected center.
    pub cam_mean_from_center: Vector3<f64>,
    /// Through the projection Jacobian inside the 2D covariance.
    pub cam_mean_from_jacobian: Vector3<f64>,
    pub cam_cov: Matrix3<f64>,
    pub world_mean: Vector3<f64>,
    pub world_cov: Matrix3<f64>,
}

pub fn project_backward(cache: &ProjectionCache, cam_pose: &Pose, cam: &PinholeCamera, grad: &SplatGrad) -> ProjectGrad {
    let r = cam_pose.rotation.matrix();
    let j = &cache.jacobian;
    let p = &cache.cam_mean;
    let g2 = (grad.cov + grad.cov.transpose()) * 0.5;

    let cam_mean_from_center = j.transpose() * grad.mean;

    let dj = g2 * j * cache.cam_cov * 2.0;
    let iz = 1.0 / p.z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let cam_mean_from_jacobian = Vector3::new(
        -cam.fx * iz2 * dj[(0, 2)],
        -cam.fy * iz2 * dj[(1, 2)],
        -cam.fx * iz2 * dj[(0, 0)] + 2.0 * cam.fx * p.x * iz3 * dj[(0, 2)] - cam.fy * iz2 * dj[(1, 1)]
            + 2.0 * cam.fy * p.y * iz3 * dj[(1, 2)],
    );
    let cam_cov = j.transpose() * g2 * j;
    ProjectGrad {
        cam_mean_from_center,
        cam_mean_from_jacobian,
        cam_cov,
        world_mean: r.transpose() * (cam_mean_from_center + cam_mean_from_jacobian),
        world_cov: r.transpose() * cam_cov * r,
    }
}
