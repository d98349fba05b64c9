//! Differentiable splatting: projection, tiled blending, and the reverse
//! passes down to camera-pose gradients.

pub mod pose;
pub mod project;
pub mod render;

pub use pose::{pose_backward, splat_pose_gradient, view_pose_gradient, PoseGradient};
pub use project::{
    project, project_backward, PinholeCamera, ProjectGrad, Projection, ProjectionCache, Splat2D, SplatGrad,
    COVARIANCE_BLUR, SUPPORT_SIGMAS,
};
pub use render::{depth_order, render, render_backward, RenderOptions, RenderPacket, MIN_TRANSMITTANCE, TILE_SIZE};

use crate::lie::Pose;
use crate::scene::AuxGaussian;

/// Projects and renders an explicit list of Gaussians.
pub fn render_gaussians(gaussians: &[AuxGaussian], cam_pose: &Pose, cam: &PinholeCamera, opts: &RenderOptions) -> RenderPacket {
    let splats: Vec<Splat2D> = gaussians.iter().filter_map(|g| project(g, cam_pose, cam).splat().copied()).collect();
    render(&splats, cam, opts)
}
