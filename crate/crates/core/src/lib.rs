pub mod color_image;
pub mod dataset;
pub mod error;
pub mod io;
pub mod lie;
pub mod losses;
pub mod optim;
pub mod raster;
pub mod rig;
pub mod scene;
pub mod synth;

pub use color_image::ColorImage;
pub use dataset::{Dataset, Frame, Scan};
pub use error::{Error, Result};
pub use rig::{CameraRig, RigCamera};
