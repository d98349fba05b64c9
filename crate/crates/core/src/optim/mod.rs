//! Scene and pose optimization.

pub mod adam;
pub mod config;
pub mod frame;
pub mod schedule;
pub mod trainer;

pub use adam::{pose_update, AdamParams, AdamW, PoseAdam};
pub use config::TrainConfig;
pub use frame::{backward_frame, forward_frame, frame_loss, FrameForward, FrameGradients};
pub use schedule::{schedule, Hyper, ViewSampler};
pub use trainer::{calibrate, Calibration, Checkpoint, IterationRecord, TrainState, Trainer};
