//! Training-free cascaded video deblurring.
//!
//! Each cascade stage estimates optical flow between the current latent
//! frames, backward-warps the neighbours onto the centre frame, derives a
//! per-pixel temporal sharpness map from the aligned neighbours and feeds all
//! of it to a restorer. Stages repeat with a shared configuration.
//!
//! The crate also contains the forward blur simulator used to produce
//! ground truth, the PSNR/SSIM evaluation harness and the frame/flow file
//! formats.

pub mod blur;
pub mod cascade;
pub mod config;
pub mod error;
pub mod flow;
pub mod frame;
pub mod io;
pub mod metrics;
pub mod prior;
pub mod restore;
pub mod suite;
pub mod synthetic;
pub mod warp;

pub use cascade::{run_cascade, run_stage, Cascade, CascadeConfig, CascadeOutput, EstimatedFlow, FlowSource, OracleFlow, StageTrace};
pub use error::{Error, Result};
pub use flow::{estimate_flow, FlowParams};
pub use frame::{FlowField, Frame, SequenceWindow};
pub use prior::{PriorParams, SharpnessMap};
pub use restore::{FusionParams, Restorer};
pub use warp::{warp, WarpedFrame};
