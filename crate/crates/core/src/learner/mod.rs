//! Convolution-attention target head, behavior-cloning action head, their
//! joint training loop and offline metrics.

mod bc;
mod cap;
mod checkpoint;
mod grid;
mod metrics;
mod policy;
mod train;

pub use bc::{BcConfig, BcHead, BcTrace};
pub use cap::*;
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, TAG_PARAMS};
pub use grid::{TokenGrid, EYE_CHANNELS, GRID_CELLS, GRID_CHANNELS};
pub use metrics::{e_action, e_target, mean_label, TargetPart};
pub use policy::LearnedPolicy;
pub use train::*;

use crate::dataset::DatasetError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("token grid has no valid cells")]
    NoValidCells,
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("training diverged at step {step} (loss {loss}): {detail}")]
    Diverged { step: usize, loss: f64, detail: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}
