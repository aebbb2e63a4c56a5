//! Episodic dataset: frame records, the chunked binary container, manifests,
//! normalization statistics and train/test splits.

mod format;
mod manifest;
mod record;

pub use format::*;
pub use manifest::*;
pub use record::*;
