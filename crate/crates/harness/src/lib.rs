//! Command implementations behind the `aquasim` binary. Each command is a
//! plain function so tests can drive it without spawning processes.

mod config;
mod evaluate;
mod export;
mod generate;
mod report;
mod training;

pub use config::*;
pub use evaluate::*;
pub use export::*;
pub use generate::*;
pub use report::Table;
pub use training::*;

use aquasim::dataset::{checksum, DatasetError};
use aquasim::learner::LearnerError;
use aquasim::tasks::RolloutError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Internal(String),
}

impl HarnessError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        HarnessError::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code: 1 validation failure, 2 usage, 3 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 1,
            HarnessError::Usage(_) | HarnessError::Config(_) => 2,
            _ => 3,
        }
    }
}

pub const EXIT_OK: i32 = 0;

/// Seed of one episode. Depends only on the global seed, the task id and
/// the episode's index within its task, so adding tasks or episodes never
/// changes existing ones.
pub fn episode_seed(global: u64, task_id: &str, index: usize) -> u64 {
    let mut bytes = Vec::with_capacity(16 + task_id.len() + 1);
    bytes.extend_from_slice(&global.to_le_bytes());
    bytes.extend_from_slice(task_id.as_bytes());
    bytes.push(0);
    bytes.extend_from_slice(&(index as u64).to_le_bytes());
    checksum(&bytes)
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool, HarnessError> {
    if workers == 0 {
        return Err(HarnessError::Usage("--workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Internal(format!("thread pool: {e}")))
}
