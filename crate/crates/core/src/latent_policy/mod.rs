//! Policy branch, training objective and the full latent-act model.

mod branch;
mod db;
mod loss;
mod model;
mod train;

pub use branch::{PolicyBranch, PolicyOutput};
pub use db::{db_bucket_token, DbBucket};
pub use loss::{combine, combined_loss, policy_loss, response_loss, LossWeights};
pub use model::{BatchLoss, Example, LatentActModel, LatentCache, ModelMode};
pub use train::{StepMetrics, Trainer, TrainerConfig};

use crate::act_space::ActError;
use crate::numerics::NumericsError;
use crate::seq_model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Act(#[from] ActError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("latent of dimension {expected} expected, got shape {got:?}")]
    Dimension { expected: usize, got: Vec<usize> },
    #[error("teacher-forced latent has norm {0}, expected 1")]
    NotUnit(f64),
    #[error("loss weight alpha = {0} outside [0, 1]")]
    Alpha(f64),
    #[error("empty batch")]
    EmptyBatch,
    #[error("example has no act-encoder input")]
    MissingLatent,
    #[error("non-finite training state: {0}")]
    NonFinite(String),
}
