//! Training, checkpoints, controllable generation, evaluation and chat.

mod chat;
mod checkpoint;
mod config;
mod eval;
mod generate;
mod text;
mod train;

pub use chat::{run_chat, ChatSession, PROMPT};
pub use checkpoint::{Checkpoint, CheckpointError, TensorEntry, MAGIC, VERSION};
pub use config::{TrainConfig, TrainMode};
pub use eval::{eval_table, generate_dialogue, predict_acts, run_eval, ActPrediction, EvalOptions, TurnOutput};
pub use generate::{ActChoice, ControlMode, Generated, GoalTracker, Responder};
pub use text::{
    build_vocab, context_sequence, context_tokens, decode_text, dialogue_examples, latent_ids, lexicalize,
    split_baseline_output, target_tokens, TaggedExample,
};
pub use train::{corpus_table, encode_table, finetune, pretrain, schema_table, TrainSummary};

use crate::act_space::ActError;
use crate::dialog_data::DataError;
use crate::eval_metrics::EvalError;
use crate::latent_policy::PolicyError;
use crate::seq_model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("holdout domain {0} reached a training batch")]
    Leak(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Act(#[from] ActError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
