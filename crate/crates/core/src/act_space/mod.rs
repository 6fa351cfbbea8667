//! Dialogue acts, schemas, the act encoder and the act table.

mod act;
mod encoder;
mod schema;
mod table;

pub use act::{act_f1, ActScore, ActType, DialogueAct, DialogueActTriple, SlotArity};
pub use encoder::{act_tokens, ActEncoder, ActEncoding};
pub use schema::{ActSchema, DomainSlots, DEFAULT_CAP, DEFAULT_ENUMERATION_LIMIT};
pub use table::{nearest, ActTable, ControlFilter, Quantized};

use crate::numerics::NumericsError;
use crate::seq_model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum ActError {
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("invalid triple: {0}")]
    InvalidTriple(String),
    #[error("a dialogue act needs at least one triple")]
    Empty,
    #[error("schema: {0}")]
    Schema(String),
    #[error("schema enumerates {count} acts, over the limit of {limit}; lower cap (now {cap}) or trim slots")]
    Overflow { count: String, limit: u128, cap: usize },
    #[error("act table is empty")]
    EmptyTable,
    #[error("act table: {0}")]
    Table(String),
    #[error("expected a vector of dimension {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("unsatisfiable control filter: {0}")]
    Unsatisfiable(String),
    #[error("cannot encode empty text")]
    EmptyText,
    #[error("corpus has no labeled system turns")]
    NoLabels,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Distinct act labels in first-seen order; unlabeled turns are skipped.
pub fn extract_corpus_acts<'a>(
    labels: impl IntoIterator<Item = Option<&'a DialogueAct>>,
) -> Result<Vec<DialogueAct>, ActError> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    let mut any = false;
    for a in labels.into_iter().flatten() {
        any = true;
        if seen.insert(a) {
            out.push(a.clone());
        }
    }
    if !any {
        return Err(ActError::NoLabels);
    }
    Ok(out)
}
