//! Synthetic dialogues, their database, delexicalization and splits.

mod corpus;
mod delex;
mod generate;
mod slots;
mod split;
mod world;

pub use corpus::{holdout_path, validate_corpus, Corpus, Dialogue, GenConfig, Goal, Split, Turn, Violation};
pub use delex::{delexicalize, placeholders, Lexicon, Span};
pub use generate::{generate_corpus, unlabeled_count};
pub use slots::{map_slots, SlotMapping};
pub use split::{split_corpus, SplitMode, Splits};
pub use world::{
    domain_noun, slot_values, world_act_types, world_schema, Entity, World, CANONICAL_SLOTS, DOMAINS, INFORMABLE,
    NAME, REQUESTABLE,
};

use crate::act_space::{ActEncoding, ActError};
use crate::numerics::Real;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error("unknown slot {0:?}")]
    UnknownSlot(String),
    #[error("domain {0} has no entities")]
    EmptyDomain(String),
    #[error("corpus config: {0}")]
    Config(String),
    #[error("corpus file: {0}")]
    Format(String),
    #[error("slot mapping: {0}")]
    Mapping(String),
    #[error(transparent)]
    Act(#[from] ActError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lexicon of every database value plus the values of the given goals.
pub fn build_lexicon<'a>(world: &World, goals: impl IntoIterator<Item = &'a Goal>) -> Lexicon {
    let mut lex = Lexicon::new();
    for (v, s) in world.lexicon_entries() {
        lex.insert(&v, &s);
    }
    for g in goals {
        for (s, v) in &g.constraints {
            lex.insert(v, s);
        }
    }
    lex
}

/// A latent act vector and whether it came from a response rather than a label.
#[derive(Clone, Debug, PartialEq)]
pub struct Latent<T> {
    pub z: Vec<T>,
    pub proxy: bool,
}

/// Encodes an unlabeled turn's delexicalized response in place of its act.
pub fn proxy_latent<T: Real>(turn: &Turn, encoding: &ActEncoding<'_, T>) -> Result<Latent<T>, DataError> {
    if turn.response.trim().is_empty() {
        return Err(ActError::EmptyText.into());
    }
    Ok(Latent {
        z: encoding.encode_text(&turn.response)?,
        proxy: true,
    })
}
