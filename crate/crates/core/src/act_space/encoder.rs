use rand::Rng;

use super::{ActError, DialogueAct};
use crate::numerics::{Graph, ParamId, ParamStore, Real, Var};
use crate::seq_model::layers::{EncoderBlock, LayerNorm, Linear};
use crate::seq_model::{Dropout, Embeddings, ModelConfig, Vocab};

/// Lowercased words with square brackets removed, so `[area]` and `area`
/// map to the same token.
pub fn act_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c| c == '[' || c == ']').to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Token embeddings, one self-attention block, mean pooling and a
/// projection to the latent act dimension.
#[derive(Clone, Debug)]
pub struct ActEncoder {
    pub embed: Embeddings,
    pub block: EncoderBlock,
    pub ln_final: LayerNorm,
    pub proj: Linear,
    pub max_len: usize,
}

impl ActEncoder {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut R) -> Self {
        let d = cfg.d_model;
        ActEncoder {
            embed: Embeddings::new(store, "act_encoder.embed", cfg.vocab_size, cfg.max_act_len, d, rng),
            block: EncoderBlock::new(store, "act_encoder.block", d, cfg.n_heads, cfg.d_ff, rng),
            ln_final: LayerNorm::new(store, "act_encoder.ln_final", d, rng),
            proj: Linear::new(store, "act_encoder.proj", d, cfg.d_act, rng),
            max_len: cfg.max_act_len,
        }
    }

    /// Token ids for `text`, truncated to the encoder's maximum length.
    pub fn token_ids(&self, vocab: &Vocab, text: &str) -> Result<Vec<usize>, ActError> {
        let mut ids: Vec<usize> = act_tokens(text).iter().map(|w| vocab.id(w)).collect();
        if ids.is_empty() {
            return Err(ActError::EmptyText);
        }
        ids.truncate(self.max_len);
        Ok(ids)
    }

    /// Unit-norm latent of shape `[1, d_act]`.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, ids: &[usize]) -> Result<Var, ActError> {
        if ids.is_empty() {
            return Err(ActError::EmptyText);
        }
        let x = self.embed.forward(g, store, ids)?;
        let x = self.block.forward(g, store, x, None, &mut Dropout::off())?;
        let x = self.ln_final.forward(g, store, x)?;
        let pooled = g.mean_rows(x)?;
        let z = self.proj.forward(g, store, pooled)?;
        Ok(g.normalize_rows(z)?)
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.embed.params();
        p.extend(self.block.params());
        p.extend(self.ln_final.params());
        p.extend(self.proj.params());
        p
    }
}

/// An act encoder bound to its parameters and vocabulary, evaluated
/// without recording gradients.
pub struct ActEncoding<'a, T> {
    pub encoder: &'a ActEncoder,
    pub store: &'a ParamStore<T>,
    pub vocab: &'a Vocab,
}

impl<T: Real> ActEncoding<'_, T> {
    pub fn encode_text(&self, text: &str) -> Result<Vec<T>, ActError> {
        let ids = self.encoder.token_ids(self.vocab, text)?;
        let mut g = Graph::no_grad();
        let z = self.encoder.forward(&mut g, self.store, &ids)?;
        Ok(g.value(z).data().to_vec())
    }

    /// Encodes the canonical serialization of `act`.
    pub fn encode_act(&self, act: &DialogueAct) -> Result<Vec<T>, ActError> {
        self.encode_text(&act.serialize())
    }
}
