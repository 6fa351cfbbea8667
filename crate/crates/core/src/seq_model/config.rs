use serde::{Deserialize, Serialize};

use super::ModelError;

/// Extents of the encoder–decoder, the policy branch and the act encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    /// Dimension of latent act vectors.
    pub d_act: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    pub n_decoder_layers: usize,
    pub n_policy_layers: usize,
    pub d_ff: usize,
    pub max_context_len: usize,
    pub max_response_len: usize,
    /// Longest act-encoder input (serialized act or proxy response).
    pub max_act_len: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 600,
            d_model: 128,
            d_act: 64,
            n_heads: 4,
            n_encoder_layers: 2,
            n_decoder_layers: 2,
            n_policy_layers: 2,
            d_ff: 256,
            max_context_len: 256,
            max_response_len: 40,
            max_act_len: 48,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let extents = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("d_act", self.d_act),
            ("n_heads", self.n_heads),
            ("n_encoder_layers", self.n_encoder_layers),
            ("n_decoder_layers", self.n_decoder_layers),
            ("n_policy_layers", self.n_policy_layers),
            ("d_ff", self.d_ff),
            ("max_context_len", self.max_context_len),
            ("max_response_len", self.max_response_len),
            ("max_act_len", self.max_act_len),
        ];
        for (name, v) in extents {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ModelError::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}
