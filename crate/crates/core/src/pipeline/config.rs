use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::latent_policy::{LossWeights, ModelMode};
use crate::seq_model::ModelConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainMode {
    Pretrain,
    Finetune,
    FewShot(usize),
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainMode::Pretrain => f.write_str("pretrain"),
            TrainMode::Finetune => f.write_str("finetune"),
            TrainMode::FewShot(k) => write!(f, "fewshot({k})"),
        }
    }
}

impl FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pretrain" => Ok(TrainMode::Pretrain),
            "finetune" => Ok(TrainMode::Finetune),
            _ => {
                let k = s
                    .strip_prefix("fewshot(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| format!("unknown mode {s:?}; expected pretrain, finetune or fewshot(k)"))?;
                let k: usize = k.parse().map_err(|_| format!("bad few-shot size {k:?}"))?;
                Ok(TrainMode::FewShot(k))
            }
        }
    }
}

/// Training hyperparameters and model extents, read from flat `key = value` text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub alpha: f64,
    pub lr: f64,
    pub warmup: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub freeze_act_encoder: bool,
    pub baseline_concat: bool,
    /// Train only on dialogues that carry act labels.
    pub labeled_only: bool,
    pub seed: u64,
    pub clip_norm: f64,
    /// Steps between validation passes; 0 disables them.
    pub val_every: usize,
    pub val_examples: usize,
    pub finetune_steps: usize,
    pub finetune_lr: f64,
    pub d_model: usize,
    pub d_act: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    pub n_decoder_layers: usize,
    pub n_policy_layers: usize,
    pub d_ff: usize,
    pub max_context_len: usize,
    pub max_response_len: usize,
    pub max_act_len: usize,
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Pretrain,
            alpha: 0.5,
            lr: 2e-3,
            warmup: 50,
            batch_size: 16,
            steps: 1500,
            freeze_act_encoder: true,
            baseline_concat: false,
            labeled_only: false,
            seed: 0,
            clip_norm: 1.0,
            val_every: 250,
            val_examples: 64,
            finetune_steps: 300,
            finetune_lr: 5e-4,
            d_model: 64,
            d_act: 32,
            n_heads: 4,
            n_encoder_layers: 2,
            n_decoder_layers: 2,
            n_policy_layers: 1,
            d_ff: 128,
            max_context_len: 64,
            max_response_len: 32,
            max_act_len: 24,
            dropout: 0.1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("bad value {value:?} for {key}"))
}

impl TrainConfig {
    pub fn from_text(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = TrainConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| PipelineError::Config { line: n + 1, message };
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(bad(format!("duplicate key {k}")));
            }
            cfg.set(k, v).map_err(bad)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        TrainConfig::from_text(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, k: &str, v: &str) -> Result<(), String> {
        match k {
            "mode" => self.mode = v.parse()?,
            "alpha" => self.alpha = parse(k, v)?,
            "lr" => self.lr = parse(k, v)?,
            "warmup" => self.warmup = parse(k, v)?,
            "batch_size" => self.batch_size = parse(k, v)?,
            "steps" => self.steps = parse(k, v)?,
            "freeze_act_encoder" => self.freeze_act_encoder = parse(k, v)?,
            "baseline_concat" => self.baseline_concat = parse(k, v)?,
            "labeled_only" => self.labeled_only = parse(k, v)?,
            "seed" => self.seed = parse(k, v)?,
            "clip_norm" => self.clip_norm = parse(k, v)?,
            "val_every" => self.val_every = parse(k, v)?,
            "val_examples" => self.val_examples = parse(k, v)?,
            "finetune_steps" => self.finetune_steps = parse(k, v)?,
            "finetune_lr" => self.finetune_lr = parse(k, v)?,
            "d_model" => self.d_model = parse(k, v)?,
            "d_act" => self.d_act = parse(k, v)?,
            "n_heads" => self.n_heads = parse(k, v)?,
            "n_encoder_layers" => self.n_encoder_layers = parse(k, v)?,
            "n_decoder_layers" => self.n_decoder_layers = parse(k, v)?,
            "n_policy_layers" => self.n_policy_layers = parse(k, v)?,
            "d_ff" => self.d_ff = parse(k, v)?,
            "max_context_len" => self.max_context_len = parse(k, v)?,
            "max_response_len" => self.max_response_len = parse(k, v)?,
            "max_act_len" => self.max_act_len = parse(k, v)?,
            "dropout" => self.dropout = parse(k, v)?,
            _ => return Err(format!("unknown key {k}")),
        }
        Ok(())
    }

    /// Every key, one per line; `from_text` reads it back unchanged.
    pub fn to_text(&self) -> String {
        let json = serde_json::to_value(self).expect("config serializes");
        let mut out = String::new();
        for (k, v) in json.as_object().expect("config is an object") {
            let v = match k.as_str() {
                "mode" => self.mode.to_string(),
                _ => v.to_string(),
            };
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Invalid(m));
        if let TrainMode::FewShot(0) = self.mode {
            return bad("few-shot size must be at least 1".into());
        }
        LossWeights::new(self.alpha).map_err(|e| PipelineError::Invalid(e.to_string()))?;
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr > 0.0 && self.finetune_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        self.model_config(1).validate()?;
        Ok(())
    }

    pub fn model_mode(&self) -> ModelMode {
        if self.baseline_concat {
            ModelMode::BaselineConcat
        } else {
            ModelMode::Latent
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d_model: self.d_model,
            d_act: self.d_act,
            n_heads: self.n_heads,
            n_encoder_layers: self.n_encoder_layers,
            n_decoder_layers: self.n_decoder_layers,
            n_policy_layers: self.n_policy_layers,
            d_ff: self.d_ff,
            max_context_len: self.max_context_len,
            max_response_len: self.max_response_len,
            max_act_len: self.max_act_len,
            dropout: self.dropout,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let cfg = TrainConfig {
            mode: TrainMode::FewShot(50),
            alpha: 0.25,
            baseline_concat: true,
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_duplicate_and_invalid() {
        assert!(TrainConfig::from_text("# comment\nsteps = 10\n\nalpha=1").is_ok());
        let e = TrainConfig::from_text("steps = 10\nbogus = 1").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("bogus"), "{e}");
        assert!(TrainConfig::from_text("steps = 1\nsteps = 2").is_err());
        assert!(TrainConfig::from_text("alpha = 1.5").is_err());
        assert!(TrainConfig::from_text("mode = fewshot(0)").is_err());
        assert!(TrainConfig::from_text("steps = many").is_err());
        assert!(TrainConfig::from_text("d_model = 30\nn_heads = 4").is_err());
    }
}
