use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{combined_loss, policy_loss, sum_all};
use super::{DbBucket, LossWeights, PolicyBranch, PolicyError};
use crate::act_space::ActEncoder;
use crate::numerics::{Graph, ParamId, ParamStore, Real, Tensor, Var};
use crate::seq_model::{decode_greedy, Decoder, Dropout, Encoder, ModelConfig, TokenSequence};

type Result<T> = std::result::Result<T, PolicyError>;

/// Latents of frozen act-encoder inputs, keyed by token ids.
pub type LatentCache<T> = HashMap<Vec<usize>, Vec<T>>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    /// Policy branch conditions the decoder on a latent act.
    #[default]
    Latent,
    /// No policy branch; act tokens are generated in front of the response.
    BaselineConcat,
}

/// One system turn prepared for training.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub context: TokenSequence,
    pub db: DbBucket,
    /// Decoder output tokens without `<bos>`/`<eos>`.
    pub target: Vec<usize>,
    /// Act-encoder input: a serialized act, or the response itself for
    /// unlabeled turns. Unused in baseline mode.
    pub latent_ids: Option<Vec<usize>>,
    pub proxy: bool,
}

/// Differentiable loss terms of one batch.
#[derive(Clone, Copy, Debug)]
pub struct BatchLoss {
    pub total: Var,
    pub policy: Option<Var>,
    pub response: Var,
}

#[derive(Clone, Debug)]
pub struct LatentActModel {
    pub config: ModelConfig,
    pub mode: ModelMode,
    pub encoder: Encoder,
    pub policy: PolicyBranch,
    pub decoder: Decoder,
    pub act_encoder: ActEncoder,
}

impl LatentActModel {
    /// Registers all parameters in `store`. Creation order is fixed so
    /// that equal seeds give equal models.
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, config: ModelConfig, mode: ModelMode, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let encoder = Encoder::new(store, &config, rng);
        let policy = PolicyBranch::new(store, &config, rng);
        let decoder = Decoder::new(store, &config, rng);
        let act_encoder = ActEncoder::new(store, &config, rng);
        Ok(LatentActModel { config, mode, encoder, policy, decoder, act_encoder })
    }

    pub fn encoder_params(&self) -> Vec<ParamId> {
        self.encoder.params()
    }

    pub fn policy_params(&self) -> Vec<ParamId> {
        self.policy.params()
    }

    pub fn decoder_params(&self) -> Vec<ParamId> {
        self.decoder.params()
    }

    pub fn act_encoder_params(&self) -> Vec<ParamId> {
        self.act_encoder.params()
    }

    /// Latent for `ids`, from `cache` when present there, else computed on `g`.
    pub fn latent<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        ids: &[usize],
        cache: Option<&LatentCache<T>>,
    ) -> Result<Var> {
        if let Some(z) = cache.and_then(|c| c.get(ids)) {
            return Ok(g.constant(Tensor::new(vec![1, z.len()], z.clone())?));
        }
        Ok(self.act_encoder.forward(g, store, ids)?)
    }

    /// Latent of `ids` as plain values.
    pub fn encode_latent<T: Real>(&self, store: &ParamStore<T>, ids: &[usize]) -> Result<Vec<T>> {
        let mut g = Graph::no_grad();
        let z = self.act_encoder.forward(&mut g, store, ids)?;
        Ok(g.value(z).data().to_vec())
    }

    fn decoder_io(&self, target: &[usize], bos: usize, eos: usize) -> (Vec<usize>, Vec<Option<usize>>) {
        let target = &target[..target.len().min(self.config.max_response_len)];
        let mut prefix = vec![bos];
        prefix.extend_from_slice(target);
        let mut outputs: Vec<Option<usize>> = target.iter().map(|&t| Some(t)).collect();
        outputs.push(Some(eos));
        (prefix, outputs)
    }

    /// Policy and response losses over a batch, combined with `w`.
    ///
    /// The policy sees the teacher-forced latent in the same pass that
    /// predicts `z_hat`; the mask keeps the prediction blind to it. The
    /// response loss is averaged over all target tokens of the batch.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_loss<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        batch: &[Example],
        w: LossWeights,
        cache: Option<&LatentCache<T>>,
        (bos, eos): (usize, usize),
        drop: &mut Dropout,
    ) -> Result<BatchLoss> {
        if batch.is_empty() {
            return Err(PolicyError::EmptyBatch);
        }
        let mut pairs = Vec::new();
        let mut ce = Vec::new();
        let mut total_tokens = 0usize;
        for ex in batch {
            let enc = self.encoder.forward(g, store, &ex.context, drop)?;
            let mut memory = vec![enc.hidden];
            let mut valid = enc.valid.clone();
            if self.mode == ModelMode::Latent {
                let ids = ex.latent_ids.as_deref().ok_or(PolicyError::MissingLatent)?;
                let z = self.latent(g, store, ids, cache)?;
                let out = self.policy.forward(g, store, ex.db, &enc, Some(z), drop)?;
                pairs.push((out.z_hat, z));
                memory.push(out.h_policy);
                valid.extend([true, true]);
            }
            let (prefix, outputs) = self.decoder_io(&ex.target, bos, eos);
            let logits = self.decoder.forward(g, store, &prefix, &memory, Some(&valid), drop)?;
            let l = g.cross_entropy(logits, &outputs)?;
            ce.push((l, outputs.len()));
            total_tokens += outputs.len();
        }
        let weighted: Vec<Var> = ce
            .iter()
            .map(|&(l, n)| g.scale(l, T::from_f64(n as f64 / total_tokens as f64)))
            .collect::<std::result::Result<_, _>>()?;
        let response = sum_all(g, &weighted)?;
        match self.mode {
            ModelMode::Latent => {
                let policy = policy_loss(g, &pairs)?;
                let total = combined_loss(g, policy, response, w)?;
                Ok(BatchLoss { total, policy: Some(policy), response })
            }
            ModelMode::BaselineConcat => Ok(BatchLoss { total: response, policy: None, response }),
        }
    }

    /// Predicted latent for a context: the first policy pass.
    pub fn predict_latent<T: Real>(&self, store: &ParamStore<T>, context: &TokenSequence, db: DbBucket) -> Result<Vec<T>> {
        let mut g = Graph::no_grad();
        let mut drop = Dropout::off();
        let enc = self.encoder.forward(&mut g, store, context, &mut drop)?;
        let out = self.policy.forward(&mut g, store, db, &enc, None, &mut drop)?;
        Ok(g.value(out.z_hat).data().to_vec())
    }

    /// Greedy response conditioned on `z` (the second policy pass). In
    /// baseline mode `z` is ignored and may be `None`.
    pub fn generate<T: Real>(
        &self,
        store: &ParamStore<T>,
        context: &TokenSequence,
        db: DbBucket,
        z: Option<&[T]>,
        (bos, eos): (usize, usize),
    ) -> Result<Vec<usize>> {
        let mut g = Graph::no_grad();
        let mut drop = Dropout::off();
        let enc = self.encoder.forward(&mut g, store, context, &mut drop)?;
        let mut memory = vec![enc.hidden];
        let mut valid = enc.valid.clone();
        if self.mode == ModelMode::Latent {
            let z = z.ok_or(PolicyError::MissingLatent)?;
            let zv = g.constant(Tensor::new(vec![1, z.len()], z.to_vec())?);
            let out = self.policy.forward(&mut g, store, db, &enc, Some(zv), &mut drop)?;
            memory.push(out.h_policy);
            valid.extend([true, true]);
        }
        let mem = g.concat(&memory, 0)?;
        let max_len = self.config.max_response_len;
        let ids = decode_greedy(
            |prefix| {
                let logits = self.decoder.forward(&mut g, store, prefix, &[mem], Some(&valid), &mut drop)?;
                let t = g.value(logits);
                Ok(t.row(t.rows() - 1).to_vec())
            },
            bos,
            eos,
            max_len,
        )?;
        Ok(ids)
    }
}
