use super::{Example, LatentActModel, LatentCache, LossWeights, ModelMode, PolicyError};
use crate::numerics::rng::{seeded, stream};
use crate::numerics::{Adam, AdamConfig, Graph, ParamStore, Real};
use crate::seq_model::Dropout;

type Result<T> = std::result::Result<T, PolicyError>;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerConfig {
    pub adam: AdamConfig,
    pub weights: LossWeights,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub dropout: f64,
    pub freeze_act_encoder: bool,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            clip_norm: Some(1.0),
            dropout: 0.1,
            freeze_act_encoder: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub loss: f64,
    pub policy: Option<f64>,
    pub response: f64,
    pub grad_norm: f64,
}

/// Owns a model, its parameters and the optimizer state.
pub struct Trainer<T> {
    pub model: LatentActModel,
    pub store: ParamStore<T>,
    pub config: TrainerConfig,
    adam: Adam,
    dropout: Dropout,
    cache: LatentCache<T>,
    specials: (usize, usize),
    steps: u64,
}

impl<T: Real> Trainer<T> {
    /// `specials` are the `<bos>` and `<eos>` ids.
    pub fn new(model: LatentActModel, mut store: ParamStore<T>, config: TrainerConfig, specials: (usize, usize)) -> Self {
        let frozen_act = config.freeze_act_encoder || model.mode == ModelMode::BaselineConcat;
        for id in model.act_encoder_params() {
            store.set_trainable(id, !frozen_act);
        }
        if model.mode == ModelMode::BaselineConcat {
            for id in model.policy_params() {
                store.set_trainable(id, false);
            }
        }
        let dropout = Dropout::new(config.dropout, seeded(config.seed, stream::DROPOUT));
        Trainer {
            adam: Adam::new(config.adam),
            model,
            store,
            config,
            dropout,
            cache: LatentCache::new(),
            specials,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.adam.config.lr = lr;
    }

    fn act_encoder_frozen(&self) -> bool {
        self.model
            .act_encoder_params()
            .first()
            .is_none_or(|&id| !self.store.get(id).trainable)
    }

    fn fill_cache(&mut self, batch: &[Example]) -> Result<()> {
        if self.model.mode != ModelMode::Latent || !self.act_encoder_frozen() {
            return Ok(());
        }
        for ids in batch.iter().filter_map(|e| e.latent_ids.as_ref()) {
            if !self.cache.contains_key(ids) {
                let z = self.model.encode_latent(&self.store, ids)?;
                self.cache.insert(ids.clone(), z);
            }
        }
        Ok(())
    }

    /// Forward, backward and one optimizer update.
    pub fn train_step(&mut self, batch: &[Example]) -> Result<StepMetrics> {
        self.fill_cache(batch)?;
        let cache = (self.model.mode == ModelMode::Latent && self.act_encoder_frozen()).then_some(&self.cache);
        self.store.zero_grad();
        let mut g = Graph::new();
        let loss = self.model.batch_loss(
            &mut g,
            &self.store,
            batch,
            self.config.weights,
            cache,
            self.specials,
            &mut self.dropout,
        )?;
        let metrics = read_metrics(&g, &loss);
        if !metrics.loss.is_finite() {
            return Err(PolicyError::NonFinite(format!(
                "loss {} at step {} (policy {:?}, response {})",
                metrics.loss, self.steps, metrics.policy, metrics.response
            )));
        }
        g.backward(loss.total, &mut self.store)?;
        let grad_norm = match self.config.clip_norm {
            Some(c) => self.store.clip_grad_norm(c),
            None => self.store.grad_norm(),
        };
        self.adam.step(&mut self.store).map_err(|e| {
            PolicyError::NonFinite(format!("{e} at step {} (loss {})", self.steps, metrics.loss))
        })?;
        self.steps += 1;
        Ok(StepMetrics { grad_norm, ..metrics })
    }

    /// Loss without dropout or parameter updates.
    pub fn evaluate(&mut self, batch: &[Example]) -> Result<StepMetrics> {
        self.fill_cache(batch)?;
        let cache = (self.model.mode == ModelMode::Latent && self.act_encoder_frozen()).then_some(&self.cache);
        let mut g = Graph::no_grad();
        let loss = self.model.batch_loss(
            &mut g,
            &self.store,
            batch,
            self.config.weights,
            cache,
            self.specials,
            &mut Dropout::off(),
        )?;
        Ok(read_metrics(&g, &loss))
    }

    pub fn into_parts(self) -> (LatentActModel, ParamStore<T>) {
        (self.model, self.store)
    }
}

fn read_metrics<T: Real>(g: &Graph<T>, loss: &super::BatchLoss) -> StepMetrics {
    StepMetrics {
        loss: g.value(loss.total).item().as_f64(),
        policy: loss.policy.map(|p| g.value(p).item().as_f64()),
        response: g.value(loss.response).item().as_f64(),
        grad_norm: 0.0,
    }
}
