#![allow(dead_code)]

pub mod grad;

use latact::latent_policy::{DbBucket, Example, LatentActModel, ModelMode};
use latact::numerics::rng::{seeded, stream};
use latact::numerics::{ParamStore, Real};
use latact::seq_model::{ModelConfig, TokenSequence};
use rand::Rng;

pub const BOS: usize = 2;
pub const EOS: usize = 3;

pub fn toy_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 24,
        d_model: 8,
        d_act: 4,
        n_heads: 2,
        n_encoder_layers: 1,
        n_decoder_layers: 1,
        n_policy_layers: 1,
        d_ff: 16,
        max_context_len: 12,
        max_response_len: 6,
        max_act_len: 6,
        dropout: 0.0,
    }
}

pub fn toy_model<T: Real>(seed: u64, mode: ModelMode) -> (LatentActModel, ParamStore<T>) {
    let mut store = ParamStore::new();
    let mut rng = seeded(seed, stream::INIT);
    let m = LatentActModel::new(&mut store, toy_config(), mode, &mut rng).unwrap();
    (m, store)
}

pub fn random_ids<R: Rng>(rng: &mut R, len: usize) -> Vec<usize> {
    (0..len).map(|_| rng.gen_range(4..24)).collect()
}

pub fn random_example<R: Rng>(rng: &mut R) -> Example {
    let n = rng.gen_range(2..8);
    let m = rng.gen_range(1..5);
    let k = rng.gen_range(1..5);
    Example {
        context: TokenSequence::new(random_ids(rng, n)),
        db: DbBucket::ALL[rng.gen_range(0..6)],
        target: random_ids(rng, m),
        latent_ids: Some(random_ids(rng, k)),
        proxy: rng.gen_bool(0.5),
    }
}
