use rand::Rng;

use super::{DbBucket, PolicyError};
use crate::numerics::{Graph, Init, ParamId, ParamStore, Real, Var};
use crate::seq_model::layers::{DecoderBlock, LayerNorm, Linear};
use crate::seq_model::{AttentionMask, Dropout, EncoderOutput, ModelConfig};

type Result<T> = std::result::Result<T, PolicyError>;

/// Predicts a latent act from the DB bucket and the encoder states, then
/// re-reads a supplied latent to produce the states the decoder attends to.
///
/// Input rows are `[embed(db)]` or `[embed(db), W_in·z]` under a causal
/// mask, so row 0 never sees `z`.
#[derive(Clone, Debug)]
pub struct PolicyBranch {
    pub db_embed: ParamId,
    pub positions: ParamId,
    pub w_in: Linear,
    pub blocks: Vec<DecoderBlock>,
    pub ln_final: LayerNorm,
    pub w_out: Linear,
    pub d_act: usize,
}

/// `z_hat` is `[1, d_act]` with unit norm; `h_policy` has one row per input.
#[derive(Clone, Copy, Debug)]
pub struct PolicyOutput {
    pub z_hat: Var,
    pub h_policy: Var,
}

const UNIT_TOLERANCE: f64 = 1e-6;

impl PolicyBranch {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut R) -> Self {
        let d = cfg.d_model;
        PolicyBranch {
            db_embed: store.add("policy.db_embed", &[DbBucket::ALL.len(), d], Init::Normal(0.1), rng),
            positions: store.add("policy.positions", &[2, d], Init::Normal(0.1), rng),
            w_in: Linear::new(store, "policy.w_in", cfg.d_act, d, rng),
            blocks: (0..cfg.n_policy_layers)
                .map(|i| DecoderBlock::new(store, &format!("policy.block{i}"), d, cfg.n_heads, cfg.d_ff, rng))
                .collect(),
            ln_final: LayerNorm::new(store, "policy.ln_final", d, rng),
            w_out: Linear::new(store, "policy.w_out", d, cfg.d_act, rng),
            d_act: cfg.d_act,
        }
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        db: DbBucket,
        encoded: &EncoderOutput,
        z: Option<Var>,
        drop: &mut Dropout,
    ) -> Result<PolicyOutput> {
        let table = g.param(store, self.db_embed);
        let mut rows = vec![g.embedding(table, &[db.index()])?];
        if let Some(z) = z {
            let shape = g.shape(z).to_vec();
            if shape != [1, self.d_act] {
                return Err(PolicyError::Dimension { expected: self.d_act, got: shape });
            }
            let norm = g.value(z).data().iter().map(|x| x.as_f64().powi(2)).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(PolicyError::NotUnit(norm));
            }
            rows.push(self.w_in.forward(g, store, z)?);
        }
        let n = rows.len();
        let x = if n == 1 { rows[0] } else { g.concat(&rows, 0)? };
        let pos = g.param(store, self.positions);
        let pos = g.slice_rows(pos, 0, n)?;
        let mut x = g.add(x, pos)?;
        let mask = AttentionMask::causal(n);
        let mem_mask = encoded
            .valid
            .iter()
            .any(|&v| !v)
            .then(|| AttentionMask::keys(n, &encoded.valid));
        for b in &self.blocks {
            x = b.forward(g, store, x, &mask, encoded.hidden, mem_mask.as_ref(), drop)?;
        }
        let h = self.ln_final.forward(g, store, x)?;
        let first = g.slice_rows(h, 0, 1)?;
        let z_hat = self.w_out.forward(g, store, first)?;
        let z_hat = g.normalize_rows(z_hat)?;
        Ok(PolicyOutput { z_hat, h_policy: h })
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = vec![self.db_embed, self.positions];
        p.extend(self.w_in.params());
        p.extend(self.blocks.iter().flat_map(|b| b.params()));
        p.extend(self.ln_final.params());
        p.extend(self.w_out.params());
        p
    }
}
