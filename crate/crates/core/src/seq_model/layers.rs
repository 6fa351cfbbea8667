//! Pre-norm transformer building blocks. Layers hold parameter handles only;
//! values live in a [`ParamStore`] so one layout serves f32 training and f64
//! gradient checks.

use rand::Rng;

use super::{AttentionMask, ModelError};
use crate::numerics::rng::Rng as Prng;
use crate::numerics::{Graph, Init, ParamId, ParamStore, Real, Var};

type Result<T> = std::result::Result<T, ModelError>;

/// Dropout configuration for one forward pass.
pub struct Dropout {
    p: f64,
    rng: Option<Prng>,
}

impl Dropout {
    pub fn off() -> Self {
        Dropout { p: 0.0, rng: None }
    }

    pub fn new(p: f64, rng: Prng) -> Self {
        Dropout { p, rng: Some(rng) }
    }

    pub fn apply<T: Real>(&mut self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        match &mut self.rng {
            Some(rng) if self.p > 0.0 => Ok(g.dropout(x, self.p, rng)?),
            _ => Ok(x),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, name: &str, d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let std = 1.0 / (d_in as f64).sqrt();
        Linear {
            w: store.add(format!("{name}.w"), &[d_in, d_out], Init::Normal(std), rng),
            b: store.add(format!("{name}.b"), &[d_out], Init::Zeros, rng),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let y = g.matmul(x, w)?;
        Ok(g.add_row(y, b)?)
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.w, self.b]
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, name: &str, d: usize, rng: &mut R) -> Self {
        LayerNorm {
            gain: store.add(format!("{name}.gain"), &[d], Init::Ones, rng),
            bias: store.add(format!("{name}.bias"), &[d], Init::Zeros, rng),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        Ok(g.layer_norm(x, gain, bias, 1e-5)?)
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.gain, self.bias]
    }
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub n_heads: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, name: &str, d: usize, n_heads: usize, rng: &mut R) -> Self {
        MultiHeadAttention {
            q: Linear::new(store, &format!("{name}.q"), d, d, rng),
            k: Linear::new(store, &format!("{name}.k"), d, d, rng),
            v: Linear::new(store, &format!("{name}.v"), d, d, rng),
            o: Linear::new(store, &format!("{name}.o"), d, d, rng),
            n_heads,
        }
    }

    /// Scaled dot-product attention of `queries` over `keys`. `mask` is
    /// `None` for unrestricted attention.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        queries: Var,
        keys: Var,
        mask: Option<&AttentionMask>,
    ) -> Result<Var> {
        let (lq, d) = (g.shape(queries)[0], g.shape(queries)[1]);
        let lk = g.shape(keys)[0];
        if let Some(m) = mask {
            if m.rows() != lq || m.cols() != lk {
                return Err(ModelError::Shape(format!(
                    "attention mask {}x{} for {lq} queries over {lk} keys",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        let allowed = mask.filter(|m| !m.is_full()).map(|m| m.as_slice());
        let q = self.q.forward(g, store, queries)?;
        let k = self.k.forward(g, store, keys)?;
        let v = self.v.forward(g, store, keys)?;
        let dh = d / self.n_heads;
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());
        let mut heads = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let qh = if self.n_heads == 1 { q } else { g.slice_cols(q, h * dh, dh)? };
            let kh = if self.n_heads == 1 { k } else { g.slice_cols(k, h * dh, dh)? };
            let vh = if self.n_heads == 1 { v } else { g.slice_cols(v, h * dh, dh)? };
            let s = g.matmul_t(qh, kh, true)?;
            let s = g.scale(s, scale)?;
            let p = g.softmax_masked(s, allowed)?;
            heads.push(g.matmul(p, vh)?);
        }
        let cat = if heads.len() == 1 { heads[0] } else { g.concat(&heads, 1)? };
        self.o.forward(g, store, cat)
    }

    pub fn params(&self) -> Vec<ParamId> {
        [&self.q, &self.k, &self.v, &self.o].iter().flat_map(|l| l.params()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, name: &str, d: usize, d_ff: usize, rng: &mut R) -> Self {
        FeedForward {
            up: Linear::new(store, &format!("{name}.up"), d, d_ff, rng),
            down: Linear::new(store, &format!("{name}.down"), d_ff, d, rng),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let h = self.up.forward(g, store, x)?;
        let h = g.gelu(h)?;
        self.down.forward(g, store, h)
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.up.params();
        p.extend(self.down.params());
        p
    }
}

/// Self-attention + feed-forward, each wrapped as `x + f(norm(x))`.
#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub ln_attn: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln_ff: LayerNorm,
    pub ff: FeedForward,
}

impl EncoderBlock {
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        n_heads: usize,
        d_ff: usize,
        rng: &mut R,
    ) -> Self {
        EncoderBlock {
            ln_attn: LayerNorm::new(store, &format!("{name}.ln_attn"), d, rng),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), d, n_heads, rng),
            ln_ff: LayerNorm::new(store, &format!("{name}.ln_ff"), d, rng),
            ff: FeedForward::new(store, &format!("{name}.ff"), d, d_ff, rng),
        }
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        mask: Option<&AttentionMask>,
        drop: &mut Dropout,
    ) -> Result<Var> {
        let h = self.ln_attn.forward(g, store, x)?;
        let a = self.attn.forward(g, store, h, h, mask)?;
        let a = drop.apply(g, a)?;
        let x = g.add(x, a)?;
        let h = self.ln_ff.forward(g, store, x)?;
        let f = self.ff.forward(g, store, h)?;
        let f = drop.apply(g, f)?;
        Ok(g.add(x, f)?)
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.ln_attn.params();
        p.extend(self.attn.params());
        p.extend(self.ln_ff.params());
        p.extend(self.ff.params());
        p
    }
}

/// Masked self-attention, cross-attention to a memory, feed-forward.
#[derive(Clone, Debug)]
pub struct DecoderBlock {
    pub ln_self: LayerNorm,
    pub self_attn: MultiHeadAttention,
    pub ln_cross: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub ln_ff: LayerNorm,
    pub ff: FeedForward,
}

impl DecoderBlock {
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        n_heads: usize,
        d_ff: usize,
        rng: &mut R,
    ) -> Self {
        DecoderBlock {
            ln_self: LayerNorm::new(store, &format!("{name}.ln_self"), d, rng),
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self_attn"), d, n_heads, rng),
            ln_cross: LayerNorm::new(store, &format!("{name}.ln_cross"), d, rng),
            cross_attn: MultiHeadAttention::new(store, &format!("{name}.cross_attn"), d, n_heads, rng),
            ln_ff: LayerNorm::new(store, &format!("{name}.ln_ff"), d, rng),
            ff: FeedForward::new(store, &format!("{name}.ff"), d, d_ff, rng),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        self_mask: &AttentionMask,
        memory: Var,
        memory_mask: Option<&AttentionMask>,
        drop: &mut Dropout,
    ) -> Result<Var> {
        let h = self.ln_self.forward(g, store, x)?;
        let a = self.self_attn.forward(g, store, h, h, Some(self_mask))?;
        let a = drop.apply(g, a)?;
        let x = g.add(x, a)?;
        let h = self.ln_cross.forward(g, store, x)?;
        let c = self.cross_attn.forward(g, store, h, memory, memory_mask)?;
        let c = drop.apply(g, c)?;
        let x = g.add(x, c)?;
        let h = self.ln_ff.forward(g, store, x)?;
        let f = self.ff.forward(g, store, h)?;
        let f = drop.apply(g, f)?;
        Ok(g.add(x, f)?)
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.ln_self.params();
        p.extend(self.self_attn.params());
        p.extend(self.ln_cross.params());
        p.extend(self.cross_attn.params());
        p.extend(self.ln_ff.params());
        p.extend(self.ff.params());
        p
    }
}
