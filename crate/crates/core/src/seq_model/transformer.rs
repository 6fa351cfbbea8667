use rand::Rng;

use super::layers::{DecoderBlock, Dropout, EncoderBlock, LayerNorm, Linear};
use super::{AttentionMask, ModelConfig, ModelError};
use crate::numerics::{Graph, Init, ParamId, ParamStore, Real, Var};

type Result<T> = std::result::Result<T, ModelError>;

/// Token ids plus a validity flag per position (false = padding).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    ids: Vec<usize>,
    valid: Vec<bool>,
}

impl TokenSequence {
    pub fn new(ids: Vec<usize>) -> Self {
        let valid = vec![true; ids.len()];
        TokenSequence { ids, valid }
    }

    /// Right-pads `ids` with `pad` up to `len`.
    pub fn padded(mut ids: Vec<usize>, len: usize, pad: usize) -> Self {
        let real = ids.len();
        ids.resize(len.max(real), pad);
        let valid = (0..ids.len()).map(|i| i < real).collect();
        TokenSequence { ids, valid }
    }

    pub fn with_mask(ids: Vec<usize>, valid: Vec<bool>) -> Result<Self> {
        if ids.len() != valid.len() {
            return Err(ModelError::Shape(format!(
                "{} ids but {} padding flags",
                ids.len(),
                valid.len()
            )));
        }
        Ok(TokenSequence { ids, valid })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Drops the oldest positions so that at most `max` remain.
    pub fn truncate_front(&self, max: usize) -> TokenSequence {
        let skip = self.ids.len().saturating_sub(max);
        TokenSequence {
            ids: self.ids[skip..].to_vec(),
            valid: self.valid[skip..].to_vec(),
        }
    }
}

fn check_ids(ids: &[usize], vocab: usize) -> Result<()> {
    match ids.iter().find(|&&i| i >= vocab) {
        Some(&bad) => Err(ModelError::Token { id: bad, vocab }),
        None => Ok(()),
    }
}

/// Token + learned absolute position embeddings.
#[derive(Clone, Debug)]
pub struct Embeddings {
    pub tokens: ParamId,
    pub positions: ParamId,
}

impl Embeddings {
    pub fn new<T: Real, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        vocab: usize,
        max_len: usize,
        d: usize,
        rng: &mut R,
    ) -> Self {
        Embeddings {
            tokens: store.add(format!("{name}.tokens"), &[vocab, d], Init::Normal(0.1), rng),
            positions: store.add(format!("{name}.positions"), &[max_len, d], Init::Normal(0.1), rng),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, ids: &[usize]) -> Result<Var> {
        let max_len = store.get(self.positions).value.shape()[0];
        if ids.len() > max_len {
            return Err(ModelError::TooLong {
                len: ids.len(),
                max: max_len,
            });
        }
        check_ids(ids, store.get(self.tokens).value.shape()[0])?;
        let tok = g.param(store, self.tokens);
        let pos = g.param(store, self.positions);
        let e = g.embedding(tok, ids)?;
        let positions: Vec<usize> = (0..ids.len()).collect();
        let p = g.embedding(pos, &positions)?;
        Ok(g.add(e, p)?)
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.tokens, self.positions]
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub embed: Embeddings,
    pub blocks: Vec<EncoderBlock>,
    pub ln_final: LayerNorm,
    pub max_len: usize,
}

/// Encoder output: one row per retained context token.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    pub hidden: Var,
    pub valid: Vec<bool>,
}

impl Encoder {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut R) -> Self {
        let d = cfg.d_model;
        Encoder {
            embed: Embeddings::new(store, "encoder.embed", cfg.vocab_size, cfg.max_context_len, d, rng),
            blocks: (0..cfg.n_encoder_layers)
                .map(|i| EncoderBlock::new(store, &format!("encoder.block{i}"), d, cfg.n_heads, cfg.d_ff, rng))
                .collect(),
            ln_final: LayerNorm::new(store, "encoder.ln_final", d, rng),
            max_len: cfg.max_context_len,
        }
    }

    /// Contexts longer than the configured maximum lose their oldest tokens.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        context: &TokenSequence,
        drop: &mut Dropout,
    ) -> Result<EncoderOutput> {
        let ctx = context.truncate_front(self.max_len);
        if ctx.is_empty() || !ctx.valid().iter().any(|&v| v) {
            return Err(ModelError::EmptyInput("encoder context"));
        }
        let mut x = self.embed.forward(g, store, ctx.ids())?;
        x = drop.apply(g, x)?;
        let mask = AttentionMask::keys(ctx.len(), ctx.valid());
        let mask = (!mask.is_full()).then_some(mask);
        for b in &self.blocks {
            x = b.forward(g, store, x, mask.as_ref(), drop)?;
        }
        Ok(EncoderOutput {
            hidden: self.ln_final.forward(g, store, x)?,
            valid: ctx.valid().to_vec(),
        })
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.embed.params();
        p.extend(self.blocks.iter().flat_map(|b| b.params()));
        p.extend(self.ln_final.params());
        p
    }
}

#[derive(Clone, Debug)]
pub struct Decoder {
    pub embed: Embeddings,
    pub blocks: Vec<DecoderBlock>,
    pub ln_final: LayerNorm,
    pub lm_head: Linear,
}

impl Decoder {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut R) -> Self {
        let d = cfg.d_model;
        Decoder {
            embed: Embeddings::new(store, "decoder.embed", cfg.vocab_size, cfg.max_response_len + 1, d, rng),
            blocks: (0..cfg.n_decoder_layers)
                .map(|i| DecoderBlock::new(store, &format!("decoder.block{i}"), d, cfg.n_heads, cfg.d_ff, rng))
                .collect(),
            ln_final: LayerNorm::new(store, "decoder.ln_final", d, rng),
            lm_head: Linear::new(store, "decoder.lm_head", d, cfg.vocab_size, rng),
        }
    }

    /// Next-token logits for every prefix position, shape `(len(prefix), vocab)`.
    ///
    /// `memory` parts are concatenated along the sequence axis and attended
    /// by every position; `memory_valid` flags padded memory rows.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        prefix: &[usize],
        memory: &[Var],
        memory_valid: Option<&[bool]>,
        drop: &mut Dropout,
    ) -> Result<Var> {
        if memory.is_empty() {
            return Err(ModelError::EmptyInput("decoder memory"));
        }
        if prefix.is_empty() {
            return Err(ModelError::EmptyInput("decoder prefix"));
        }
        let mem = if memory.len() == 1 { memory[0] } else { g.concat(memory, 0)? };
        let mem_rows = g.shape(mem)[0];
        let mem_mask = match memory_valid {
            Some(v) if v.len() != mem_rows => {
                return Err(ModelError::Shape(format!("{} memory flags for {mem_rows} rows", v.len())))
            }
            Some(v) if v.iter().any(|&ok| !ok) => Some(AttentionMask::keys(prefix.len(), v)),
            _ => None,
        };
        let mut x = self.embed.forward(g, store, prefix)?;
        x = drop.apply(g, x)?;
        let causal = AttentionMask::causal(prefix.len());
        for b in &self.blocks {
            x = b.forward(g, store, x, &causal, mem, mem_mask.as_ref(), drop)?;
        }
        let h = self.ln_final.forward(g, store, x)?;
        self.lm_head.forward(g, store, h)
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.embed.params();
        p.extend(self.blocks.iter().flat_map(|b| b.params()));
        p.extend(self.ln_final.params());
        p.extend(self.lm_head.params());
        p
    }
}

/// Greedy decoding. `next_logits` maps the current prefix (starting with
/// `bos`) to logits for the next token. The returned ids exclude `bos` and
/// `eos`; generation stops at `eos` or after `max_len` tokens.
pub fn decode_greedy<T, F>(mut next_logits: F, bos: usize, eos: usize, max_len: usize) -> Result<Vec<usize>>
where
    T: Real,
    F: FnMut(&[usize]) -> Result<Vec<T>>,
{
    let mut prefix = vec![bos];
    let mut out = Vec::new();
    while out.len() < max_len {
        let logits = next_logits(&prefix)?;
        let next = argmax(&logits).ok_or(ModelError::EmptyInput("logits"))?;
        if next == eos {
            break;
        }
        out.push(next);
        prefix.push(next);
    }
    Ok(out)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<T: Real>(xs: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &x) in xs.iter().enumerate() {
        if best.is_none_or(|(_, b)| x > b) {
            best = Some((i, x));
        }
    }
    best.map(|(i, _)| i)
}
