//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends one node; node indices are therefore a
//! topological order and `backward` walks them in reverse, visiting each
//! reachable node exactly once.

use std::collections::HashMap;

use rand::Rng;

use super::{NumericsError, ParamId, ParamStore, Real, Tensor};

type Result<T> = std::result::Result<T, NumericsError>;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    MulConst(Var, Vec<T>),
    Softmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, rstd: Vec<T> },
    Gelu(Var),
    Relu(Var),
    Embedding { table: Var, ids: Vec<usize> },
    Concat { parts: Vec<Var>, axis: usize },
    SliceCols { a: Var, start: usize },
    SliceRows { a: Var, start: usize },
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    CrossEntropy { logits: Var, targets: Vec<Option<usize>>, probs: Vec<T>, count: usize },
    SquaredL2(Var),
    NormalizeRows { a: Var, norms: Vec<T> },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    tracked: bool,
}

/// Operation tape plus the values it produced.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    record: bool,
    params: HashMap<ParamId, Var>,
    input_grads: HashMap<usize, Vec<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Graph::new()
    }
}

fn shape2(t: &[usize]) -> Option<(usize, usize)> {
    match t {
        [r, c] => Some((*r, *c)),
        _ => None,
    }
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> NumericsError {
    NumericsError::ShapeMismatch {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

fn slot<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, n: usize) -> &mut Vec<T> {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); n])
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

impl<T: Real> Graph<T> {
    /// A graph that records operations for differentiation.
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            record: true,
            params: HashMap::new(),
            input_grads: HashMap::new(),
        }
    }

    /// A graph that only evaluates; nothing is differentiable.
    pub fn no_grad() -> Self {
        Graph {
            record: false,
            ..Graph::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let tracked = self.record && inputs.iter().any(|v| self.nodes[v.0].tracked);
        let op = if tracked { op } else { Op::Leaf };
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    /// Untracked constant.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            tracked: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf whose gradient is kept on the graph (see [`Graph::grad`]).
    pub fn input(&mut self, t: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            tracked: requires_grad && self.record,
        });
        Var(self.nodes.len() - 1)
    }

    /// Inserts a parameter once per graph; later calls return the same handle.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let p = store.get(id);
        self.nodes.push(Node {
            value: p.value.clone(),
            op: Op::Param(id),
            tracked: self.record && p.trainable,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    /// Accumulated gradient of an input leaf created with `requires_grad`.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        self.input_grads
            .get(&v.0)
            .map(|g| Tensor::new(self.nodes[v.0].value.shape().to_vec(), g.clone()).expect("grad matches value shape"))
    }

    pub fn zero_input_grads(&mut self) {
        self.input_grads.clear();
    }

    // ---- forward primitives -------------------------------------------------

    /// `a·b`, or `a·bᵀ` when `trans_b` is set. Both operands are 2-D.
    pub fn matmul_t(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let (m, k) = shape2(&sa).ok_or_else(|| mismatch("matmul", &sa, &sb))?;
        let (br, bc) = shape2(&sb).ok_or_else(|| mismatch("matmul", &sa, &sb))?;
        let (kb, n, bs) = if trans_b {
            (bc, br, (1, bc as isize))
        } else {
            (br, bc, (bc as isize, 1))
        };
        if k != kb {
            return Err(mismatch("matmul", &sa, &sb));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k as isize, 1),
            self.value(b).data(),
            bs,
            T::zero(),
            &mut out,
        );
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(value, Op::MatMul { a, b, trans_b }, &[a, b]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false)
    }

    fn zip(&self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip("add", a, b, |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip("sub", a, b, |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip("mul", a, b, |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    /// Adds the vector `row` (length = cols of `a`) to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        let c = ta.cols();
        if tr.len() != c {
            return Err(mismatch("add_row", ta.shape(), tr.shape()));
        }
        let data = ta
            .data()
            .chunks(c)
            .flat_map(|r| r.iter().zip(tr.data()).map(|(&x, &y)| x + y))
            .collect();
        let v = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(v, Op::AddRow(a, row), &[a, row]))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let v = self.value(a).map(|x| x * s);
        Ok(self.push(v, Op::Scale(a, s), &[a]))
    }

    /// Elementwise product with a constant of the same length.
    pub fn mul_const(&mut self, a: Var, c: Vec<T>) -> Result<Var> {
        let ta = self.value(a);
        if ta.len() != c.len() {
            return Err(mismatch("mul_const", ta.shape(), &[c.len()]));
        }
        let data = ta.data().iter().zip(&c).map(|(&x, &y)| x * y).collect();
        let v = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(v, Op::MulConst(a, c), &[a]))
    }

    /// Inverted dropout. Identity when `p == 0`.
    pub fn dropout<R: Rng>(&mut self, a: Var, p: f64, rng: &mut R) -> Result<Var> {
        if p <= 0.0 {
            return Ok(a);
        }
        let keep = T::from_f64(1.0 / (1.0 - p));
        let mask = (0..self.value(a).len())
            .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
            .collect();
        self.mul_const(a, mask)
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.softmax_masked(a, None)
    }

    /// Softmax over the last axis. Entries where `allowed` is false get
    /// exactly zero probability; a fully masked row yields zeros.
    pub fn softmax_masked(&mut self, a: Var, allowed: Option<&[bool]>) -> Result<Var> {
        let ta = self.value(a);
        if let Some(m) = allowed {
            if m.len() != ta.len() {
                return Err(mismatch("softmax_masked", ta.shape(), &[m.len()]));
            }
        }
        let c = ta.cols();
        let mut out = vec![T::zero(); ta.len()];
        for (r, (xs, ys)) in ta.data().chunks(c).zip(out.chunks_mut(c)).enumerate() {
            let ok = |j: usize| allowed.is_none_or(|m| m[r * c + j]);
            let mut max = T::neg_infinity();
            for (j, &x) in xs.iter().enumerate() {
                if ok(j) && x > max {
                    max = x;
                }
            }
            if max == T::neg_infinity() {
                continue;
            }
            let mut total = T::zero();
            for (j, (&x, y)) in xs.iter().zip(ys.iter_mut()).enumerate() {
                if ok(j) {
                    *y = (x - max).exp();
                    total = total + *y;
                }
            }
            for y in ys.iter_mut() {
                *y = *y / total;
            }
        }
        let v = Tensor::new(ta.shape().to_vec(), out)?;
        Ok(self.push(v, Op::Softmax(a), &[a]))
    }

    /// Layer normalization over the last axis with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let tx = self.value(x);
        let c = tx.cols();
        for t in [gain, bias] {
            if self.value(t).len() != c {
                return Err(mismatch("layer_norm", tx.shape(), self.value(t).shape()));
            }
        }
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let rows = tx.len() / c;
        let mut xhat = vec![T::zero(); tx.len()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); tx.len()];
        let n = T::from_f64(c as f64);
        let eps = T::from_f64(eps);
        for r in 0..rows {
            let xs = &tx.data()[r * c..(r + 1) * c];
            let mean = xs.iter().copied().sum::<T>() / n;
            let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..c {
                let h = (xs[j] - mean) * rs;
                xhat[r * c + j] = h;
                out[r * c + j] = h * g[j] + b[j];
            }
        }
        let v = Tensor::new(tx.shape().to_vec(), out)?;
        Ok(self.push(v, Op::LayerNorm { x, gain, bias, xhat, rstd }, &[x, gain, bias]))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let (c, k) = (T::from_f64(GELU_C), T::from_f64(GELU_A));
        let half = T::from_f64(0.5);
        let v = self
            .value(a)
            .map(|x| half * x * (T::one() + (c * (x + k * x * x * x)).tanh()));
        Ok(self.push(v, Op::Gelu(a), &[a]))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        Ok(self.push(v, Op::Relu(a), &[a]))
    }

    /// Gathers rows of a 2-D `table`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        let (n, d) = shape2(tt.shape()).ok_or_else(|| mismatch("embedding", tt.shape(), &[ids.len()]))?;
        if ids.is_empty() {
            return Err(mismatch("embedding", tt.shape(), &[0]));
        }
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            if i >= n {
                return Err(NumericsError::IndexOutOfRange {
                    what: "embedding table",
                    index: i,
                    size: n,
                });
            }
            out.extend_from_slice(tt.row(i));
        }
        let v = Tensor::new(vec![ids.len(), d], out)?;
        Ok(self.push(
            v,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    /// Concatenates 2-D tensors along axis 0 (rows) or 1 (columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts.first().ok_or(NumericsError::Empty("concat"))?;
        let s0 = self.shape(first).to_vec();
        let (_, c0) = shape2(&s0).ok_or_else(|| mismatch("concat", &s0, &s0))?;
        let (r0, _) = shape2(&s0).unwrap();
        for &p in parts {
            let s = self.shape(p);
            let ok = s.len() == 2 && if axis == 0 { s[1] == c0 } else { s[0] == r0 };
            if !ok || axis > 1 {
                return Err(mismatch("concat", &s0, s));
            }
        }
        let value = if axis == 0 {
            let rows = parts.iter().map(|&p| self.shape(p)[0]).sum();
            let data = parts.iter().flat_map(|&p| self.value(p).data().iter().copied()).collect();
            Tensor::new(vec![rows, c0], data)?
        } else {
            let cols: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
            let mut data = Vec::with_capacity(r0 * cols);
            for r in 0..r0 {
                for &p in parts {
                    data.extend_from_slice(self.value(p).row(r));
                }
            }
            Tensor::new(vec![r0, cols], data)?
        };
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            parts,
        ))
    }

    /// Columns `start..start + len` of a 2-D tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        let (r, c) = shape2(ta.shape()).ok_or_else(|| mismatch("slice_cols", ta.shape(), &[start, len]))?;
        if len == 0 || start + len > c {
            return Err(mismatch("slice_cols", ta.shape(), &[start, len]));
        }
        let data = (0..r).flat_map(|i| ta.row(i)[start..start + len].iter().copied()).collect();
        let v = Tensor::new(vec![r, len], data)?;
        Ok(self.push(v, Op::SliceCols { a, start }, &[a]))
    }

    /// Rows `start..start + len` of a 2-D tensor.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        let (r, c) = shape2(ta.shape()).ok_or_else(|| mismatch("slice_rows", ta.shape(), &[start, len]))?;
        if len == 0 || start + len > r {
            return Err(mismatch("slice_rows", ta.shape(), &[start, len]));
        }
        let data = ta.data()[start * c..(start + len) * c].to_vec();
        let v = Tensor::new(vec![len, c], data)?;
        Ok(self.push(v, Op::SliceRows { a, start }, &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().copied().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum(a), &[a]))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s = t.data().iter().copied().sum::<T>() / T::from_f64(t.len() as f64);
        Ok(self.push(Tensor::scalar(s), Op::Mean(a), &[a]))
    }

    /// Mean over rows: `[r, c] -> [1, c]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = (t.rows(), t.cols());
        let mut out = vec![T::zero(); c];
        for row in t.data().chunks(c) {
            for (o, &x) in out.iter_mut().zip(row) {
                *o = *o + x;
            }
        }
        let inv = T::from_f64(1.0 / r as f64);
        out.iter_mut().for_each(|o| *o = *o * inv);
        let v = Tensor::new(vec![1, c], out)?;
        Ok(self.push(v, Op::MeanRows(a), &[a]))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`. `None` targets are excluded; with no counted rows the loss is 0.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let tl = self.value(logits);
        let (r, v) = shape2(tl.shape()).ok_or_else(|| mismatch("cross_entropy", tl.shape(), &[targets.len()]))?;
        if targets.len() != r {
            return Err(mismatch("cross_entropy", tl.shape(), &[targets.len()]));
        }
        let mut probs = vec![T::zero(); r * v];
        let mut total = T::zero();
        let mut count = 0usize;
        for (i, t) in targets.iter().enumerate() {
            let xs = tl.row(i);
            let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = xs.iter().map(|&x| (x - max).exp()).sum();
            let lz = z.ln() + max;
            for (p, &x) in probs[i * v..(i + 1) * v].iter_mut().zip(xs) {
                *p = (x - lz).exp();
            }
            if let Some(t) = *t {
                if t >= v {
                    return Err(NumericsError::IndexOutOfRange {
                        what: "cross-entropy target",
                        index: t,
                        size: v,
                    });
                }
                total = total + (lz - xs[t]);
                count += 1;
            }
        }
        let loss = if count == 0 {
            T::zero()
        } else {
            total / T::from_f64(count as f64)
        };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                count,
            },
            &[logits],
        ))
    }

    /// Sum of squares of all entries.
    pub fn squared_l2(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().map(|&x| x * x).sum();
        Ok(self.push(Tensor::scalar(s), Op::SquaredL2(a), &[a]))
    }

    /// Scales every row to unit L2 norm.
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let c = t.cols();
        let tiny = T::from_f64(1e-30);
        let norms: Vec<T> = t
            .data()
            .chunks(c)
            .map(|r| r.iter().map(|&x| x * x).sum::<T>().sqrt().max(tiny))
            .collect();
        let data = t
            .data()
            .chunks(c)
            .zip(&norms)
            .flat_map(|(r, &n)| r.iter().map(move |&x| x / n))
            .collect();
        let v = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(v, Op::NormalizeRows { a, norms }, &[a]))
    }

    /// Forward identity; no gradient flows back through the result.
    pub fn stop_gradient(&mut self, a: Var) -> Var {
        let v = self.value(a).clone();
        self.constant(v)
    }

    // ---- backward -----------------------------------------------------------

    /// Accumulates d`loss` into parameter gradients in `store` and into
    /// input leaves. Calling it twice on the same tape doubles the gradients.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        self.backward_impl(loss, Some(store))
    }

    /// Like [`Graph::backward`] for graphs without parameters.
    pub fn backward_inputs(&mut self, loss: Var) -> Result<()> {
        self.backward_impl(loss, None)
    }

    fn backward_impl(&mut self, loss: Var, mut store: Option<&mut ParamStore<T>>) -> Result<()> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(NumericsError::NonScalarLoss(lt.shape().to_vec()));
        }
        if !lt.is_finite() {
            return Err(NumericsError::NonFinite("loss".into()));
        }
        if !self.nodes[loss.0].tracked {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(gout) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    let acc = self
                        .input_grads
                        .entry(i)
                        .or_insert_with(|| vec![T::zero(); gout.len()]);
                    acc.iter_mut().zip(&gout).for_each(|(a, &g)| *a = *a + g);
                }
                Op::Param(id) => {
                    if let Some(s) = store.as_deref_mut() {
                        let p = s.get_mut(*id);
                        p.grad
                            .data_mut()
                            .iter_mut()
                            .zip(&gout)
                            .for_each(|(a, &g)| *a = *a + g);
                    }
                }
                op => self.backprop_op(op, &node.value, &gout, &mut grads),
            }
        }
        Ok(())
    }

    fn backprop_op(&self, op: &Op<T>, out: &Tensor<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let tracked = |v: Var| nodes[v.0].tracked;
        let val = |v: Var| &nodes[v.0].value;
        // Helper that adds `f(j)` into the gradient buffer of `v`.
        macro_rules! accum {
            ($v:expr, |$j:ident| $e:expr) => {{
                let v = $v;
                if tracked(v) {
                    let b = slot(grads, v, val(v).len());
                    for ($j, slot) in b.iter_mut().enumerate() {
                        *slot = *slot + $e;
                    }
                }
            }};
        }

        match op {
            Op::Leaf | Op::Param(_) => unreachable!("leaves handled by caller"),
            Op::MatMul { a, b, trans_b } => {
                let (a, b, tb) = (*a, *b, *trans_b);
                let (m, k) = (val(a).shape()[0], val(a).shape()[1]);
                let n = out.shape()[1];
                if tracked(a) {
                    let ga = slot(grads, a, val(a).len());
                    // dA = dC · Bᵀ (or dC · B when C = A·Bᵀ)
                    let bs = if tb { (k as isize, 1) } else { (1, n as isize) };
                    T::gemm(m, n, k, g, (n as isize, 1), val(b).data(), bs, T::one(), ga);
                }
                if tracked(b) {
                    let gb = slot(grads, b, val(b).len());
                    if tb {
                        // dB = dCᵀ · A  (n×k)
                        T::gemm(n, m, k, g, (1, n as isize), val(a).data(), (k as isize, 1), T::one(), gb);
                    } else {
                        // dB = Aᵀ · dC  (k×n)
                        T::gemm(k, m, n, val(a).data(), (1, k as isize), g, (n as isize, 1), T::one(), gb);
                    }
                }
            }
            Op::Add(a, b) => {
                accum!(*a, |j| g[j]);
                accum!(*b, |j| g[j]);
            }
            Op::Sub(a, b) => {
                accum!(*a, |j| g[j]);
                accum!(*b, |j| -g[j]);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a).data(), val(*b).data());
                accum!(*a, |j| g[j] * vb[j]);
                accum!(*b, |j| g[j] * va[j]);
            }
            Op::AddRow(a, row) => {
                accum!(*a, |j| g[j]);
                let c = val(*row).len();
                if tracked(*row) {
                    let gr = slot(grads, *row, val(*row).len());
                    for chunk in g.chunks(c) {
                        for (o, &x) in gr.iter_mut().zip(chunk) {
                            *o = *o + x;
                        }
                    }
                }
            }
            Op::Scale(a, s) => {
                let s = *s;
                accum!(*a, |j| g[j] * s);
            }
            Op::MulConst(a, c) => {
                accum!(*a, |j| g[j] * c[j]);
            }
            Op::Softmax(a) => {
                let c = out.cols();
                let y = out.data();
                let dots: Vec<T> = y
                    .chunks(c)
                    .zip(g.chunks(c))
                    .map(|(ys, gs)| ys.iter().zip(gs).map(|(&p, &q)| p * q).sum())
                    .collect();
                accum!(*a, |j| y[j] * (g[j] - dots[j / c]));
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let c = out.cols();
                let gv = val(*gain).data();
                if tracked(*x) {
                    let nf = T::from_f64(c as f64);
                    let gx = slot(grads, *x, val(*x).len());
                    for (r, &rs) in rstd.iter().enumerate() {
                        let gs = &g[r * c..(r + 1) * c];
                        let hs = &xhat[r * c..(r + 1) * c];
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for j in 0..c {
                            let d = gs[j] * gv[j];
                            m1 = m1 + d;
                            m2 = m2 + d * hs[j];
                        }
                        m1 = m1 / nf;
                        m2 = m2 / nf;
                        for j in 0..c {
                            let d = gs[j] * gv[j];
                            gx[r * c + j] = gx[r * c + j] + rs * (d - m1 - hs[j] * m2);
                        }
                    }
                }
                if tracked(*gain) {
                    let gg = slot(grads, *gain, val(*gain).len());
                    for (j, (&gj, &hj)) in g.iter().zip(xhat).enumerate() {
                        gg[j % c] = gg[j % c] + gj * hj;
                    }
                }
                if tracked(*bias) {
                    let gb = slot(grads, *bias, val(*bias).len());
                    for (j, &gj) in g.iter().enumerate() {
                        gb[j % c] = gb[j % c] + gj;
                    }
                }
            }
            Op::Gelu(a) => {
                let xs = val(*a).data();
                let (c, k) = (T::from_f64(GELU_C), T::from_f64(GELU_A));
                let half = T::from_f64(0.5);
                let three = T::from_f64(3.0);
                accum!(*a, |j| {
                    let x = xs[j];
                    let t = (c * (x + k * x * x * x)).tanh();
                    let d = half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * k * x * x);
                    g[j] * d
                });
            }
            Op::Relu(a) => {
                let xs = val(*a).data();
                accum!(*a, |j| if xs[j] > T::zero() { g[j] } else { T::zero() });
            }
            Op::Embedding { table, ids } => {
                if tracked(*table) {
                    let d = out.cols();
                    let gt = slot(grads, *table, val(*table).len());
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            gt[id * d + j] = gt[id * d + j] + g[r * d + j];
                        }
                    }
                }
            }
            Op::Concat { parts, axis } => {
                if *axis == 0 {
                    let mut off = 0;
                    for &p in parts {
                        let n = val(p).len();
                        accum!(p, |j| g[off + j]);
                        off += n;
                    }
                } else {
                    let total = out.cols();
                    let mut col = 0;
                    for &p in parts {
                        let c = val(p).cols();
                        accum!(p, |j| g[(j / c) * total + col + j % c]);
                        col += c;
                    }
                }
            }
            Op::SliceCols { a, start } => {
                let (c, len) = (val(*a).cols(), out.cols());
                let start = *start;
                accum!(*a, |j| {
                    let (r, cj) = (j / c, j % c);
                    if cj >= start && cj < start + len {
                        g[r * len + cj - start]
                    } else {
                        T::zero()
                    }
                });
            }
            Op::SliceRows { a, start } => {
                let lo = start * out.cols();
                let hi = lo + out.len();
                accum!(*a, |j| if j >= lo && j < hi { g[j - lo] } else { T::zero() });
            }
            Op::Sum(a) => {
                let s = g[0];
                accum!(*a, |_j| s);
            }
            Op::Mean(a) => {
                let s = g[0] / T::from_f64(val(*a).len() as f64);
                accum!(*a, |_j| s);
            }
            Op::MeanRows(a) => {
                let t = val(*a);
                let (r, c) = (t.rows(), t.cols());
                let inv = T::from_f64(1.0 / r as f64);
                accum!(*a, |j| g[j % c] * inv);
            }
            Op::CrossEntropy { logits, targets, probs, count } => {
                if *count > 0 && tracked(*logits) {
                    let v = val(*logits).cols();
                    let s = g[0] / T::from_f64(*count as f64);
                    let gl = slot(grads, *logits, val(*logits).len());
                    for (i, t) in targets.iter().enumerate() {
                        if let Some(t) = *t {
                            for j in 0..v {
                                let ind = if j == t { T::one() } else { T::zero() };
                                gl[i * v + j] = gl[i * v + j] + s * (probs[i * v + j] - ind);
                            }
                        }
                    }
                }
            }
            Op::SquaredL2(a) => {
                let xs = val(*a).data();
                let two = T::from_f64(2.0) * g[0];
                accum!(*a, |j| two * xs[j]);
            }
            Op::NormalizeRows { a, norms } => {
                let c = out.cols();
                let y = out.data();
                let dots: Vec<T> = y
                    .chunks(c)
                    .zip(g.chunks(c))
                    .map(|(ys, gs)| ys.iter().zip(gs).map(|(&p, &q)| p * q).sum())
                    .collect();
                accum!(*a, |j| (g[j] - y[j] * dots[j / c]) / norms[j / c]);
            }
        }
    }
}
