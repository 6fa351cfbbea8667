use super::PolicyError;
use crate::numerics::{Graph, Real, Var};

type Result<T> = std::result::Result<T, PolicyError>;

/// Mixing weight between the policy and response losses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    alpha: f64,
}

impl LossWeights {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(PolicyError::Alpha(alpha));
        }
        Ok(LossWeights { alpha })
    }

    pub fn alpha(self) -> f64 {
        self.alpha
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 0.5 }
    }
}

/// Sum over dimensions of `(z_hat - sg(z))²`, averaged over the pairs.
pub fn policy_loss<T: Real>(g: &mut Graph<T>, pairs: &[(Var, Var)]) -> Result<Var> {
    if pairs.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    let mut terms = Vec::with_capacity(pairs.len());
    for &(z_hat, z) in pairs {
        let target = g.stop_gradient(z);
        let diff = g.sub(z_hat, target)?;
        terms.push(g.squared_l2(diff)?);
    }
    let total = sum_all(g, &terms)?;
    Ok(g.scale(total, T::from_f64(1.0 / pairs.len() as f64))?)
}

/// Mean token negative log-likelihood; `None` targets are padding.
pub fn response_loss<T: Real>(g: &mut Graph<T>, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
    Ok(g.cross_entropy(logits, targets)?)
}

/// `α·policy + (1−α)·response`.
pub fn combined_loss<T: Real>(g: &mut Graph<T>, policy: Var, response: Var, w: LossWeights) -> Result<Var> {
    let a = g.scale(policy, T::from_f64(w.alpha))?;
    let b = g.scale(response, T::from_f64(1.0 - w.alpha))?;
    Ok(g.add(a, b)?)
}

/// Scalar form of [`combined_loss`].
pub fn combine(policy: f64, response: f64, w: LossWeights) -> f64 {
    w.alpha * policy + (1.0 - w.alpha) * response
}

pub(crate) fn sum_all<T: Real>(g: &mut Graph<T>, terms: &[Var]) -> Result<Var> {
    let mut acc = *terms.first().ok_or(PolicyError::EmptyBatch)?;
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn row(g: &mut Graph<f64>, xs: &[f64]) -> Var {
        g.input(Tensor::new(vec![1, xs.len()], xs.to_vec()).unwrap(), true)
    }

    #[test]
    fn policy_loss_values() {
        let mut g = Graph::new();
        let a = row(&mut g, &[0.6, 0.8]);
        let b = row(&mut g, &[0.6, 0.8]);
        let l = policy_loss(&mut g, &[(a, b)]).unwrap();
        assert_eq!(g.value(l).item(), 0.0);
        let a = row(&mut g, &[1.0, 0.0]);
        let b = row(&mut g, &[0.0, 0.0]);
        let l = policy_loss(&mut g, &[(a, b)]).unwrap();
        assert_eq!(g.value(l).item(), 1.0);
    }

    #[test]
    fn policy_loss_blocks_target_gradient() {
        let mut g = Graph::new();
        let a = row(&mut g, &[1.0, 0.0]);
        let b = row(&mut g, &[0.0, 1.0]);
        let l = policy_loss(&mut g, &[(a, b)]).unwrap();
        g.backward_inputs(l).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[2.0, -2.0]);
        assert!(g.grad(b).is_none_or(|t| t.data().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn combined_endpoints_and_midpoint() {
        let w = |a| LossWeights::new(a).unwrap();
        assert_eq!(combine(0.2, 1.0, w(0.0)), 1.0);
        assert_eq!(combine(0.2, 1.0, w(1.0)), 0.2);
        assert!((combine(0.2, 1.0, w(0.5)) - 0.6).abs() < 1e-12);
        assert!(LossWeights::new(1.5).is_err());
        assert!(LossWeights::new(-0.1).is_err());
    }

    #[test]
    fn response_loss_oracles() {
        let mut g = Graph::new();
        let logits = g.input(Tensor::new(vec![2, 4], vec![0.0; 8]).unwrap(), false);
        let l = response_loss(&mut g, logits, &[Some(1), Some(3)]).unwrap();
        assert!((g.value(l).item() - 4f64.ln()).abs() < 1e-12);

        let logits = vec![0.5, -1.0, 2.0, 0.1, 0.3, -0.2, 1.5, 1.5, -3.0];
        let targets = [Some(2), None, Some(0)];
        let t = g.input(Tensor::new(vec![3, 3], logits.clone()).unwrap(), false);
        let l = response_loss(&mut g, t, &targets).unwrap();
        let nll = |r: &[f64], k: usize| {
            let m = r.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = r.iter().map(|x| (x - m).exp()).sum();
            -(r[k] - m - z.ln())
        };
        let oracle = (nll(&logits[0..3], 2) + nll(&logits[6..9], 0)) / 2.0;
        assert!((g.value(l).item() - oracle).abs() < 1e-12);
    }
}
