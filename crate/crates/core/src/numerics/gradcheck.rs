use rand::seq::index::sample;
use rand::Rng;

use super::{Graph, NumericsError, ParamId, ParamStore, Tensor, Var};

type Result<T> = std::result::Result<T, NumericsError>;

/// Worst coordinate found by a gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub worst: String,
    pub coords_checked: usize,
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

fn eval_point<F>(f: &F, point: &Tensor<f64>) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let mut g = Graph::no_grad();
    let x = g.input(point.clone(), false);
    let y = f(&mut g, x)?;
    let v = g.value(y);
    if !v.is_scalar() {
        return Err(NumericsError::NonScalarLoss(v.shape().to_vec()));
    }
    let v = v.item();
    if !v.is_finite() {
        return Err(NumericsError::NonFinite("gradcheck objective".into()));
    }
    Ok(v)
}

/// Max over coordinates of `|analytic - central difference| / max(1, |analytic|)`
/// for a scalar function of one tensor, in double precision.
pub fn gradcheck<F>(f: F, point: &Tensor<f64>, step: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.input(point.clone(), true);
    let y = f(&mut g, x)?;
    g.backward_inputs(y)?;
    let analytic = g.grad(x).unwrap_or_else(|| Tensor::zeros(point.shape()));
    if !analytic.is_finite() {
        return Err(NumericsError::NonFinite("analytic gradient".into()));
    }
    let mut worst: f64 = 0.0;
    let mut probe = point.clone();
    for i in 0..point.len() {
        let x0 = point.data()[i];
        probe.data_mut()[i] = x0 + step;
        let fp = eval_point(&f, &probe)?;
        probe.data_mut()[i] = x0 - step;
        let fm = eval_point(&f, &probe)?;
        probe.data_mut()[i] = x0;
        let numeric = (fp - fm) / (2.0 * step);
        worst = worst.max(rel_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

/// Gradient check over the parameters of a store. `per_param` bounds the
/// number of sampled coordinates per tensor (all coordinates when `None`).
/// The objective may fail with any error that numerics errors convert into.
pub fn gradcheck_params<F, R, E>(
    store: &mut ParamStore<f64>,
    f: F,
    step: f64,
    per_param: Option<usize>,
    rng: &mut R,
) -> std::result::Result<GradcheckReport, E>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> std::result::Result<Var, E>,
    R: Rng,
    E: From<NumericsError>,
{
    store.zero_grad();
    let mut g = Graph::new();
    let y = f(&mut g, store)?;
    g.backward(y, store)?;
    let eval = |s: &ParamStore<f64>| -> std::result::Result<f64, E> {
        let mut g = Graph::no_grad();
        let y = f(&mut g, s)?;
        let v = g.value(y).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(NumericsError::NonFinite("gradcheck objective".into()).into())
        }
    };
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        coords_checked: 0,
    };
    let ids: Vec<ParamId> = store.ids().filter(|&id| store.get(id).trainable).collect();
    for id in ids {
        let n = store.get(id).value.len();
        let coords: Vec<usize> = match per_param {
            Some(k) if k < n => sample(rng, n, k).into_vec(),
            _ => (0..n).collect(),
        };
        for i in coords {
            let analytic = store.get(id).grad.data()[i];
            let x0 = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = x0 + step;
            let fp = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = x0 - step;
            let fm = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = x0;
            let err = rel_error(analytic, (fp - fm) / (2.0 * step));
            report.coords_checked += 1;
            if err > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = format!("{}[{}]", store.get(id).name, i);
            }
        }
    }
    store.zero_grad();
    Ok(report)
}
