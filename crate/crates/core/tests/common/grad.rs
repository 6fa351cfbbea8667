use latact::numerics::{Graph, NumericsError, Tensor, Var};
use rand::Rng;

type R<T> = Result<T, NumericsError>;

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Evaluation point for a primitive case. ReLU inputs stay at least 0.05
/// away from the kink.
pub fn primitive_point(name: &str, shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let mut point = random_tensor(rng, shape);
    if name == "relu" {
        point.data_mut().iter_mut().for_each(|v| {
            if v.abs() < 0.05 {
                *v += 0.1
            }
        });
    }
    point
}

pub type Objective = Box<dyn Fn(&mut Graph<f64>, Var) -> R<Var>>;

/// Builds a scalar objective around one primitive. Random constants mixed in
/// through a weighted sum make every output coordinate matter.
pub fn primitive_cases(rng: &mut impl Rng) -> Vec<(&'static str, Vec<usize>, Objective)> {
    let w34 = random_tensor(rng, &[3, 4]);
    let w44 = random_tensor(rng, &[4, 4]);
    let w24 = random_tensor(rng, &[2, 4]);
    let w3_4 = random_tensor(rng, &[3, 4]);
    let other = random_tensor(rng, &[3, 4]);
    let bias = random_tensor(rng, &[4]);
    let gain = random_tensor(rng, &[4]);
    let w64 = random_tensor(rng, &[6, 4]);
    let w38 = random_tensor(rng, &[3, 8]);
    let w32 = random_tensor(rng, &[3, 2]);
    let mask: Vec<bool> = (0..12).map(|i| i % 4 != 3 || i == 3).collect();
    let weighted = move |w: Tensor<f64>| {
        move |g: &mut Graph<f64>, y: Var| -> R<Var> {
            let c = g.constant(w.clone());
            let p = g.mul(y, c)?;
            g.sum(p)
        }
    };
    let mut cases: Vec<(&'static str, Vec<usize>, Objective)> = Vec::new();
    {
        let (b, f) = (w44.clone(), weighted(w34.clone()));
        cases.push(("matmul", vec![3, 4], Box::new(move |g, x| {
            let bv = g.input(b.clone(), false);
            let y = g.matmul(x, bv)?;
            f(g, y)
        })));
    }
    {
        let (b, f) = (w24.clone(), weighted(random_tensor(rng, &[3, 2])));
        cases.push(("matmul_transposed", vec![3, 4], Box::new(move |g, x| {
            let bv = g.constant(b.clone());
            let y = g.matmul_t(x, bv, true)?;
            f(g, y)
        })));
    }
    {
        let f = weighted(w32.clone());
        cases.push(("matmul_self_transposed", vec![3, 4], Box::new(move |g, x| {
            let xxt = g.matmul_t(x, x, true)?;
            let y = g.slice_cols(xxt, 0, 2)?;
            f(g, y)
        })));
    }
    {
        let (o, f) = (other.clone(), weighted(w3_4.clone()));
        cases.push(("add", vec![3, 4], Box::new(move |g, x| {
            let c = g.constant(o.clone());
            let y = g.add(x, c)?;
            let y2 = g.mul(y, y)?;
            f(g, y2)
        })));
    }
    {
        let (o, f) = (other.clone(), weighted(w3_4.clone()));
        cases.push(("sub", vec![3, 4], Box::new(move |g, x| {
            let c = g.constant(o.clone());
            let y = g.sub(c, x)?;
            let y2 = g.mul(y, x)?;
            f(g, y2)
        })));
    }
    {
        let f = weighted(w3_4.clone());
        cases.push(("mul", vec![3, 4], Box::new(move |g, x| {
            let y = g.mul(x, x)?;
            let y = g.mul(y, x)?;
            f(g, y)
        })));
    }
    {
        let (b, f) = (bias.clone(), weighted(w3_4.clone()));
        cases.push(("add_row", vec![3, 4], Box::new(move |g, x| {
            let bv = g.constant(b.clone());
            let y = g.add_row(x, bv)?;
            let y = g.mul(y, y)?;
            f(g, y)
        })));
        let (xc, f) = (other.clone(), weighted(w3_4.clone()));
        cases.push(("add_row_bias", vec![4], Box::new(move |g, b| {
            let xv = g.constant(xc.clone());
            let y = g.add_row(xv, b)?;
            let y = g.mul(y, y)?;
            f(g, y)
        })));
    }
    {
        let f = weighted(w3_4.clone());
        cases.push(("scale", vec![3, 4], Box::new(move |g, x| {
            let y = g.scale(x, -1.7)?;
            let y = g.mul(y, x)?;
            f(g, y)
        })));
        let f = weighted(w3_4.clone());
        let c: Vec<f64> = (0..12).map(|i| (i as f64) * 0.3 - 1.0).collect();
        cases.push(("mul_const", vec![3, 4], Box::new(move |g, x| {
            let y = g.mul_const(x, c.clone())?;
            let y = g.mul(y, x)?;
            f(g, y)
        })));
    }
    {
        let f = weighted(w3_4.clone());
        cases.push(("softmax", vec![3, 4], Box::new(move |g, x| {
            let y = g.softmax(x)?;
            f(g, y)
        })));
        let f = weighted(w3_4.clone());
        cases.push(("softmax_masked", vec![3, 4], Box::new(move |g, x| {
            let y = g.softmax_masked(x, Some(&mask))?;
            f(g, y)
        })));
    }
    {
        let (gn, b, f) = (gain.clone(), bias.clone(), weighted(w3_4.clone()));
        cases.push(("layer_norm", vec![3, 4], Box::new(move |g, x| {
            let gv = g.constant(gn.clone());
            let bv = g.constant(b.clone());
            let y = g.layer_norm(x, gv, bv, 1e-5)?;
            f(g, y)
        })));
        let (xc, b, f) = (other.clone(), bias.clone(), weighted(w3_4.clone()));
        cases.push(("layer_norm_gain", vec![4], Box::new(move |g, gv| {
            let xv = g.constant(xc.clone());
            let bv = g.constant(b.clone());
            let y = g.layer_norm(xv, gv, bv, 1e-5)?;
            f(g, y)
        })));
        let (xc, gn, f) = (other.clone(), gain.clone(), weighted(w3_4.clone()));
        cases.push(("layer_norm_bias", vec![4], Box::new(move |g, bv| {
            let xv = g.constant(xc.clone());
            let gv = g.constant(gn.clone());
            let y = g.layer_norm(xv, gv, bv, 1e-5)?;
            let y = g.mul(y, y)?;
            f(g, y)
        })));
    }
    {
        let f = weighted(w3_4.clone());
        cases.push(("gelu", vec![3, 4], Box::new(move |g, x| {
            let y = g.gelu(x)?;
            f(g, y)
        })));
        let f = weighted(w3_4.clone());
        cases.push(("relu", vec![3, 4], Box::new(move |g, x| {
            // shift away from the kink so central differences stay on one side
            let s = g.constant(Tensor::new(vec![3, 4], vec![0.0; 12]).unwrap());
            let y = g.add(x, s)?;
            let y = g.relu(y)?;
            f(g, y)
        })));
    }
    {
        let f = weighted(w38.clone());
        cases.push(("embedding", vec![6, 4], Box::new(move |g, t| {
            let e = g.embedding(t, &[5, 0, 5])?;
            let e2 = g.embedding(t, &[1, 2, 3])?;
            let y = g.concat(&[e, e2], 1)?;
            f(g, y)
        })));
    }
    {
        let (o, f) = (w64.clone(), weighted(random_tensor(rng, &[9, 4])));
        cases.push(("concat_rows", vec![3, 4], Box::new(move |g, x| {
            let c = g.constant(o.clone());
            let y = g.concat(&[x, c], 0)?;
            let y = g.mul(y, y)?;
            f(g, y)
        })));
    }
    {
        let f = weighted(random_tensor(rng, &[3, 2]));
        cases.push(("slice_cols", vec![3, 4], Box::new(move |g, x| {
            let y = g.slice_cols(x, 1, 2)?;
            let y = g.mul(y, y)?;
            f(g, y)
        })));
        let f = weighted(random_tensor(rng, &[2, 4]));
        cases.push(("slice_rows", vec![3, 4], Box::new(move |g, x| {
            let y = g.slice_rows(x, 1, 2)?;
            let y = g.mul(y, y)?;
            f(g, y)
        })));
    }
    {
        cases.push(("sum", vec![3, 4], Box::new(|g, x| {
            let y = g.mul(x, x)?;
            g.sum(y)
        })));
        cases.push(("mean", vec![3, 4], Box::new(|g, x| {
            let y = g.mul(x, x)?;
            g.mean(y)
        })));
        let f = weighted(random_tensor(rng, &[1, 4]));
        cases.push(("mean_rows", vec![3, 4], Box::new(move |g, x| {
            let y = g.mean_rows(x)?;
            let y = g.mul(y, y)?;
            f(g, y)
        })));
    }
    {
        cases.push(("cross_entropy", vec![3, 4], Box::new(|g, x| {
            g.cross_entropy(x, &[Some(2), None, Some(0)])
        })));
        cases.push(("squared_l2", vec![3, 4], Box::new(|g, x| g.squared_l2(x))));
        let f = weighted(w3_4.clone());
        cases.push(("normalize_rows", vec![3, 4], Box::new(move |g, x| {
            let y = g.normalize_rows(x)?;
            f(g, y)
        })));
    }
    cases
}
