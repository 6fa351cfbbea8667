mod common;

use common::grad::{primitive_cases, primitive_point, random_tensor};
use latact::numerics::rng::{seeded, stream};
use latact::numerics::{gradcheck, Adam, AdamConfig, Graph, Init, NumericsError, ParamStore, Tensor};

#[test]
fn matmul_identity_is_noop() {
    let mut g = Graph::<f32>::no_grad();
    let mut eye = vec![0.0f32; 9];
    for i in 0..3 {
        eye[i * 4] = 1.0;
    }
    let i3 = g.constant(Tensor::new(vec![3, 3], eye).unwrap());
    let x = g.constant(Tensor::new(vec![3, 4], (0..12).map(|v| v as f32 * 0.5 - 2.0).collect()).unwrap());
    let y = g.matmul(i3, x).unwrap();
    assert_eq!(g.value(y), g.value(x));
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let mut g = Graph::<f64>::no_grad();
    let x = g.constant(Tensor::vector(vec![0.0; 3]).unwrap());
    let y = g.softmax(x).unwrap();
    for &p in g.value(y).data() {
        assert!((p - 1.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn cross_entropy_matches_scalar_recomputation() {
    let mut g = Graph::<f64>::no_grad();
    let logits = g.constant(Tensor::new(vec![1, 2], vec![10.0, -10.0]).unwrap());
    let l = g.cross_entropy(logits, &[Some(0)]).unwrap();
    // -log(e^10 / (e^10 + e^-10)) = log(1 + e^-20)
    let expected = (1.0f64 + (-20.0f64).exp()).ln();
    assert!((g.value(l).item() - expected).abs() < 1e-15);
}

#[test]
fn shape_mismatch_names_both_shapes() {
    let mut g = Graph::<f32>::no_grad();
    let a = g.constant(Tensor::zeros(&[2, 3]));
    let b = g.constant(Tensor::zeros(&[2, 3]));
    let err = g.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("matmul"), "{msg}");
    assert!(matches!(err, NumericsError::ShapeMismatch { .. }));
}

#[test]
fn backward_of_sum_is_ones() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::vector(vec![1.0, -2.0, 3.0, 0.5]).unwrap(), true);
    let s = g.sum(x).unwrap();
    g.backward_inputs(s).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[1.0; 4]);
}

#[test]
fn backward_of_square_and_accumulation() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::scalar(3.0), true);
    let y = g.mul(x, x).unwrap();
    g.backward_inputs(y).unwrap();
    assert_eq!(g.grad(x).unwrap().item(), 6.0);
    // second call without reset accumulates
    g.backward_inputs(y).unwrap();
    assert_eq!(g.grad(x).unwrap().item(), 12.0);
    g.zero_input_grads();
    assert!(g.grad(x).is_none());
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::vector(vec![1.0, 2.0]).unwrap(), true);
    let y = g.scale(x, 2.0).unwrap();
    assert!(matches!(g.backward_inputs(y), Err(NumericsError::NonScalarLoss(_))));
}

#[test]
fn stop_gradient_severs_one_branch() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::scalar(2.0), true);
    let sx = g.stop_gradient(x);
    assert_eq!(g.value(sx).item().to_bits(), g.value(x).item().to_bits());
    let y = g.mul(sx, x).unwrap();
    g.backward_inputs(y).unwrap();
    assert_eq!(g.grad(x).unwrap().item(), 2.0);
}

#[test]
fn stop_gradient_blocks_parameter_gradients() {
    let mut rng = seeded(1, stream::TEST);
    let mut store = ParamStore::<f64>::new();
    let w = store.add("w", &[3, 3], Init::Normal(1.0), &mut rng);
    let mut g = Graph::new();
    let wv = g.param(&store, w);
    let x = g.constant(random_tensor(&mut rng, &[1, 3]));
    let z = g.matmul(x, wv).unwrap();
    let zs = g.stop_gradient(z);
    let zhat = g.constant(random_tensor(&mut rng, &[1, 3]));
    let d = g.sub(zhat, zs).unwrap();
    let l = g.squared_l2(d).unwrap();
    g.backward(l, &mut store).unwrap();
    assert!(store.get(w).grad.data().iter().all(|&v| v == 0.0));
}

#[test]
fn adam_zero_gradient_leaves_parameters() {
    let mut rng = seeded(2, stream::TEST);
    let mut store = ParamStore::<f32>::new();
    let w = store.add("w", &[4], Init::Normal(1.0), &mut rng);
    let before = store.get(w).value.clone();
    let mut opt = Adam::new(AdamConfig::default());
    opt.step(&mut store).unwrap();
    assert_eq!(store.get(w).value, before);
    assert_eq!(opt.steps(), 1);
}

#[test]
fn adam_descends_and_converges_on_quadratic() {
    let mut store = ParamStore::<f64>::new();
    let x = store.push("x".into(), Tensor::vector(vec![1.0, -4.0]).unwrap());
    // f(x) = (x0 - 3)^2 + 2 (x1 + 1)^2, minimiser (3, -1)
    let target = [3.0, -1.0];
    let weights = [1.0, 2.0];
    let mut opt = Adam::new(AdamConfig {
        lr: 0.1,
        ..AdamConfig::default()
    });
    let loss = |store: &mut ParamStore<f64>| {
        let mut g = Graph::new();
        let xv = g.param(store, x);
        let t = g.constant(Tensor::vector(target.to_vec()).unwrap());
        let d = g.sub(xv, t).unwrap();
        let d2 = g.mul(d, d).unwrap();
        let w = g.mul_const(d2, weights.to_vec()).unwrap();
        let l = g.sum(w).unwrap();
        store.zero_grad();
        g.backward(l, store).unwrap();
    };
    loss(&mut store);
    opt.step(&mut store).unwrap();
    assert!(store.get(x).value.data()[0] > 1.0, "moved toward the minimiser");
    for _ in 0..199 {
        loss(&mut store);
        opt.step(&mut store).unwrap();
    }
    let v = store.get(x).value.data().to_vec();
    assert!((v[0] - 3.0).abs() < 1e-3 && (v[1] + 1.0).abs() < 1e-3, "{v:?}");
}

#[test]
fn adam_step_from_one_on_square_decreases() {
    let mut store = ParamStore::<f64>::new();
    let x = store.push("x".into(), Tensor::scalar(1.0));
    let mut g = Graph::new();
    let xv = g.param(&store, x);
    let l = g.mul(xv, xv).unwrap();
    g.backward(l, &mut store).unwrap();
    let mut opt = Adam::new(AdamConfig {
        lr: 0.1,
        ..AdamConfig::default()
    });
    opt.step(&mut store).unwrap();
    assert!(store.get(x).value.item() < 1.0);
}

#[test]
fn adam_rejects_non_finite_gradient() {
    let mut store = ParamStore::<f32>::new();
    let x = store.push("encoder.w".into(), Tensor::scalar(1.0));
    store.get_mut(x).grad.data_mut()[0] = f32::NAN;
    let err = Adam::new(AdamConfig::default()).step(&mut store).unwrap_err();
    assert!(err.to_string().contains("encoder.w"));
}

#[test]
fn gradcheck_square_at_three() {
    let err = gradcheck(|g, x| g.mul(x, x), &Tensor::scalar(3.0), 1e-4).unwrap();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn gradcheck_reports_non_finite() {
    let r = gradcheck(
        |g, x| {
            let y = g.scale(x, f64::INFINITY)?;
            g.sum(y)
        },
        &Tensor::scalar(1.0),
        1e-4,
    );
    assert!(matches!(r, Err(NumericsError::NonFinite(_))));
}

#[test]
fn every_primitive_passes_gradcheck_over_20_seeds() {
    let mut names = Vec::new();
    for seed in 0..20u64 {
        let mut rng = seeded(seed, stream::TEST);
        for (name, shape, f) in primitive_cases(&mut rng) {
            let point = primitive_point(name, &shape, &mut rng);
            let err = gradcheck(&f, &point, 1e-4).unwrap();
            assert!(err < 1e-4, "{name} seed {seed}: rel error {err}");
            if seed == 0 {
                names.push(name);
            }
        }
    }
    assert!(names.len() >= 20);
}

#[test]
fn softmax_rows_sum_to_one_and_masked_entries_are_zero() {
    let mut rng = seeded(5, stream::TEST);
    let mut g = Graph::<f32>::no_grad();
    let x = g.constant(random_tensor(&mut rng, &[5, 7]).cast::<f32>().map(|v| v * 30.0));
    let mask: Vec<bool> = (0..35).map(|i| (i * 7 + 3) % 5 != 0 || i % 7 == 0).collect();
    let y = g.softmax_masked(x, Some(&mask)).unwrap();
    for r in 0..5 {
        let row = g.value(y).row(r);
        let s: f64 = row.iter().map(|&v| v as f64).sum();
        assert!((s - 1.0).abs() < 1e-6);
        for (j, &p) in row.iter().enumerate() {
            assert!(p >= 0.0);
            if !mask[r * 7 + j] {
                assert_eq!(p, 0.0);
            }
        }
    }
}
