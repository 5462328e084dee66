//! Finite-difference oracles for the backward pass: every analytic
//! gradient is compared against central differences computed from forward
//! evaluations only.

use gru_pfg::autodiff::gradcheck::{grad_check, FnTarget};
use gru_pfg::autodiff::{Graph, TensorId};
use gru_pfg::baselines::VariantKind;
use gru_pfg::train::model_grad_check;

type BuildFn = fn(&[f64], &mut Graph<f64>) -> (TensorId, TensorId);

/// Gradient-check a scalar-valued graph builder against finite differences.
fn check_graph(build: BuildFn, params: &[f64], eps: f64) -> f64 {
    let target = FnTarget {
        value_fn: move |p: &[f64]| {
            let mut g = Graph::new();
            let (_, loss) = build(p, &mut g);
            Ok(g.values(loss)[0])
        },
        gradient_fn: move |p: &[f64]| {
            let mut g = Graph::new();
            let (leaf, loss) = build(p, &mut g);
            g.backward(loss)?;
            Ok(g.grad(leaf).unwrap().to_vec())
        },
    };
    grad_check(&target, params, eps).unwrap()
}

fn pseudo_random(n: usize, scale: f64) -> Vec<f64> {
    // deterministic, irregular, sign-mixed values
    (0..n)
        .map(|i| {
            let k = (i * i * 2654435761 + 97) % 1000;
            (k as f64 / 500.0 - 1.0) * scale
        })
        .collect()
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    // d/dA of sum(A·B) for fixed B, checked through mean_all scaling
    let build: BuildFn = |p, g| {
        let a = g.leaf(p.to_vec(), &[3, 4]).unwrap();
        let b = g
            .leaf(pseudo_random(8, 1.0), &[4, 2])
            .unwrap();
        let prod = g.matmul(a, b).unwrap();
        let loss = g.mean_all(prod);
        (a, loss)
    };
    let worst = check_graph(build, &pseudo_random(12, 1.0), 1e-5);
    assert!(worst < 1e-6, "worst rel err {worst}");
}

#[test]
fn matmul_gradient_wrt_right_operand() {
    let build: BuildFn = |p, g| {
        let a = g.leaf(pseudo_random(12, 1.0), &[3, 4]).unwrap();
        let b = g.leaf(p.to_vec(), &[4, 2]).unwrap();
        let prod = g.matmul(a, b).unwrap();
        let loss = g.mean_all(prod);
        (b, loss)
    };
    let worst = check_graph(build, &pseudo_random(8, 1.0), 1e-5);
    assert!(worst < 1e-6, "worst rel err {worst}");
}

#[test]
fn elementwise_composite_gradient() {
    // sigmoid, tanh, mul, add, sub, add_row and scale_by_scalar composed
    let build: BuildFn = |p, g| {
        let x = g.leaf(p.to_vec(), &[3, 4]).unwrap();
        let row = g.leaf(pseudo_random(4, 0.5), &[4]).unwrap();
        let s = g.leaf(vec![0.7], &[1]).unwrap();
        let a = g.sigmoid(x);
        let b = g.tanh(x);
        let prod = g.mul(a, b).unwrap();
        let sum = g.add(prod, x).unwrap();
        let diff = g.sub(sum, b).unwrap();
        let biased = g.add_row(diff, row).unwrap();
        let scaled = g.scale_by_scalar(biased, s).unwrap();
        let loss = g.mean_all(scaled);
        (x, loss)
    };
    let worst = check_graph(build, &pseudo_random(12, 0.8), 1e-5);
    assert!(worst < 1e-7, "worst rel err {worst}");
}

#[test]
fn scale_by_scalar_gradient_wrt_scalar() {
    let build: BuildFn = |p, g| {
        let s = g.leaf(p.to_vec(), &[1]).unwrap();
        let x = g.leaf(pseudo_random(6, 1.0), &[2, 3]).unwrap();
        let t = g.tanh(x);
        let scaled = g.scale_by_scalar(t, s).unwrap();
        let sq = g.mul(scaled, scaled).unwrap();
        let loss = g.mean_all(sq);
        (s, loss)
    };
    let worst = check_graph(build, &[0.42], 1e-5);
    assert!(worst < 1e-8, "worst rel err {worst}");
}

#[test]
fn softmax_and_pearson_gradient() {
    let build: BuildFn = |p, g| {
        let x = g.leaf(p.to_vec(), &[4, 5]).unwrap();
        let sr = g.softmax_rows(x).unwrap();
        let sc = g.softmax_cols(x).unwrap();
        let r = g.pearson_rows(sr, sc).unwrap();
        let sq = g.mul(r, r).unwrap();
        let loss = g.mean_all(sq);
        (x, loss)
    };
    let worst = check_graph(build, &pseudo_random(20, 1.2), 1e-5);
    assert!(worst < 1e-5, "worst rel err {worst}");
}

#[test]
fn cosine_gradient() {
    let build: BuildFn = |p, g| {
        let x = g.leaf(p.to_vec(), &[4, 5]).unwrap();
        let sr = g.softmax_rows(x).unwrap();
        let sc = g.softmax_cols(x).unwrap();
        let r = g.cosine_rows(sr, sc).unwrap();
        let loss = g.mean_all(r);
        (x, loss)
    };
    let worst = check_graph(build, &pseudo_random(20, 1.1), 1e-5);
    assert!(worst < 1e-5, "worst rel err {worst}");
}

#[test]
fn full_model_gradient_small_batch() {
    let worst = model_grad_check::<f64>(VariantKind::GruPfg, 5, 8, 42, 1).unwrap();
    assert!(worst < 1e-4, "worst rel err {worst}");
}

#[test]
fn mlp_gradient_subsampled() {
    let worst = model_grad_check::<f64>(VariantKind::Mlp, 4, 8, 7, 997).unwrap();
    assert!(worst < 1e-4, "worst rel err {worst}");
}

#[test]
fn gru_baseline_gradient() {
    let worst = model_grad_check::<f64>(VariantKind::Gru, 4, 8, 11, 3).unwrap();
    assert!(worst < 1e-4, "worst rel err {worst}");
}

#[test]
fn cosine_variant_gradient() {
    let worst = model_grad_check::<f64>(VariantKind::GruPfgCosine, 4, 8, 13, 3).unwrap();
    assert!(worst < 1e-4, "worst rel err {worst}");
}

#[test]
fn primary_only_variant_gradient() {
    let worst = model_grad_check::<f64>(VariantKind::GruPfgPrimaryOnly, 4, 8, 17, 3).unwrap();
    assert!(worst < 1e-4, "worst rel err {worst}");
}
