//! Brute-force oracle for the relationship-extraction pipeline: an
//! independent, straight-line evaluation of softmax -> correlation ->
//! 1/m scaling -> aggregation -> residual -> fusion -> head, compared
//! against the graph-based forward pass on small instances.

use gru_pfg::autodiff::Graph;
use gru_pfg::model::params::GruPfgParams;
use gru_pfg::model::{
    fuse_and_predict, primary_extraction, secondary_extraction, bind_fusion, bind_head,
    Similarity, CHANNELS,
};

// ── Oracle (no graph machinery; nested Vec matrices) ────────────────────

fn o_softmax_rows(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            exps.iter().map(|e| e / sum).collect()
        })
        .collect()
}

fn o_transpose(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (m, n) = (x.len(), x[0].len());
    (0..n).map(|j| (0..m).map(|i| x[i][j]).collect()).collect()
}

fn o_softmax_cols(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    o_transpose(&o_softmax_rows(&o_transpose(x)))
}

fn o_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    let denom = da.sqrt() * db.sqrt();
    if denom < 1e-8 {
        0.0
    } else {
        num / denom
    }
}

fn o_relation(rows: &[Vec<f64>], cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = rows.len();
    (0..m)
        .map(|x| {
            (0..m)
                .map(|y| o_pearson(&rows[x], &cols[y]) / m as f64)
                .collect()
        })
        .collect()
}

fn o_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (m, k, n) = (a.len(), b.len(), b[0].len());
    (0..m)
        .map(|i| {
            (0..n)
                .map(|j| (0..k).map(|p| a[i][p] * b[p][j]).sum())
                .collect()
        })
        .collect()
}

struct OracleOut {
    relation_primary: Vec<Vec<f64>>,
    feature_primary: Vec<Vec<f64>>,
    residual: Vec<Vec<f64>>,
    relation_secondary: Vec<Vec<f64>>,
    predictions: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn oracle_pipeline(
    x: &[Vec<f64>],
    w_row: f64,
    w_col: f64,
    w_base: f64,
    w_primary: f64,
    w_residual: f64,
    w_secondary: f64,
    head_w: &[f64],
    head_b: f64,
) -> OracleOut {
    let rows = o_softmax_rows(x);
    let cols = o_softmax_cols(x);
    let relation_primary = o_relation(&rows, &cols);
    let feature_primary = o_matmul(&relation_primary, x);

    let m = x.len();
    let n = x[0].len();
    let residual: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..n)
                .map(|j| x[i][j] - w_row * rows[i][j] - w_col * cols[i][j])
                .collect()
        })
        .collect();
    let rows2 = o_softmax_rows(&residual);
    let cols2 = o_softmax_cols(&residual);
    let relation_secondary = o_relation(&rows2, &cols2);
    let feature_secondary = o_matmul(&relation_secondary, &residual);

    let fused: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..n)
                .map(|j| {
                    w_base * x[i][j]
                        + w_primary * feature_primary[i][j]
                        + w_residual * residual[i][j]
                        + w_secondary * feature_secondary[i][j]
                })
                .collect()
        })
        .collect();
    let predictions = fused
        .iter()
        .map(|row| row.iter().zip(head_w).map(|(a, b)| a * b).sum::<f64>() + head_b)
        .collect();

    OracleOut {
        relation_primary,
        feature_primary,
        residual,
        relation_secondary,
        predictions,
    }
}

// ── Comparison harness ──────────────────────────────────────────────────

fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let k = (i as u64 * 2654435761 + seed * 97 + 13) % 1000;
            k as f64 / 500.0 - 1.0
        })
        .collect()
}

fn run_case(m: usize, n: usize, seed: u64) {
    let flat = pseudo_random(m * n, seed);
    let x_mat: Vec<Vec<f64>> = flat.chunks(n).map(|c| c.to_vec()).collect();

    let mut params = GruPfgParams::<f64>::zeros(CHANNELS, n);
    params.fusion.residual_row.values[0] = 0.13;
    params.fusion.residual_col.values[0] = 0.29;
    params.fusion.base.values[0] = 0.8;
    params.fusion.primary.values[0] = 0.55;
    params.fusion.residual.values[0] = -0.2;
    params.fusion.secondary.values[0] = 0.4;
    let head_w = pseudo_random(n, seed + 1);
    params.head.weight.values.copy_from_slice(&head_w);
    params.head.bias.values[0] = 0.07;

    // graph path, starting from the features matrix directly
    let mut g = Graph::<f64>::new();
    let mut bindings = Vec::new();
    let fusion_ids = bind_fusion(&mut g, &params.fusion, &mut bindings).unwrap();
    let head_ids = bind_head(&mut g, &params.head, &mut bindings).unwrap();
    let x = g.leaf(flat.clone(), &[m, n]).unwrap();
    let primary = primary_extraction(&mut g, x, Similarity::Pearson).unwrap();
    let (residual, secondary) =
        secondary_extraction(&mut g, x, &primary, &fusion_ids, Similarity::Pearson).unwrap();
    let (_, preds) = fuse_and_predict(
        &mut g,
        x,
        &primary,
        residual,
        &secondary,
        &fusion_ids,
        &head_ids,
    )
    .unwrap();

    let oracle = oracle_pipeline(
        &x_mat, 0.13, 0.29, 0.8, 0.55, -0.2, 0.4, &head_w, 0.07,
    );

    let flat_cmp = |got: &[f64], want: &[Vec<f64>], what: &str| {
        for (i, row) in want.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                let gval = got[i * row.len() + j];
                assert!(
                    (gval - w).abs() < 1e-10,
                    "{what}[{i}][{j}]: graph {gval} vs oracle {w}"
                );
            }
        }
    };
    flat_cmp(
        g.values(primary.relation),
        &oracle.relation_primary,
        "primary relation",
    );
    flat_cmp(
        g.values(primary.feature),
        &oracle.feature_primary,
        "primary feature",
    );
    flat_cmp(g.values(residual), &oracle.residual, "residual");
    flat_cmp(
        g.values(secondary.relation),
        &oracle.relation_secondary,
        "secondary relation",
    );
    let got_preds = g.values(preds);
    for (i, &want) in oracle.predictions.iter().enumerate() {
        assert!(
            (got_preds[i] - want).abs() < 1e-10,
            "prediction[{i}]: {} vs {want}",
            got_preds[i]
        );
    }
}

#[test]
fn two_stock_case_matches_oracle() {
    // the worked 2x3 instance plus pseudo-random fill
    let mut g = Graph::<f64>::new();
    let x = g.leaf(vec![1.0, 2.0, 3.0, 3.0, 2.0, 1.0], &[2, 3]).unwrap();
    let stage = primary_extraction(&mut g, x, Similarity::Pearson).unwrap();
    let x_mat = vec![vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]];
    let rows = o_softmax_rows(&x_mat);
    let cols = o_softmax_cols(&x_mat);
    let want_rel = o_relation(&rows, &cols);
    let want_feat = o_matmul(&want_rel, &x_mat);
    let got_rel = g.values(stage.relation);
    let got_feat = g.values(stage.feature);
    for i in 0..2 {
        for j in 0..2 {
            assert!((got_rel[i * 2 + j] - want_rel[i][j]).abs() < 1e-10);
        }
        for j in 0..3 {
            assert!((got_feat[i * 3 + j] - want_feat[i][j]).abs() < 1e-10);
        }
    }
}

#[test]
fn three_stock_full_pipeline_matches_oracle() {
    run_case(3, 6, 0);
}

#[test]
fn larger_instances_match_oracle() {
    for seed in 1..5 {
        run_case(5, 8, seed);
        run_case(2, 4, seed + 10);
    }
}
