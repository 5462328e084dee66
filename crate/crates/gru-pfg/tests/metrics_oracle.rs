//! Independent brute-force oracles for IC, Rank IC and Precision@N, run
//! against 1,000 random small instances, plus the metric invariance
//! properties.

use gru_pfg::metrics::{daily_ic, daily_rank_ic, precision_at_n};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ── Oracles ─────────────────────────────────────────────────────────────

fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let dx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let dy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let denom = dx.sqrt() * dy.sqrt();
    if denom < 1e-8 {
        0.0
    } else {
        num / denom
    }
}

/// Rank by counting: 1 + (#strictly smaller) + (#equal - 1) / 2.
fn oracle_ranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let smaller = values.iter().filter(|&&w| w < v).count();
            let equal = values.iter().filter(|&&w| w == v).count();
            smaller as f64 + 1.0 + (equal as f64 - 1.0) / 2.0
        })
        .collect()
}

fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    oracle_pearson(&oracle_ranks(x), &oracle_ranks(y))
}

/// Enumerate the top-N set by (prediction desc, index asc) and count wins.
fn oracle_precision(preds: &[f64], labels: &[f64], n: usize) -> f64 {
    let mut idx: Vec<usize> = (0..preds.len()).collect();
    idx.sort_by(|&a, &b| {
        preds[b]
            .partial_cmp(&preds[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let hits = idx[..n].iter().filter(|&&i| labels[i] > 0.0).count();
    100.0 * hits as f64 / n as f64
}

// ── Agreement over 1,000 random instances ───────────────────────────────

#[test]
fn metrics_agree_with_oracles_on_1000_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240601);
    for case in 0..1000 {
        let m = rng.random_range(2..=10usize);
        // quantized values so that exact prediction ties occur regularly
        let preds: Vec<f64> = (0..m)
            .map(|_| (rng.random_range(-5..=5i32) as f64) * 0.1)
            .collect();
        let labels: Vec<f64> = (0..m)
            .map(|_| (rng.random_range(-5..=5i32) as f64) * 0.01)
            .collect();

        let ic = daily_ic(&preds, &labels).unwrap();
        assert!(
            (ic - oracle_pearson(&preds, &labels)).abs() < 1e-12,
            "case {case}: ic mismatch"
        );

        let rank_ic = daily_rank_ic(&preds, &labels).unwrap();
        assert!(
            (rank_ic - oracle_spearman(&preds, &labels)).abs() < 1e-12,
            "case {case}: rank ic mismatch on preds {preds:?}"
        );

        for n in 1..=m {
            let p = precision_at_n(&preds, &labels, n).unwrap();
            assert!(
                (p - oracle_precision(&preds, &labels, n)).abs() < 1e-12,
                "case {case}: precision@{n} mismatch on preds {preds:?}"
            );
        }
    }
}

#[test]
fn worked_precision_example() {
    let preds = [0.3, 0.2, 0.1, -0.1];
    let labels = [0.05, -0.02, 0.10, 0.20];
    assert_eq!(precision_at_n(&preds, &labels, 2).unwrap(), 50.0);
}

#[test]
fn rank_ic_tie_handling_matches_enumeration() {
    let preds = [1.0, 2.0, 2.0, 4.0];
    let labels = [1.0, 2.0, 3.0, 4.0];
    let got = daily_rank_ic(&preds, &labels).unwrap();
    let want = oracle_spearman(&preds, &labels);
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}

// ── Invariance properties ───────────────────────────────────────────────

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ic_invariant_under_positive_affine_transform(
        values in prop::collection::vec(-100.0f64..100.0, 3..12),
        scale in 0.01f64..50.0,
        shift in -10.0f64..10.0,
    ) {
        let labels: Vec<f64> = values.iter().map(|v| v * 0.5 - 1.0).collect();
        let transformed: Vec<f64> = values.iter().map(|v| scale * v + shift).collect();
        let a = daily_ic(&values, &labels).unwrap();
        let b = daily_ic(&transformed, &labels).unwrap();
        prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        let ra = daily_rank_ic(&values, &labels).unwrap();
        let rb = daily_rank_ic(&transformed, &labels).unwrap();
        prop_assert!((ra - rb).abs() < 1e-9, "{ra} vs {rb}");
    }

    #[test]
    fn precision_invariant_under_strictly_increasing_transform(
        values in prop::collection::vec(-10.0f64..10.0, 3..12),
        n in 1usize..3,
    ) {
        let labels: Vec<f64> = values.iter().rev().cloned().collect();
        let transformed: Vec<f64> = values.iter().map(|v| v.exp() + v * 3.0).collect();
        let a = precision_at_n(&values, &labels, n).unwrap();
        let b = precision_at_n(&transformed, &labels, n).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ic_bounded(values in prop::collection::vec(-100.0f64..100.0, 2..12)) {
        let labels: Vec<f64> = values.iter().map(|v| (v * 7.7).sin()).collect();
        let ic = daily_ic(&values, &labels).unwrap();
        prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&ic));
    }
}
