//! Evaluation metrics: daily IC (Pearson), Rank IC (Spearman with average
//! ranks for ties) and Precision@N, aggregated over days and by calendar
//! month.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};
use crate::scalar::{Scalar, CORRELATION_EPS};

/// The Precision@N levels reported everywhere.
pub const PRECISION_LEVELS: [usize; 4] = [3, 5, 10, 30];

/// Pearson correlation between one day's predictions and labels.
/// Constant vectors correlate as 0 (the shared denominator-guard
/// convention of the correlation kernels).
pub fn daily_ic<T: Scalar>(preds: &[T], labels: &[T]) -> Result<T> {
    if preds.len() != labels.len() {
        return Err(Error::Contract(format!(
            "prediction count {} != label count {}",
            preds.len(),
            labels.len()
        )));
    }
    if preds.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: preds.len(),
        });
    }
    if preds.iter().chain(labels).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("daily_ic input".into()));
    }
    Ok(pearson(preds, labels))
}

fn pearson<T: Scalar>(x: &[T], y: &[T]) -> T {
    let n = T::from_usize(x.len()).expect("usize conversion");
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let mut cov = T::zero();
    let mut vx = T::zero();
    let mut vy = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    let denom = vx.sqrt() * vy.sqrt();
    if denom < T::from_f64_lossy(CORRELATION_EPS) {
        T::zero()
    } else {
        cov / denom
    }
}

/// Average (fractional) ranks, 1-based; ties share the mean of their span.
pub fn average_ranks<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![T::zero(); values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank mean of (i+1)..=j
        let avg = T::from_usize(i + 1 + j).expect("usize conversion") / T::from_f64_lossy(2.0);
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation: Pearson on average ranks.
pub fn daily_rank_ic<T: Scalar>(preds: &[T], labels: &[T]) -> Result<T> {
    if preds.len() != labels.len() {
        return Err(Error::Contract(format!(
            "prediction count {} != label count {}",
            preds.len(),
            labels.len()
        )));
    }
    if preds.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: preds.len(),
        });
    }
    if preds.iter().chain(labels).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("daily_rank_ic input".into()));
    }
    Ok(pearson(&average_ranks(preds), &average_ranks(labels)))
}

/// Percent of the N highest-predicted stocks whose label is strictly
/// positive. Prediction ties are broken by input position, which follows
/// the batch's stable stock-id order.
pub fn precision_at_n<T: Scalar>(preds: &[T], labels: &[T], n: usize) -> Result<f64> {
    let m = preds.len();
    if labels.len() != m {
        return Err(Error::Contract(format!(
            "prediction count {m} != label count {}",
            labels.len()
        )));
    }
    if n == 0 || n > m {
        return Err(Error::Spec(format!(
            "precision level {n} outside 1..={m}"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    // stable sort on descending prediction keeps input order within ties
    order.sort_by(|&a, &b| preds[b].partial_cmp(&preds[a]).expect("finite values"));
    let hits = order[..n]
        .iter()
        .filter(|&&i| labels[i] > T::zero())
        .count();
    Ok(100.0 * hits as f64 / n as f64)
}

/// Metrics of one evaluation day. Precision levels larger than the day's
/// cross-section are absent from the map.
#[derive(Debug, Clone)]
pub struct DayMetrics {
    pub date: NaiveDate,
    pub ic: f64,
    pub rank_ic: f64,
    pub precision: BTreeMap<usize, f64>,
}

/// Compute one day's metrics from aligned prediction and label vectors.
pub fn compute_day_metrics<T: Scalar>(
    date: NaiveDate,
    preds: &[T],
    labels: &[T],
) -> Result<DayMetrics> {
    let ic = daily_ic(preds, labels)?.to_f64_lossy();
    let rank_ic = daily_rank_ic(preds, labels)?.to_f64_lossy();
    let mut precision = BTreeMap::new();
    for n in PRECISION_LEVELS {
        if n <= preds.len() {
            precision.insert(n, precision_at_n(preds, labels, n)?);
        }
    }
    Ok(DayMetrics {
        date,
        ic,
        rank_ic,
        precision,
    })
}

/// Per-month averages for the monthly breakdown.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonthlyRow {
    pub ic: f64,
    pub precision: BTreeMap<usize, f64>,
}

/// Aggregate metrics over an evaluation window: means and (population)
/// standard deviations across days, plus per-calendar-month averages.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub ic_mean: f64,
    pub ic_std: f64,
    pub rank_ic_mean: f64,
    pub rank_ic_std: f64,
    /// Precision level -> (mean, std) over the days where the level applied.
    pub precision: BTreeMap<usize, (f64, f64)>,
    /// Calendar month (`YYYY-MM`) -> within-month averages.
    pub monthly: BTreeMap<String, MonthlyRow>,
    pub num_days: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Reduce per-day metrics into a [`MetricsReport`].
pub fn aggregate(days: &[DayMetrics]) -> Result<MetricsReport> {
    if days.is_empty() {
        return Err(Error::EmptyInput("no evaluation days".into()));
    }
    let ics: Vec<f64> = days.iter().map(|d| d.ic).collect();
    let rank_ics: Vec<f64> = days.iter().map(|d| d.rank_ic).collect();
    let (ic_mean, ic_std) = mean_std(&ics);
    let (rank_ic_mean, rank_ic_std) = mean_std(&rank_ics);

    let mut precision = BTreeMap::new();
    for n in PRECISION_LEVELS {
        let vals: Vec<f64> = days.iter().filter_map(|d| d.precision.get(&n)).copied().collect();
        if vals.is_empty() {
            precision.insert(n, (f64::NAN, f64::NAN));
        } else {
            precision.insert(n, mean_std(&vals));
        }
    }

    let mut monthly = BTreeMap::new();
    let mut buckets: BTreeMap<String, Vec<&DayMetrics>> = BTreeMap::new();
    for day in days {
        let key = format!("{:04}-{:02}", day.date.year(), day.date.month());
        buckets.entry(key).or_default().push(day);
    }
    for (key, bucket) in buckets {
        let ics: Vec<f64> = bucket.iter().map(|d| d.ic).collect();
        let mut precision = BTreeMap::new();
        for n in PRECISION_LEVELS {
            let vals: Vec<f64> = bucket
                .iter()
                .filter_map(|d| d.precision.get(&n))
                .copied()
                .collect();
            let mean = if vals.is_empty() {
                f64::NAN
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            };
            precision.insert(n, mean);
        }
        monthly.insert(
            key,
            MonthlyRow {
                ic: mean_std(&ics).0,
                precision,
            },
        );
    }

    Ok(MetricsReport {
        ic_mean,
        ic_std,
        rank_ic_mean,
        rank_ic_std,
        precision,
        monthly,
        num_days: days.len(),
    })
}

impl MetricsReport {
    /// Machine-readable summary: `metric,scope,value` rows with full
    /// round-trip float formatting.
    pub fn write_metrics_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("metric,scope,value\n");
        let mut push = |metric: &str, scope: &str, value: f64| {
            out.push_str(&format!("{metric},{scope},{value}\n"));
        };
        push("ic", "mean", self.ic_mean);
        push("ic", "std", self.ic_std);
        push("rank_ic", "mean", self.rank_ic_mean);
        push("rank_ic", "std", self.rank_ic_std);
        for (n, (mean, std)) in &self.precision {
            push(&format!("p{n}"), "mean", *mean);
            push(&format!("p{n}"), "std", *std);
        }
        out.push_str(&format!("num_days,count,{}\n", self.num_days));
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Per-month breakdown: `month,ic,p3,p5,p10,p30`.
    pub fn write_monthly_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "month,ic,p3,p5,p10,p30")?;
        for (month, row) in &self.monthly {
            write!(file, "{month},{}", row.ic)?;
            for n in PRECISION_LEVELS {
                write!(file, ",{}", row.precision.get(&n).copied().unwrap_or(f64::NAN))?;
            }
            writeln!(file)?;
        }
        Ok(())
    }
}

impl std::fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<10} {:>12} {:>12}", "metric", "mean", "std")?;
        writeln!(f, "{:<10} {:>12.6} {:>12.6}", "IC", self.ic_mean, self.ic_std)?;
        writeln!(
            f,
            "{:<10} {:>12.6} {:>12.6}",
            "Rank IC", self.rank_ic_mean, self.rank_ic_std
        )?;
        for (n, (mean, std)) in &self.precision {
            writeln!(f, "{:<10} {:>12.4} {:>12.4}", format!("P@{n}"), mean, std)?;
        }
        write!(f, "days: {}", self.num_days)
    }
}
