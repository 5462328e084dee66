//! Day-batch training with early stopping on validation IC, plus
//! frozen-parameter evaluation.
//!
//! The batch unit is one trading day's full cross-section: the relation
//! matrices couple all stocks of a date, so stocks cannot be mini-batched.
//! Gradient steps run strictly sequentially; validation fans out per day
//! and reduces in date order.

pub mod checkpoint;
pub mod config;
pub mod optim;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autodiff::{Graph, TensorId};
use crate::baselines::{ModelVariant, VariantKind};
use crate::data::FactorPanel;
use crate::error::{Error, Result};
use crate::metrics::{aggregate, compute_day_metrics, daily_ic, MetricsReport};
use crate::model::params::ParamSet;
use crate::model::{harvest_gradients, DayBatch};
use crate::scalar::Scalar;

pub use config::{OptimizerKind, TrainConfig};
pub use optim::Optimizer;

/// Mean squared error over one day's cross-section:
/// `sum_i (pred_i - label_i)^2 / m`.
pub fn day_loss<T: Scalar>(
    g: &mut Graph<T>,
    predictions: TensorId,
    labels: &[T],
) -> Result<TensorId> {
    let m = g.values(predictions).len();
    if m != labels.len() {
        return Err(Error::Contract(format!(
            "{m} predictions vs {} labels",
            labels.len()
        )));
    }
    let target = g.leaf(labels.to_vec(), g.shape(predictions).to_vec().as_slice())?;
    let diff = g.sub(predictions, target)?;
    let sq = g.mul(diff, diff)?;
    Ok(g.mean_all(sq))
}

/// One epoch's log row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    /// Mean per-day training loss (day losses as seen during the epoch).
    pub train_loss: f64,
    /// Mean daily IC over the validation split.
    pub valid_ic: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRow>,
    pub best_epoch: usize,
    pub best_valid_ic: f64,
    pub stopping_reason: String,
    /// Training days skipped because their cross-section had fewer than
    /// two stocks (correlations are undefined there).
    pub skipped_train_days: usize,
}

impl TrainLog {
    /// CSV rows `epoch,train_loss,valid_ic,seconds`. Losses and ICs use
    /// round-trip formatting; seconds are wall time and vary run to run.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "epoch,train_loss,valid_ic,seconds")?;
        for row in &self.epochs {
            writeln!(
                file,
                "{},{},{},{:.3}",
                row.epoch, row.train_loss, row.valid_ic, row.seconds
            )?;
        }
        Ok(())
    }
}

fn usable_batches<T: Scalar>(panel: &FactorPanel<T>) -> Result<(Vec<DayBatch<T>>, usize)> {
    let mut batches = Vec::new();
    let mut skipped = 0;
    for day in panel.days() {
        if day.stocks.len() < 2 {
            skipped += 1;
            continue;
        }
        batches.push(day.to_batch()?);
    }
    Ok((batches, skipped))
}

/// Mean daily IC of frozen-parameter predictions over a batch list.
fn mean_valid_ic<T: Scalar>(model: &ModelVariant<T>, batches: &[DayBatch<T>]) -> Result<f64> {
    let ics: Vec<f64> = batches
        .par_iter()
        .map(|batch| -> Result<f64> {
            let preds = model.predict(batch)?;
            Ok(daily_ic(&preds, &batch.labels)?.to_f64_lossy())
        })
        .collect::<Result<_>>()?;
    Ok(ics.iter().sum::<f64>() / ics.len() as f64)
}

/// Train a freshly initialized model of `kind` on the train split,
/// early-stopping on mean validation IC. Deterministic given `config.seed`.
pub fn train<T: Scalar>(
    kind: VariantKind,
    train_panel: &FactorPanel<T>,
    valid_panel: &FactorPanel<T>,
    config: &TrainConfig,
) -> Result<(ModelVariant<T>, TrainLog)> {
    config.validate()?;
    let (train_batches, skipped_train_days) = usable_batches(train_panel)?;
    let (valid_batches, _) = usable_batches(valid_panel)?;
    if train_batches.is_empty() {
        return Err(Error::EmptyInput("no usable training days".into()));
    }
    if valid_batches.is_empty() {
        return Err(Error::EmptyInput("no usable validation days".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ModelVariant::init(kind, config.hidden_size, &mut rng);
    let mut optimizer = Optimizer::new(config);

    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_valid_ic: f64::NEG_INFINITY,
        stopping_reason: "max_epochs".to_string(),
        skipped_train_days,
    };
    let mut best_params = model.to_flat();
    let mut epochs_without_improvement = 0;
    let mut order: Vec<usize> = (0..train_batches.len()).collect();

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for &idx in &order {
            let batch = &train_batches[idx];
            let mut pass = model.forward(batch)?;
            let loss = day_loss(&mut pass.graph, pass.predictions, &batch.labels)?;
            let loss_value = pass.graph.values(loss)[0].to_f64_lossy();
            if !loss_value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    date: batch.date.to_string(),
                    reason: format!("day loss is {loss_value}"),
                });
            }
            loss_sum += loss_value;

            model.zero_grads();
            pass.graph.backward(loss)?;
            harvest_gradients(&pass, &mut model);
            optimizer.step(&mut model);
            if !model.all_finite() {
                return Err(Error::Divergence {
                    epoch,
                    date: batch.date.to_string(),
                    reason: "non-finite parameter after update".into(),
                });
            }
        }
        let train_loss = loss_sum / train_batches.len() as f64;
        let valid_ic = mean_valid_ic(&model, &valid_batches)?;

        log.epochs.push(EpochRow {
            epoch,
            train_loss,
            valid_ic,
            seconds: started.elapsed().as_secs_f64(),
        });

        if valid_ic > log.best_valid_ic {
            log.best_valid_ic = valid_ic;
            log.best_epoch = epoch;
            best_params = model.to_flat();
            epochs_without_improvement = 0;
        } else {
            epochs_without_improvement += 1;
            if epochs_without_improvement >= config.early_stop_patience {
                log.stopping_reason = "early_stop".to_string();
                break;
            }
        }
    }

    model.from_flat(&best_params)?;
    Ok((model, log))
}

/// Central finite-difference check of the day-loss gradient through a full
/// model forward on a random batch. Checks every `stride`-th coordinate of
/// the flattened parameters (1 = all) and returns the worst relative error.
pub fn model_grad_check<T: Scalar>(
    kind: VariantKind,
    num_stocks: usize,
    hidden_size: usize,
    seed: u64,
    stride: usize,
) -> Result<T> {
    use crate::autodiff::gradcheck::{grad_check, FnTarget, DEFAULT_FD_EPS};
    use rand::Rng;

    if num_stocks == 0 || stride == 0 {
        return Err(Error::Spec("num_stocks and stride must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let template = ModelVariant::<T>::init(kind, hidden_size, &mut rng);
    let inputs = (0..num_stocks * crate::model::NUM_FACTORS)
        .map(|_| T::from_f64_lossy(rng.random_range(-1.0..1.0)))
        .collect();
    let labels: Vec<T> = (0..num_stocks)
        .map(|_| T::from_f64_lossy(rng.random_range(-0.05..0.05)))
        .collect();
    let batch = DayBatch::new(
        chrono::NaiveDate::from_ymd_opt(2020, 1, 6).expect("valid date"),
        (0..num_stocks).map(|i| format!("S{i:04}")).collect(),
        inputs,
        labels,
    )?;

    let full = template.to_flat();
    let coords: Vec<usize> = (0..full.len()).step_by(stride).collect();
    let subset: Vec<T> = coords.iter().map(|&i| full[i]).collect();

    let loss_of = {
        let template = template.clone();
        let batch = batch.clone();
        let full = full.clone();
        let coords = coords.clone();
        move |p: &[T]| -> Result<T> {
            let mut flat = full.clone();
            for (&c, &v) in coords.iter().zip(p) {
                flat[c] = v;
            }
            let mut model = template.clone();
            model.from_flat(&flat)?;
            let mut pass = model.forward(&batch)?;
            let loss = day_loss(&mut pass.graph, pass.predictions, &batch.labels)?;
            Ok(pass.graph.values(loss)[0])
        }
    };
    let grad_of = {
        let coords = coords.clone();
        move |p: &[T]| -> Result<Vec<T>> {
            let mut flat = full.clone();
            for (&c, &v) in coords.iter().zip(p) {
                flat[c] = v;
            }
            let mut model = template.clone();
            model.from_flat(&flat)?;
            model.zero_grads();
            let mut pass = model.forward(&batch)?;
            let loss = day_loss(&mut pass.graph, pass.predictions, &batch.labels)?;
            pass.graph.backward(loss)?;
            harvest_gradients(&pass, &mut model);
            let g = model.grad_to_flat();
            Ok(coords.iter().map(|&i| g[i]).collect())
        }
    };

    grad_check(
        &FnTarget {
            value_fn: loss_of,
            gradient_fn: grad_of,
        },
        &subset,
        T::from_f64_lossy(DEFAULT_FD_EPS),
    )
}

/// Frozen-parameter evaluation over every day of a panel. Days with fewer
/// than two stocks are skipped; an empty panel is an error.
pub fn evaluate<T: Scalar>(model: &ModelVariant<T>, panel: &FactorPanel<T>) -> Result<MetricsReport> {
    if panel.is_empty() {
        return Err(Error::EmptyInput("evaluation panel has no days".into()));
    }
    let (batches, _) = usable_batches(panel)?;
    if batches.is_empty() {
        return Err(Error::EmptyInput(
            "evaluation panel has no days with at least two stocks".into(),
        ));
    }
    let days = batches
        .par_iter()
        .map(|batch| {
            let preds = model.predict(batch)?;
            compute_day_metrics(batch.date, &preds, &batch.labels)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(&days)
}
