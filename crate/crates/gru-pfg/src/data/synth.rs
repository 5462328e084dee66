//! Synthetic factor panels with planted inter-stock correlation structure.
//!
//! Stocks are partitioned into groups; each group shares a latent AR(1)
//! driver. A stock's six channels at step `s` of date `t` observe the
//! driver value at internal time `t + s`, scaled by `signal_strength`,
//! plus per-channel Gaussian noise. The label is the driver's next-day
//! increment (also scaled by `signal_strength`) plus per-stock noise, so
//! cross-stock pooling within a group is informative for the label by
//! construction, and `signal_strength = 0` makes labels pure noise.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{CHANNELS, STEPS};
use crate::scalar::Scalar;

use super::{FactorPanel, PanelDay, StockRow};

/// Mean-reversion coefficient of the latent group drivers. Kept low so the
/// driver level is hard to recover from one stock's noisy history alone and
/// cross-stock pooling pays off.
pub const DRIVER_PHI: f64 = 0.3;
/// Label noise standard deviation relative to `noise_sigma`: labels are
/// less noisy than individual input channels, which observe the driver
/// only once per step each.
pub const LABEL_NOISE_FRACTION: f64 = 0.25;
/// First trading date of generated panels (a Monday).
pub const FIRST_DATE: (i32, u32, u32) = (2010, 1, 4);

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_stocks: usize,
    pub num_days: usize,
    pub num_groups: usize,
    pub signal_strength: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.num_stocks == 0 || self.num_days == 0 {
            return Err(Error::Spec(
                "num_stocks and num_days must be positive".into(),
            ));
        }
        if self.num_groups == 0 || self.num_groups > self.num_stocks {
            return Err(Error::Spec(format!(
                "num_groups must be in 1..={} (got {})",
                self.num_stocks, self.num_groups
            )));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return Err(Error::Spec(format!(
                "signal_strength must be in [0, 1], got {}",
                self.signal_strength
            )));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(Error::Spec(format!(
                "noise_sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Consecutive weekdays starting from [`FIRST_DATE`].
pub fn trading_dates(num_days: usize) -> Vec<NaiveDate> {
    let (y, m, d) = FIRST_DATE;
    let mut date = NaiveDate::from_ymd_opt(y, m, d).expect("valid first date");
    let mut out = Vec::with_capacity(num_days);
    while out.len() < num_days {
        if !matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(date);
        }
        date = date.succ_opt().expect("date range");
    }
    out
}

/// Generate a panel; a pure function of its config.
pub fn gen_synthetic<T: Scalar>(cfg: &SynthConfig) -> Result<FactorPanel<T>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    // Driver index k serves step s of date t at k = t + s; the label of
    // date t needs k = t + STEPS, so simulate num_days + STEPS points.
    let driver_len = cfg.num_days + STEPS;
    let stationary_sd = (1.0 / (1.0 - DRIVER_PHI * DRIVER_PHI)).sqrt();
    let drivers: Vec<Vec<f64>> = (0..cfg.num_groups)
        .map(|_| {
            let mut path = Vec::with_capacity(driver_len);
            path.push(normal(&mut rng) * stationary_sd);
            for _ in 1..driver_len {
                let prev = *path.last().expect("non-empty");
                path.push(DRIVER_PHI * prev + normal(&mut rng));
            }
            path
        })
        .collect();

    let dates = trading_dates(cfg.num_days);
    let mut days = Vec::with_capacity(cfg.num_days);
    for (t, &date) in dates.iter().enumerate() {
        let mut stocks = Vec::with_capacity(cfg.num_stocks);
        for i in 0..cfg.num_stocks {
            let driver = &drivers[i % cfg.num_groups];
            let mut factors = Vec::with_capacity(STEPS * CHANNELS);
            for s in 0..STEPS {
                let level = cfg.signal_strength * driver[t + s];
                for _ in 0..CHANNELS {
                    factors.push(T::from_f64_lossy(
                        level + cfg.noise_sigma * normal(&mut rng),
                    ));
                }
            }
            let increment = driver[t + STEPS] - driver[t + STEPS - 1];
            let label = cfg.signal_strength * increment
                + LABEL_NOISE_FRACTION * cfg.noise_sigma * normal(&mut rng);
            stocks.push(StockRow {
                stock_id: format!("S{i:04}"),
                factors,
                label: T::from_f64_lossy(label),
            });
        }
        days.push(PanelDay { date, stocks });
    }
    FactorPanel::new(days)
}
