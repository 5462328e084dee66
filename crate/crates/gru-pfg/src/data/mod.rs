//! Factor-panel data handling: label arithmetic, date-range splits and the
//! panel container shared by training and evaluation.

pub mod io;
pub mod synth;

use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::model::{DayBatch, NUM_FACTORS};
use crate::scalar::Scalar;

/// Price change rate over a holding period.
pub fn trend<T: Scalar>(price: T, next_price: T) -> Result<T> {
    if price <= T::zero() {
        return Err(Error::Domain(format!("price must be positive, got {price}")));
    }
    Ok((next_price - price) / price)
}

/// Intraday return from open to close.
pub fn daily_return<T: Scalar>(open: T, close: T) -> Result<T> {
    if open <= T::zero() {
        return Err(Error::Domain(format!(
            "open price must be positive, got {open}"
        )));
    }
    Ok((close - open) / open)
}

/// One stock's row on one date: 360 factors plus the next-period return label.
#[derive(Debug, Clone, PartialEq)]
pub struct StockRow<T> {
    pub stock_id: String,
    pub factors: Vec<T>,
    pub label: T,
}

/// All stocks observed on one trading date.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDay<T> {
    pub date: NaiveDate,
    pub stocks: Vec<StockRow<T>>,
}

impl<T: Scalar> PanelDay<T> {
    /// Assemble this cross-section into a model input batch.
    pub fn to_batch(&self) -> Result<DayBatch<T>> {
        let mut ids = Vec::with_capacity(self.stocks.len());
        let mut inputs = Vec::with_capacity(self.stocks.len() * NUM_FACTORS);
        let mut labels = Vec::with_capacity(self.stocks.len());
        for row in &self.stocks {
            ids.push(row.stock_id.clone());
            inputs.extend_from_slice(&row.factors);
            labels.push(row.label);
        }
        DayBatch::new(self.date, ids, inputs, labels)
    }
}

/// A dated sequence of stock cross-sections.
///
/// Invariants: dates strictly increasing, no duplicate stock within a date,
/// every factor vector length 360, all values finite.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FactorPanel<T> {
    days: Vec<PanelDay<T>>,
}

impl<T: Scalar> FactorPanel<T> {
    pub fn new(days: Vec<PanelDay<T>>) -> Result<Self> {
        for pair in days.windows(2) {
            if pair[0].date >= pair[1].date {
                return Err(Error::Schema(format!(
                    "dates not strictly increasing: {} then {}",
                    pair[0].date, pair[1].date
                )));
            }
        }
        for day in &days {
            let mut seen = std::collections::HashSet::new();
            for row in &day.stocks {
                if !seen.insert(row.stock_id.as_str()) {
                    return Err(Error::Schema(format!(
                        "duplicate stock {} on {}",
                        row.stock_id, day.date
                    )));
                }
                if row.factors.len() != NUM_FACTORS {
                    return Err(Error::Schema(format!(
                        "stock {} on {} has {} factors, expected {NUM_FACTORS}",
                        row.stock_id,
                        day.date,
                        row.factors.len()
                    )));
                }
                if row.factors.iter().any(|v| !v.is_finite()) || !row.label.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "stock {} on {}",
                        row.stock_id, day.date
                    )));
                }
            }
        }
        Ok(FactorPanel { days })
    }

    pub fn days(&self) -> &[PanelDay<T>] {
        &self.days
    }

    pub fn num_days(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.days.iter().map(|d| d.date).collect()
    }

    pub fn num_rows(&self) -> usize {
        self.days.iter().map(|d| d.stocks.len()).sum()
    }

    /// Distinct stock ids across all dates.
    pub fn stock_ids(&self) -> Vec<String> {
        let mut set = std::collections::BTreeSet::new();
        for day in &self.days {
            for row in &day.stocks {
                set.insert(row.stock_id.clone());
            }
        }
        set.into_iter().collect()
    }

    /// Keep only the dates within `[start, end]` (inclusive).
    pub fn slice_dates(&self, start: NaiveDate, end: NaiveDate) -> Self {
        FactorPanel {
            days: self
                .days
                .iter()
                .filter(|d| d.date >= start && d.date <= end)
                .cloned()
                .collect(),
        }
    }
}

/// Train/validation/test date ranges (inclusive bounds).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: (NaiveDate, NaiveDate),
    pub valid: (NaiveDate, NaiveDate),
    pub test: (NaiveDate, NaiveDate),
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date literal")
}

impl Default for SplitSpec {
    /// The standard CSI benchmark protocol: train 2007-2014, validate
    /// 2015-2016, test 2017-2020.
    fn default() -> Self {
        SplitSpec {
            train: (ymd(2007, 1, 1), ymd(2014, 12, 31)),
            valid: (ymd(2015, 1, 1), ymd(2016, 12, 31)),
            test: (ymd(2017, 1, 1), ymd(2020, 12, 31)),
        }
    }
}

impl SplitSpec {
    pub fn new(
        train: (NaiveDate, NaiveDate),
        valid: (NaiveDate, NaiveDate),
        test: (NaiveDate, NaiveDate),
    ) -> Result<Self> {
        let spec = SplitSpec { train, valid, test };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (start, end)) in [
            ("train", self.train),
            ("valid", self.valid),
            ("test", self.test),
        ] {
            if start > end {
                return Err(Error::Spec(format!(
                    "{name} range starts {start} after its end {end}"
                )));
            }
        }
        if self.train.1 >= self.valid.0 {
            return Err(Error::Spec(format!(
                "train range ends {} at or after valid starts {}",
                self.train.1, self.valid.0
            )));
        }
        if self.valid.1 >= self.test.0 {
            return Err(Error::Spec(format!(
                "valid range ends {} at or after test starts {}",
                self.valid.1, self.test.0
            )));
        }
        Ok(())
    }
}

/// Partition a panel into train/valid/test by date. Dates outside all three
/// ranges are discarded; the ranges cannot overlap, so no date can land in
/// two splits.
pub fn split<T: Scalar>(
    panel: &FactorPanel<T>,
    spec: &SplitSpec,
) -> Result<(FactorPanel<T>, FactorPanel<T>, FactorPanel<T>)> {
    spec.validate()?;
    Ok((
        panel.slice_dates(spec.train.0, spec.train.1),
        panel.slice_dates(spec.valid.0, spec.valid.1),
        panel.slice_dates(spec.test.0, spec.test.1),
    ))
}

/// Build a labeled panel from per-date factor rows and per-date daily
/// returns: each row on date `t` is labeled with the stock's return on the
/// next available date. The final date has no next-day return and is
/// dropped; stocks missing a next-day return are dropped from their date.
pub fn attach_next_day_labels<T: Scalar>(
    days: Vec<(NaiveDate, Vec<(String, Vec<T>)>)>,
    returns: &BTreeMap<NaiveDate, BTreeMap<String, T>>,
) -> Result<FactorPanel<T>> {
    let mut out = Vec::new();
    for idx in 0..days.len().saturating_sub(1) {
        let next_date = days[idx + 1].0;
        let Some(next_returns) = returns.get(&next_date) else {
            continue;
        };
        let (date, rows) = &days[idx];
        let stocks: Vec<StockRow<T>> = rows
            .iter()
            .filter_map(|(id, factors)| {
                next_returns.get(id).map(|&label| StockRow {
                    stock_id: id.clone(),
                    factors: factors.clone(),
                    label,
                })
            })
            .collect();
        if !stocks.is_empty() {
            out.push(PanelDay {
                date: *date,
                stocks,
            });
        }
    }
    FactorPanel::new(out)
}
