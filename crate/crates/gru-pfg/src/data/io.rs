//! Panel file format: CSV with header `date,stock_id,f000..f359,label`,
//! ISO-8601 dates and round-trip float formatting.

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::model::NUM_FACTORS;
use crate::scalar::Scalar;

use super::{FactorPanel, PanelDay, StockRow};

/// Counters from one [`load_panel`] call; serializes as `key=value` lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub rows_loaded: usize,
    pub rows_dropped: usize,
    pub num_days: usize,
    pub num_stocks: usize,
}

impl std::fmt::Display for LoadReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "rows_loaded={}", self.rows_loaded)?;
        writeln!(f, "rows_dropped={}", self.rows_dropped)?;
        writeln!(f, "num_days={}", self.num_days)?;
        writeln!(f, "num_stocks={}", self.num_stocks)
    }
}

impl LoadReport {
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        write!(file, "{self}")?;
        Ok(())
    }
}

fn expected_header() -> Vec<String> {
    let mut header = vec!["date".to_string(), "stock_id".to_string()];
    header.extend((0..NUM_FACTORS).map(|i| format!("f{i:03}")));
    header.push("label".to_string());
    header
}

/// Write a panel as CSV. Floats use Rust's shortest round-trip formatting,
/// so a write/load cycle reproduces values exactly.
pub fn write_panel<T: Scalar>(panel: &FactorPanel<T>, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_error)?;
    writer
        .write_record(expected_header())
        .map_err(csv_error)?;
    let mut record = Vec::with_capacity(NUM_FACTORS + 3);
    for day in panel.days() {
        for row in &day.stocks {
            record.clear();
            record.push(day.date.format("%Y-%m-%d").to_string());
            record.push(row.stock_id.clone());
            record.extend(row.factors.iter().map(|v| v.to_string()));
            record.push(row.label.to_string());
            writer.write_record(&record).map_err(csv_error)?;
        }
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Schema(format!("csv: {e}"))
}

/// Load a panel, dropping (and counting) rows with any non-finite factor
/// or label. Dates are sorted on load; duplicate (date, stock) pairs and
/// malformed headers are schema errors, an empty result is an error.
pub fn load_panel<T: Scalar>(path: &Path) -> Result<(FactorPanel<T>, LoadReport)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::Schema(format!("cannot open {}: {e}", path.display())),
        _ => csv_error(e),
    })?;

    let header: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    let expected = expected_header();
    if header != expected {
        let missing: Vec<&String> = expected.iter().filter(|c| !header.contains(c)).collect();
        return Err(Error::Schema(format!(
            "panel header mismatch; missing or misplaced columns: {missing:?}"
        )));
    }

    let mut days: std::collections::BTreeMap<NaiveDate, Vec<StockRow<T>>> = Default::default();
    let mut report = LoadReport::default();
    let mut stock_ids = std::collections::BTreeSet::new();

    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        if record.len() != expected.len() {
            return Err(Error::Schema(format!(
                "row {} has {} fields, expected {}",
                line + 2,
                record.len(),
                expected.len()
            )));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| Error::Schema(format!("row {}: bad date {:?}: {e}", line + 2, &record[0])))?;
        let stock_id = record[1].to_string();

        let mut finite = true;
        let mut factors = Vec::with_capacity(NUM_FACTORS);
        for field in record.iter().skip(2).take(NUM_FACTORS) {
            let v: f64 = field.parse().map_err(|e| {
                Error::Schema(format!("row {}: bad float {field:?}: {e}", line + 2))
            })?;
            finite &= v.is_finite();
            factors.push(T::from_f64_lossy(v));
        }
        let label: f64 = record[NUM_FACTORS + 2].parse().map_err(|e| {
            Error::Schema(format!("row {}: bad label: {e}", line + 2))
        })?;
        finite &= label.is_finite();

        if !finite {
            report.rows_dropped += 1;
            continue;
        }

        let rows = days.entry(date).or_default();
        if rows.iter().any(|r| r.stock_id == stock_id) {
            return Err(Error::Schema(format!(
                "duplicate stock {stock_id} on {date}"
            )));
        }
        stock_ids.insert(stock_id.clone());
        rows.push(StockRow {
            stock_id,
            factors,
            label: T::from_f64_lossy(label),
        });
        report.rows_loaded += 1;
    }

    if days.is_empty() {
        return Err(Error::EmptyInput(format!(
            "panel {} has no usable rows",
            path.display()
        )));
    }

    let panel = FactorPanel::new(
        days.into_iter()
            .map(|(date, stocks)| PanelDay { date, stocks })
            .collect(),
    )?;
    report.num_days = panel.num_days();
    report.num_stocks = stock_ids.len();
    Ok((panel, report))
}
