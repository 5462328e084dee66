//! Flat `section.key = value` config files (INI-style comments with `#` or
//! `;`). Every key has a default; unknown keys are errors.
//!
//! ```text
//! model.kind = gru-pfg
//! model.hidden_size = 64
//! train.epochs = 100
//! train.learning_rate = 2e-4
//! train.optimizer = adam
//! train.adam_beta1 = 0.9
//! train.adam_beta2 = 0.999
//! train.adam_eps = 1e-8
//! train.early_stop_patience = 10
//! train.seed = 0
//! train.grad_clip_norm = 3.0        # or "none"
//! split.train_start = 2007-01-01
//! split.train_end = 2014-12-31
//! split.valid_start = 2015-01-01
//! split.valid_end = 2016-12-31
//! split.test_start = 2017-01-01
//! split.test_end = 2020-12-31
//! ```

use std::path::Path;

use chrono::NaiveDate;
use gru_pfg::baselines::VariantKind;
use gru_pfg::data::SplitSpec;
use gru_pfg::train::TrainConfig;
use gru_pfg::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub kind: VariantKind,
    pub train: TrainConfig,
    pub split: SplitSpec,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            kind: VariantKind::GruPfg,
            train: TrainConfig::default(),
            split: SplitSpec::default(),
        }
    }
}

impl Settings {
    /// Resolved key -> value pairs, in config-file order. Writing these
    /// lines back to a file reproduces the settings exactly.
    pub fn snapshot(&self) -> Vec<(String, String)> {
        let t = &self.train;
        let date = |d: NaiveDate| d.format("%Y-%m-%d").to_string();
        vec![
            ("model.kind".into(), self.kind.to_string()),
            ("model.hidden_size".into(), t.hidden_size.to_string()),
            ("train.epochs".into(), t.epochs.to_string()),
            ("train.learning_rate".into(), t.learning_rate.to_string()),
            ("train.optimizer".into(), t.optimizer.to_string()),
            ("train.adam_beta1".into(), t.adam_beta1.to_string()),
            ("train.adam_beta2".into(), t.adam_beta2.to_string()),
            ("train.adam_eps".into(), t.adam_eps.to_string()),
            (
                "train.early_stop_patience".into(),
                t.early_stop_patience.to_string(),
            ),
            ("train.seed".into(), t.seed.to_string()),
            (
                "train.grad_clip_norm".into(),
                t.grad_clip_norm
                    .map_or_else(|| "none".to_string(), |v| v.to_string()),
            ),
            ("split.train_start".into(), date(self.split.train.0)),
            ("split.train_end".into(), date(self.split.train.1)),
            ("split.valid_start".into(), date(self.split.valid.0)),
            ("split.valid_end".into(), date(self.split.valid.1)),
            ("split.test_start".into(), date(self.split.test.0)),
            ("split.test_end".into(), date(self.split.test.1)),
        ]
    }
}

fn parse_date(key: &str, value: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(value, "%Y-%m-%d")
        .map_err(|e| Error::Spec(format!("config key {key}: bad date {value:?}: {e}")))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Spec(format!("config key {key}: bad value {value:?}: {e}")))
}

/// Parse config text over the defaults; fail on any unknown key.
pub fn parse(text: &str) -> Result<Settings> {
    let mut s = Settings::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Spec(format!(
                "config line {}: expected key = value, got {raw:?}",
                lineno + 1
            )));
        };
        let key = key.trim();
        let value = value.trim();
        match key {
            "model.kind" => s.kind = value.parse()?,
            "model.hidden_size" => s.train.hidden_size = parse_num(key, value)?,
            "train.epochs" => s.train.epochs = parse_num(key, value)?,
            "train.learning_rate" => s.train.learning_rate = parse_num(key, value)?,
            "train.optimizer" => s.train.optimizer = value.parse()?,
            "train.adam_beta1" => s.train.adam_beta1 = parse_num(key, value)?,
            "train.adam_beta2" => s.train.adam_beta2 = parse_num(key, value)?,
            "train.adam_eps" => s.train.adam_eps = parse_num(key, value)?,
            "train.early_stop_patience" => s.train.early_stop_patience = parse_num(key, value)?,
            "train.seed" => s.train.seed = parse_num(key, value)?,
            "train.grad_clip_norm" => {
                s.train.grad_clip_norm = if value == "none" {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "split.train_start" => s.split.train.0 = parse_date(key, value)?,
            "split.train_end" => s.split.train.1 = parse_date(key, value)?,
            "split.valid_start" => s.split.valid.0 = parse_date(key, value)?,
            "split.valid_end" => s.split.valid.1 = parse_date(key, value)?,
            "split.test_start" => s.split.test.0 = parse_date(key, value)?,
            "split.test_end" => s.split.test.1 = parse_date(key, value)?,
            unknown => {
                return Err(Error::Spec(format!(
                    "unknown config key {unknown:?} on line {}",
                    lineno + 1
                )))
            }
        }
    }
    s.train.validate()?;
    s.split.validate()?;
    Ok(s)
}

/// Load settings from an optional config path (defaults when absent), then
/// apply the `PFG_SEED` environment override if set.
pub fn load(path: Option<&Path>) -> Result<Settings> {
    let mut settings = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Spec(format!("cannot read config {}: {e}", p.display())))?;
            parse(&text)?
        }
        None => Settings::default(),
    };
    if let Some(seed) = seed_override()? {
        settings.train.seed = seed;
    }
    Ok(settings)
}

/// `PFG_SEED` env var, when set, overrides every command's seed.
pub fn seed_override() -> Result<Option<u64>> {
    match std::env::var("PFG_SEED") {
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|e| Error::Spec(format!("PFG_SEED={v:?} is not a valid seed: {e}"))),
        Err(_) => Ok(None),
    }
}
