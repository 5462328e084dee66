//! Run manifests: every command records its resolved configuration, seed,
//! input digests and output paths as `key=value` lines, enough to replay
//! the run.

use std::fmt::Write as _;
use std::path::Path;

use gru_pfg::Result;
use sha2::{Digest, Sha256};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            entries: vec![
                ("command".into(), command.to_string()),
                ("artifact_version".into(), ARTIFACT_VERSION.to_string()),
            ],
        }
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl std::fmt::Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    /// Record the full resolved config snapshot under `config.` keys; the
    /// snapshot section of a manifest is itself a loadable config file once
    /// the prefix is stripped.
    pub fn push_config(&mut self, snapshot: &[(String, String)]) {
        for (k, v) in snapshot {
            self.entries.push((format!("config.{k}"), v.clone()));
        }
    }

    /// Record an input file path and its SHA-256 digest.
    pub fn push_input(&mut self, name: &str, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        let digest = Sha256::digest(&bytes);
        let mut hex = String::with_capacity(64);
        for b in digest {
            write!(hex, "{b:02x}").expect("string write");
        }
        self.push(format!("input.{name}.path"), path.display());
        self.push(format!("input.{name}.sha256"), hex);
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// Parse manifest text back into key -> value pairs (last wins).
pub fn parse(text: &str) -> std::collections::BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
