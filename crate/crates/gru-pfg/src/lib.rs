//! Stock-trend prediction with GRU factor extraction and differentiable
//! inter-stock correlation graphs, plus the training and evaluation stack
//! around it: panel data handling, a synthetic-panel generator, IC-family
//! metrics, day-batch training and ablation baselines.
//!
//! The numeric core is generic over the scalar type (`f32`/`f64` via
//! [`scalar::Scalar`]); the aliases below fix the f64 defaults used by the
//! CLI, checkpoints and panel files.

pub mod autodiff;
pub mod baselines;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// f64 computation graph.
pub type Graph64 = autodiff::Graph<f64>;
/// f64 day cross-section.
pub type DayBatch64 = model::DayBatch<f64>;
/// f64 GRU-PFG parameter set.
pub type GruPfgParams64 = model::params::GruPfgParams<f64>;
/// f64 factor panel.
pub type FactorPanel64 = data::FactorPanel<f64>;
/// f64 model variant (GRU-PFG, baselines, ablations).
pub type ModelVariant64 = baselines::ModelVariant<f64>;
