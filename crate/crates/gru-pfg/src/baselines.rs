//! Comparison and ablation models sharing the data/metrics/train stack.
//!
//! Ablations are expressed by freezing fusion scalars of the full model
//! rather than by separate code paths, so the reduction properties hold
//! exactly: `gru-pfg-primary-only` freezes the secondary-stage weights at
//! zero, and the plain GRU baseline equals the full model with the base
//! weight frozen at one and everything else at zero.

use rand::Rng;

use crate::autodiff::{Graph, TensorId};
use crate::error::{Error, Result};
use crate::model::params::{
    GruBaselineParams, GruPfgParams, MlpParams, ParamSet, ParamTensor,
};
use crate::model::{
    bind_gru, bind_head, forward_day, gru_forward, Bindings, DayBatch, DayForward, Similarity,
    CHANNELS, NUM_FACTORS,
};
use crate::scalar::Scalar;

/// The selectable model variants (config key `model.kind`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantKind {
    Mlp,
    Gru,
    GruPfg,
    GruPfgPrimaryOnly,
    GruPfgCosine,
}

impl VariantKind {
    pub const ALL: [VariantKind; 5] = [
        VariantKind::Mlp,
        VariantKind::Gru,
        VariantKind::GruPfg,
        VariantKind::GruPfgPrimaryOnly,
        VariantKind::GruPfgCosine,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            VariantKind::Mlp => "mlp",
            VariantKind::Gru => "gru",
            VariantKind::GruPfg => "gru-pfg",
            VariantKind::GruPfgPrimaryOnly => "gru-pfg-primary-only",
            VariantKind::GruPfgCosine => "gru-pfg-cosine",
        }
    }
}

impl std::fmt::Display for VariantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VariantKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Spec(format!(
                    "unknown model kind {s:?}; expected one of {:?}",
                    VariantKind::ALL.map(|k| k.as_str())
                ))
            })
    }
}

/// A model with its parameters; every variant consumes a [`DayBatch`] and
/// emits one prediction per stock, so they are interchangeable in training
/// and evaluation.
#[derive(Debug, Clone)]
pub enum ModelVariant<T> {
    Mlp(MlpParams<T>),
    Gru(GruBaselineParams<T>),
    Pfg {
        params: GruPfgParams<T>,
        similarity: Similarity,
        primary_only: bool,
    },
}

impl<T: Scalar> ModelVariant<T> {
    /// Initialize a variant. The GRU-family variants draw their GRU and
    /// head weights in the same order, so the same seed gives the plain
    /// baseline and the PFG variants identical shared weights.
    pub fn init(kind: VariantKind, hidden_size: usize, rng: &mut impl Rng) -> Self {
        match kind {
            VariantKind::Mlp => ModelVariant::Mlp(MlpParams::init(rng)),
            VariantKind::Gru => {
                ModelVariant::Gru(GruBaselineParams::init(CHANNELS, hidden_size, rng))
            }
            VariantKind::GruPfg => ModelVariant::Pfg {
                params: GruPfgParams::init(CHANNELS, hidden_size, rng),
                similarity: Similarity::Pearson,
                primary_only: false,
            },
            VariantKind::GruPfgPrimaryOnly => {
                let mut params = GruPfgParams::init(CHANNELS, hidden_size, rng);
                params.fusion.freeze_secondary_stage();
                ModelVariant::Pfg {
                    params,
                    similarity: Similarity::Pearson,
                    primary_only: true,
                }
            }
            VariantKind::GruPfgCosine => ModelVariant::Pfg {
                params: GruPfgParams::init(CHANNELS, hidden_size, rng),
                similarity: Similarity::Cosine,
                primary_only: false,
            },
        }
    }

    pub fn kind(&self) -> VariantKind {
        match self {
            ModelVariant::Mlp(_) => VariantKind::Mlp,
            ModelVariant::Gru(_) => VariantKind::Gru,
            ModelVariant::Pfg {
                similarity,
                primary_only,
                ..
            } => match (similarity, primary_only) {
                (Similarity::Cosine, _) => VariantKind::GruPfgCosine,
                (Similarity::Pearson, true) => VariantKind::GruPfgPrimaryOnly,
                (Similarity::Pearson, false) => VariantKind::GruPfg,
            },
        }
    }

    /// GRU hidden width; 0 for the MLP, which has none.
    pub fn hidden_size(&self) -> usize {
        match self {
            ModelVariant::Mlp(_) => 0,
            ModelVariant::Gru(p) => p.hidden_size(),
            ModelVariant::Pfg { params, .. } => params.hidden_size(),
        }
    }

    pub fn forward(&self, batch: &DayBatch<T>) -> Result<DayForward<T>> {
        match self {
            ModelVariant::Mlp(params) => mlp_forward(batch, params),
            ModelVariant::Gru(params) => gru_baseline_forward(batch, params),
            ModelVariant::Pfg {
                params, similarity, ..
            } => forward_day(batch, params, *similarity),
        }
    }

    pub fn predict(&self, batch: &DayBatch<T>) -> Result<Vec<T>> {
        Ok(self.forward(batch)?.prediction_values())
    }
}

impl<T: Scalar> ParamSet<T> for ModelVariant<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'static str, &'a ParamTensor<T>)) {
        match self {
            ModelVariant::Mlp(p) => p.visit(f),
            ModelVariant::Gru(p) => p.visit(f),
            ModelVariant::Pfg { params, .. } => params.visit(f),
        }
    }

    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'static str, &'a mut ParamTensor<T>)) {
        match self {
            ModelVariant::Mlp(p) => p.visit_mut(f),
            ModelVariant::Gru(p) => p.visit_mut(f),
            ModelVariant::Pfg { params, .. } => params.visit_mut(f),
        }
    }
}

/// Per-stock feed-forward baseline over the raw 360 factors.
pub fn mlp_forward<T: Scalar>(batch: &DayBatch<T>, params: &MlpParams<T>) -> Result<DayForward<T>> {
    let m = batch.num_stocks();
    let mut g = Graph::new();
    let mut bindings = Bindings::new();

    let mut layer_ids = Vec::new();
    params.visit(&mut |name, tensor| layer_ids.push((name, tensor.values.clone(), tensor.shape().to_vec())));
    let mut ids = Vec::new();
    for (name, values, shape) in layer_ids {
        let id = g.leaf(values, &shape)?;
        bindings.push((name, id));
        ids.push(id);
    }

    let mut h = g.leaf(batch.inputs().to_vec(), &[m, NUM_FACTORS])?;
    let num_layers = ids.len() / 2;
    for layer in 0..num_layers {
        let w = ids[2 * layer];
        let b = ids[2 * layer + 1];
        let projected = g.matmul(h, w)?;
        h = g.add_row(projected, b)?;
        if layer + 1 < num_layers {
            h = g.tanh(h);
        }
    }
    Ok(DayForward {
        graph: g,
        predictions: h,
        trace: None,
        bindings,
    })
}

/// GRU extraction followed by the linear head; identical to GRU-PFG with
/// the base fusion weight frozen at 1 and the rest at 0.
pub fn gru_baseline_forward<T: Scalar>(
    batch: &DayBatch<T>,
    params: &GruBaselineParams<T>,
) -> Result<DayForward<T>> {
    let mut g = Graph::new();
    let mut bindings = Bindings::new();
    let gru_ids = bind_gru(&mut g, &params.gru, &mut bindings)?;
    let head_ids = bind_head(&mut g, &params.head, &mut bindings)?;
    let features = gru_forward(&mut g, batch, &gru_ids, params.gru.hidden_size)?;
    let projected = g.matmul(features, head_ids.weight)?;
    let predictions = g.add_row(projected, head_ids.bias)?;
    Ok(DayForward {
        graph: g,
        predictions,
        trace: None,
        bindings,
    })
}

/// Cosine similarity of every row of `A` against every row of `B`; the
/// drop-in replacement for the Pearson kernel in both relation stages.
pub fn cosine_rows<T: Scalar>(g: &mut Graph<T>, a: TensorId, b: TensorId) -> Result<TensorId> {
    g.cosine_rows(a, b)
}
