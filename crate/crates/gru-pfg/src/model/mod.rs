//! The GRU-PFG architecture: GRU factor extraction, two correlation-based
//! relationship stages, fusion and a linear prediction head.
//!
//! A forward pass over one trading day's cross-section builds a fresh
//! computation graph. Parameters are bound as leaves at the start of the
//! pass; [`harvest_gradients`] copies leaf gradients back after backward.

pub mod params;

use chrono::NaiveDate;

use crate::autodiff::{Graph, GruWeightIds, TensorId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use params::{FusionWeights, GruParams, GruPfgParams, HeadParams, ParamSet, ParamTensor};

/// Factors per time step in the 360-factor input layout.
pub const CHANNELS: usize = 6;
/// Time steps per stock.
pub const STEPS: usize = 60;
/// Total factors per stock.
pub const NUM_FACTORS: usize = CHANNELS * STEPS;
/// Default GRU hidden width.
pub const DEFAULT_HIDDEN: usize = 64;

/// Which row-similarity kernel the relationship stages use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    Pearson,
    Cosine,
}

/// One trading day's cross-section: the unit of both the forward pass and
/// of a gradient step.
#[derive(Debug, Clone)]
pub struct DayBatch<T> {
    pub date: NaiveDate,
    pub stock_ids: Vec<String>,
    inputs: Vec<T>, // m × 360, row per stock, step-major (step 0 channel 0 .. step 59 channel 5)
    pub labels: Vec<T>,
}

impl<T: Scalar> DayBatch<T> {
    pub fn new(
        date: NaiveDate,
        stock_ids: Vec<String>,
        inputs: Vec<T>,
        labels: Vec<T>,
    ) -> Result<Self> {
        let m = stock_ids.len();
        if m == 0 {
            return Err(Error::EmptyInput("day batch with no stocks".into()));
        }
        if inputs.len() != m * NUM_FACTORS {
            return Err(Error::Contract(format!(
                "inputs length {} != {m} stocks x {NUM_FACTORS} factors",
                inputs.len()
            )));
        }
        if labels.len() != m {
            return Err(Error::Contract(format!(
                "labels length {} != {m} stocks",
                labels.len()
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) || labels.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("day batch for {date}")));
        }
        Ok(DayBatch {
            date,
            stock_ids,
            inputs,
            labels,
        })
    }

    pub fn num_stocks(&self) -> usize {
        self.stock_ids.len()
    }

    pub fn inputs(&self) -> &[T] {
        &self.inputs
    }

    /// Inputs reordered step-major: 60 consecutive m×6 blocks, one per
    /// time step, oldest first — the layout the GRU scan consumes.
    fn stacked_steps(&self) -> Vec<T> {
        let m = self.num_stocks();
        let mut out = Vec::with_capacity(m * NUM_FACTORS);
        for s in 0..STEPS {
            for i in 0..m {
                let base = i * NUM_FACTORS + s * CHANNELS;
                out.extend_from_slice(&self.inputs[base..base + CHANNELS]);
            }
        }
        out
    }

    /// Reorder stocks by `perm` (new position i takes old index perm[i]).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let m = self.num_stocks();
        if perm.len() != m {
            return Err(Error::Contract("permutation length mismatch".into()));
        }
        let mut inputs = Vec::with_capacity(self.inputs.len());
        let mut labels = Vec::with_capacity(m);
        let mut ids = Vec::with_capacity(m);
        for &src in perm {
            inputs.extend_from_slice(&self.inputs[src * NUM_FACTORS..(src + 1) * NUM_FACTORS]);
            labels.push(self.labels[src]);
            ids.push(self.stock_ids[src].clone());
        }
        DayBatch::new(self.date, ids, inputs, labels)
    }
}

/// View a 360-factor row as 60 time steps of 6 channels
/// (`step s, channel c <- row[6*s + c]`, oldest step first).
pub fn reshape_factors<T: Scalar>(row: &[T]) -> Result<Vec<[T; CHANNELS]>> {
    if row.len() != NUM_FACTORS {
        return Err(Error::Schema(format!(
            "factor row has length {}, expected {NUM_FACTORS}",
            row.len()
        )));
    }
    Ok(row
        .chunks_exact(CHANNELS)
        .map(|c| {
            let mut step = [T::zero(); CHANNELS];
            step.copy_from_slice(c);
            step
        })
        .collect())
}

// ── Parameter binding ───────────────────────────────────────────────────

/// Leaf ids of parameters bound into a graph, by name, for gradient harvest.
pub type Bindings = Vec<(&'static str, TensorId)>;

#[derive(Debug, Clone, Copy)]
pub struct GateIds {
    pub input: TensorId,
    pub hidden: TensorId,
    pub bias: TensorId,
}

#[derive(Debug, Clone, Copy)]
pub struct GruIds {
    pub update: GateIds,
    pub reset: GateIds,
    pub candidate: GateIds,
}

#[derive(Debug, Clone, Copy)]
pub struct FusionIds {
    pub residual_row: TensorId,
    pub residual_col: TensorId,
    pub base: TensorId,
    pub primary: TensorId,
    pub residual: TensorId,
    pub secondary: TensorId,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadIds {
    pub weight: TensorId,
    pub bias: TensorId,
}

fn bind<T: Scalar>(
    g: &mut Graph<T>,
    name: &'static str,
    p: &ParamTensor<T>,
    bindings: &mut Bindings,
) -> Result<TensorId> {
    let id = g.leaf(p.values.clone(), p.shape())?;
    bindings.push((name, id));
    Ok(id)
}

pub fn bind_gru<T: Scalar>(
    g: &mut Graph<T>,
    p: &GruParams<T>,
    bindings: &mut Bindings,
) -> Result<GruIds> {
    let gate = |g: &mut Graph<T>,
                bindings: &mut Bindings,
                gate: &params::GateParams<T>,
                names: [&'static str; 3]|
     -> Result<GateIds> {
        Ok(GateIds {
            input: bind(g, names[0], &gate.input, bindings)?,
            hidden: bind(g, names[1], &gate.hidden, bindings)?,
            bias: bind(g, names[2], &gate.bias, bindings)?,
        })
    };
    Ok(GruIds {
        update: gate(
            g,
            bindings,
            &p.update,
            ["gru.update.input", "gru.update.hidden", "gru.update.bias"],
        )?,
        reset: gate(
            g,
            bindings,
            &p.reset,
            ["gru.reset.input", "gru.reset.hidden", "gru.reset.bias"],
        )?,
        candidate: gate(
            g,
            bindings,
            &p.candidate,
            [
                "gru.candidate.input",
                "gru.candidate.hidden",
                "gru.candidate.bias",
            ],
        )?,
    })
}

pub fn bind_fusion<T: Scalar>(
    g: &mut Graph<T>,
    p: &FusionWeights<T>,
    bindings: &mut Bindings,
) -> Result<FusionIds> {
    Ok(FusionIds {
        residual_row: bind(g, "fusion.residual_row", &p.residual_row, bindings)?,
        residual_col: bind(g, "fusion.residual_col", &p.residual_col, bindings)?,
        base: bind(g, "fusion.base", &p.base, bindings)?,
        primary: bind(g, "fusion.primary", &p.primary, bindings)?,
        residual: bind(g, "fusion.residual", &p.residual, bindings)?,
        secondary: bind(g, "fusion.secondary", &p.secondary, bindings)?,
    })
}

pub fn bind_head<T: Scalar>(
    g: &mut Graph<T>,
    p: &HeadParams<T>,
    bindings: &mut Bindings,
) -> Result<HeadIds> {
    Ok(HeadIds {
        weight: bind(g, "head.weight", &p.weight, bindings)?,
        bias: bind(g, "head.bias", &p.bias, bindings)?,
    })
}

// ── Forward stages ──────────────────────────────────────────────────────

/// Run the GRU over the 60 input steps; returns the final hidden state,
/// one 64-dim row per stock. Recurrence: `h' = (1-z)∘h + z∘c` with
/// `z = σ(xW_z + hU_z + b_z)`, `r = σ(xW_r + hU_r + b_r)`,
/// `c = tanh(xW_c + (r∘h)U_c + b_c)`, zero initial state.
pub fn gru_forward<T: Scalar>(
    g: &mut Graph<T>,
    batch: &DayBatch<T>,
    ids: &GruIds,
    _hidden_size: usize,
) -> Result<TensorId> {
    let m = batch.num_stocks();
    let stacked = g.leaf(batch.stacked_steps(), &[STEPS * m, CHANNELS])?;
    let weights = GruWeightIds {
        update_input: ids.update.input,
        update_hidden: ids.update.hidden,
        update_bias: ids.update.bias,
        reset_input: ids.reset.input,
        reset_hidden: ids.reset.hidden,
        reset_bias: ids.reset.bias,
        candidate_input: ids.candidate.input,
        candidate_hidden: ids.candidate.hidden,
        candidate_bias: ids.candidate.bias,
    };
    g.gru_sequence(stacked, weights, STEPS)
}

/// Tensors produced by one relationship-extraction stage.
#[derive(Debug, Clone, Copy)]
pub struct StageIds {
    pub row_softmax: TensorId,
    pub col_softmax: TensorId,
    /// Correlation matrix scaled by 1/m (signed mean aggregation).
    pub relation: TensorId,
    /// `relation · source`, the stage's extracted feature.
    pub feature: TensorId,
}

fn relation_stage<T: Scalar>(
    g: &mut Graph<T>,
    source: TensorId,
    sim: Similarity,
) -> Result<StageIds> {
    let m = g.shape(source)[0];
    let row_softmax = g.softmax_rows(source)?;
    let col_softmax = g.softmax_cols(source)?;
    let corr = match sim {
        Similarity::Pearson => g.pearson_rows(row_softmax, col_softmax)?,
        Similarity::Cosine => g.cosine_rows(row_softmax, col_softmax)?,
    };
    // Raw aggregation grows with the cross-section size; scale by 1/m so the
    // aggregated feature stays bounded while keeping anticorrelation signs.
    let relation = g.scale(corr, T::one() / T::from_usize(m).expect("usize conversion"));
    let feature = g.matmul(relation, source)?;
    Ok(StageIds {
        row_softmax,
        col_softmax,
        relation,
        feature,
    })
}

/// Primary relationship extraction: correlate the row-softmax of the GRU
/// features against their column-softmax and aggregate.
pub fn primary_extraction<T: Scalar>(
    g: &mut Graph<T>,
    features: TensorId,
    sim: Similarity,
) -> Result<StageIds> {
    relation_stage(g, features, sim)
}

/// Secondary relationship extraction on the residual
/// `features - w_row · row_softmax - w_col · col_softmax`.
pub fn secondary_extraction<T: Scalar>(
    g: &mut Graph<T>,
    features: TensorId,
    primary: &StageIds,
    fusion: &FusionIds,
    sim: Similarity,
) -> Result<(TensorId, StageIds)> {
    let wr = g.scale_by_scalar(primary.row_softmax, fusion.residual_row)?;
    let wc = g.scale_by_scalar(primary.col_softmax, fusion.residual_col)?;
    let partial = g.sub(features, wr)?;
    let residual = g.sub(partial, wc)?;
    let stage = relation_stage(g, residual, sim)?;
    Ok((residual, stage))
}

/// Mix the four feature terms and apply the linear head; returns
/// `(fused, predictions)` where predictions is an m×1 column.
pub fn fuse_and_predict<T: Scalar>(
    g: &mut Graph<T>,
    features: TensorId,
    primary: &StageIds,
    residual: TensorId,
    secondary: &StageIds,
    fusion: &FusionIds,
    head: &HeadIds,
) -> Result<(TensorId, TensorId)> {
    let t_base = g.scale_by_scalar(features, fusion.base)?;
    let t_primary = g.scale_by_scalar(primary.feature, fusion.primary)?;
    let t_residual = g.scale_by_scalar(residual, fusion.residual)?;
    let t_secondary = g.scale_by_scalar(secondary.feature, fusion.secondary)?;
    let s1 = g.add(t_base, t_primary)?;
    let s2 = g.add(s1, t_residual)?;
    let fused = g.add(s2, t_secondary)?;
    let projected = g.matmul(fused, head.weight)?;
    let predictions = g.add_row(projected, head.bias)?;
    Ok((fused, predictions))
}

/// Intermediate tensors of one full forward pass, for inspection and tests.
#[derive(Debug, Clone, Copy)]
pub struct RelationTrace {
    pub features: TensorId,
    pub row_softmax: TensorId,
    pub col_softmax: TensorId,
    pub primary_relation: TensorId,
    pub primary_feature: TensorId,
    pub residual: TensorId,
    pub secondary_relation: TensorId,
    pub secondary_feature: TensorId,
    pub fused: TensorId,
}

/// A completed forward pass: the graph it ran in, the prediction column,
/// the stage trace (for relation models) and the parameter bindings.
pub struct DayForward<T> {
    pub graph: Graph<T>,
    pub predictions: TensorId,
    pub trace: Option<RelationTrace>,
    pub bindings: Bindings,
}

impl<T: Scalar> DayForward<T> {
    pub fn prediction_values(&self) -> Vec<T> {
        self.graph.values(self.predictions).to_vec()
    }
}

/// Full GRU-PFG forward for one day's cross-section.
pub fn forward_day<T: Scalar>(
    batch: &DayBatch<T>,
    params: &GruPfgParams<T>,
    sim: Similarity,
) -> Result<DayForward<T>> {
    let mut g = Graph::new();
    let mut bindings = Bindings::new();
    let gru_ids = bind_gru(&mut g, &params.gru, &mut bindings)?;
    let fusion_ids = bind_fusion(&mut g, &params.fusion, &mut bindings)?;
    let head_ids = bind_head(&mut g, &params.head, &mut bindings)?;

    let features = gru_forward(&mut g, batch, &gru_ids, params.gru.hidden_size)?;
    let primary = primary_extraction(&mut g, features, sim)?;
    let (residual, secondary) = secondary_extraction(&mut g, features, &primary, &fusion_ids, sim)?;
    let (fused, predictions) =
        fuse_and_predict(&mut g, features, &primary, residual, &secondary, &fusion_ids, &head_ids)?;

    let trace = RelationTrace {
        features,
        row_softmax: primary.row_softmax,
        col_softmax: primary.col_softmax,
        primary_relation: primary.relation,
        primary_feature: primary.feature,
        residual,
        secondary_relation: secondary.relation,
        secondary_feature: secondary.feature,
        fused,
    };
    Ok(DayForward {
        graph: g,
        predictions,
        trace: Some(trace),
        bindings,
    })
}

/// Frozen-parameter predictions for one day.
pub fn predict_day<T: Scalar>(
    batch: &DayBatch<T>,
    params: &GruPfgParams<T>,
    sim: Similarity,
) -> Result<Vec<T>> {
    Ok(forward_day(batch, params, sim)?.prediction_values())
}

/// Add the graph's leaf gradients back into the persistent parameter
/// buffers (accumulating; trainable and frozen entries alike).
pub fn harvest_gradients<T: Scalar>(pass: &DayForward<T>, params: &mut impl ParamSet<T>) {
    let mut by_name: std::collections::HashMap<&'static str, &[T]> =
        std::collections::HashMap::new();
    for (name, id) in &pass.bindings {
        if let Some(g) = pass.graph.grad(*id) {
            by_name.insert(name, g);
        }
    }
    params.visit_mut(&mut |name, tensor| {
        if let Some(src) = by_name.get(name) {
            for (dst, s) in tensor.grad.iter_mut().zip(*src) {
                *dst += *s;
            }
        }
    });
}
