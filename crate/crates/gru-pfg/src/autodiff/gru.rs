//! Fused GRU recurrence: one graph node covers the whole 60-step scan,
//! with hand-written backpropagation through time over preallocated
//! buffers. Per-step graph nodes would dominate the training cost.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::TensorId;

/// Leaf ids of the nine gate parameter tensors bound into the graph.
#[derive(Debug, Clone, Copy)]
pub struct GruWeightIds {
    pub update_input: TensorId,
    pub update_hidden: TensorId,
    pub update_bias: TensorId,
    pub reset_input: TensorId,
    pub reset_hidden: TensorId,
    pub reset_bias: TensorId,
    pub candidate_input: TensorId,
    pub candidate_hidden: TensorId,
    pub candidate_bias: TensorId,
}

impl GruWeightIds {
    pub(super) fn all(&self) -> [TensorId; 9] {
        [
            self.update_input,
            self.update_hidden,
            self.update_bias,
            self.reset_input,
            self.reset_hidden,
            self.reset_bias,
            self.candidate_input,
            self.candidate_hidden,
            self.candidate_bias,
        ]
    }
}

/// One gate's parameter value slices.
pub(super) struct GateSlices<'a, T> {
    pub input: &'a [T],  // input_size × hidden
    pub hidden: &'a [T], // hidden × hidden
    pub bias: &'a [T],   // hidden
}

pub(super) struct GruSlices<'a, T> {
    pub update: GateSlices<'a, T>,
    pub reset: GateSlices<'a, T>,
    pub candidate: GateSlices<'a, T>,
}

/// Forward activations kept for the backward sweep.
#[derive(Debug, Clone)]
pub(super) struct GruCache<T> {
    pub m: usize,
    pub hidden: usize,
    pub steps: usize,
    /// (steps+1) blocks of m×hidden; block 0 is the zero initial state.
    pub h_all: Vec<T>,
    pub z: Vec<T>,
    pub r: Vec<T>,
    pub c: Vec<T>,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// C += A · B with A: m×k, B: k×n.
fn mm<T: Scalar>(c: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += aip * brow[j];
            }
        }
    }
}

/// C += Aᵀ · B with A: m×k, B: m×n, C: k×n.
fn mm_at_b<T: Scalar>(c: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            let crow = &mut c[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += aip * brow[j];
            }
        }
    }
}

/// C += A · Bᵀ with A: m×k, B: n×k, C: m×n.
fn mm_a_bt<T: Scalar>(c: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for p in 0..k {
                acc += arow[p] * brow[p];
            }
            crow[j] += acc;
        }
    }
}

fn fill_bias_rows<T: Scalar>(dst: &mut [T], bias: &[T], m: usize) {
    let n = bias.len();
    for i in 0..m {
        dst[i * n..(i + 1) * n].copy_from_slice(bias);
    }
}

/// Run the recurrence; inputs are step-major, `steps` blocks of
/// m×input_size rows. Returns the cache; the final hidden state is the
/// last block of `cache.h_all`.
pub(super) fn forward<T: Scalar>(
    inputs: &[T],
    m: usize,
    input_size: usize,
    hidden: usize,
    steps: usize,
    w: &GruSlices<'_, T>,
) -> Result<GruCache<T>> {
    let mh = m * hidden;
    let mut cache = GruCache {
        m,
        hidden,
        steps,
        h_all: vec![T::zero(); (steps + 1) * mh],
        z: vec![T::zero(); steps * mh],
        r: vec![T::zero(); steps * mh],
        c: vec![T::zero(); steps * mh],
    };
    let mut rh = vec![T::zero(); mh];

    for t in 0..steps {
        let x_t = &inputs[t * m * input_size..(t + 1) * m * input_size];
        let (prev_blocks, next_blocks) = cache.h_all.split_at_mut((t + 1) * mh);
        let h_prev = &prev_blocks[t * mh..];
        let h_t = &mut next_blocks[..mh];

        let z_t = &mut cache.z[t * mh..(t + 1) * mh];
        fill_bias_rows(z_t, w.update.bias, m);
        mm(z_t, x_t, w.update.input, m, input_size, hidden);
        mm(z_t, h_prev, w.update.hidden, m, hidden, hidden);
        z_t.iter_mut().for_each(|v| *v = sigmoid(*v));

        let r_t = &mut cache.r[t * mh..(t + 1) * mh];
        fill_bias_rows(r_t, w.reset.bias, m);
        mm(r_t, x_t, w.reset.input, m, input_size, hidden);
        mm(r_t, h_prev, w.reset.hidden, m, hidden, hidden);
        r_t.iter_mut().for_each(|v| *v = sigmoid(*v));

        for i in 0..mh {
            rh[i] = r_t[i] * h_prev[i];
        }
        let c_t = &mut cache.c[t * mh..(t + 1) * mh];
        fill_bias_rows(c_t, w.candidate.bias, m);
        mm(c_t, x_t, w.candidate.input, m, input_size, hidden);
        mm(c_t, &rh, w.candidate.hidden, m, hidden, hidden);
        c_t.iter_mut().for_each(|v| *v = v.tanh());

        // h' = (1 - z) ∘ h + z ∘ c
        let mut finite = true;
        for i in 0..mh {
            let h = h_prev[i] + z_t[i] * (c_t[i] - h_prev[i]);
            finite &= h.is_finite();
            h_t[i] = h;
        }
        if !finite {
            return Err(Error::NonFinite(format!("gru hidden state at step {t}")));
        }
    }
    Ok(cache)
}

/// Gradient buffers filled by [`backward`], in [`GruWeightIds::all`] order.
pub(super) struct GruGrads<T> {
    pub weights: [Vec<T>; 9],
    pub inputs: Vec<T>,
}

/// Backpropagation through time. `g_out` is dL/dh_final.
pub(super) fn backward<T: Scalar>(
    cache: &GruCache<T>,
    inputs: &[T],
    input_size: usize,
    w: &GruSlices<'_, T>,
    g_out: &[T],
) -> GruGrads<T> {
    let (m, hidden, steps) = (cache.m, cache.hidden, cache.steps);
    let mh = m * hidden;
    let one = T::one();

    let mut grads = GruGrads {
        weights: [
            vec![T::zero(); input_size * hidden],
            vec![T::zero(); hidden * hidden],
            vec![T::zero(); hidden],
            vec![T::zero(); input_size * hidden],
            vec![T::zero(); hidden * hidden],
            vec![T::zero(); hidden],
            vec![T::zero(); input_size * hidden],
            vec![T::zero(); hidden * hidden],
            vec![T::zero(); hidden],
        ],
        inputs: vec![T::zero(); inputs.len()],
    };

    let mut gh = g_out.to_vec();
    let mut gh_next = vec![T::zero(); mh];
    let mut daz = vec![T::zero(); mh];
    let mut dar = vec![T::zero(); mh];
    let mut dac = vec![T::zero(); mh];
    let mut dac_uct = vec![T::zero(); mh];
    let mut rh = vec![T::zero(); mh];

    for t in (0..steps).rev() {
        let x_t = &inputs[t * m * input_size..(t + 1) * m * input_size];
        let h_prev = &cache.h_all[t * mh..(t + 1) * mh];
        let z_t = &cache.z[t * mh..(t + 1) * mh];
        let r_t = &cache.r[t * mh..(t + 1) * mh];
        let c_t = &cache.c[t * mh..(t + 1) * mh];

        // pre-activation adjoints of the update and candidate gates
        for i in 0..mh {
            let dz = gh[i] * (c_t[i] - h_prev[i]);
            daz[i] = dz * z_t[i] * (one - z_t[i]);
            let dc = gh[i] * z_t[i];
            dac[i] = dc * (one - c_t[i] * c_t[i]);
        }

        // reset gate sees the candidate path: dL/d(r∘h) = dac · Ucᵀ
        dac_uct.iter_mut().for_each(|v| *v = T::zero());
        mm_a_bt(&mut dac_uct, &dac, w.candidate.hidden, m, hidden, hidden);
        for i in 0..mh {
            let dr = dac_uct[i] * h_prev[i];
            dar[i] = dr * r_t[i] * (one - r_t[i]);
        }

        // parameter gradients
        for i in 0..mh {
            rh[i] = r_t[i] * h_prev[i];
        }
        let [dwzi, dwzh, dwzb, dwri, dwrh, dwrb, dwci, dwch, dwcb] = &mut grads.weights;
        mm_at_b(dwzi, x_t, &daz, m, input_size, hidden);
        mm_at_b(dwzh, h_prev, &daz, m, hidden, hidden);
        mm_at_b(dwri, x_t, &dar, m, input_size, hidden);
        mm_at_b(dwrh, h_prev, &dar, m, hidden, hidden);
        mm_at_b(dwci, x_t, &dac, m, input_size, hidden);
        mm_at_b(dwch, &rh, &dac, m, hidden, hidden);
        for i in 0..m {
            for j in 0..hidden {
                dwzb[j] += daz[i * hidden + j];
                dwrb[j] += dar[i * hidden + j];
                dwcb[j] += dac[i * hidden + j];
            }
        }

        // input gradient
        let dx_t = &mut grads.inputs[t * m * input_size..(t + 1) * m * input_size];
        mm_a_bt(dx_t, &daz, w.update.input, m, hidden, input_size);
        mm_a_bt(dx_t, &dar, w.reset.input, m, hidden, input_size);
        mm_a_bt(dx_t, &dac, w.candidate.input, m, hidden, input_size);

        // hidden-state gradient for the previous step
        for i in 0..mh {
            gh_next[i] = gh[i] * (one - z_t[i]) + dac_uct[i] * r_t[i];
        }
        mm_a_bt(&mut gh_next, &daz, w.update.hidden, m, hidden, hidden);
        mm_a_bt(&mut gh_next, &dar, w.reset.hidden, m, hidden, hidden);
        std::mem::swap(&mut gh, &mut gh_next);
    }
    grads
}
