//! Minimal reverse-mode automatic differentiation on dense matrices.
//!
//! A [`Graph`] is a define-by-run tape: every operation appends a node
//! holding its value buffer and the provenance needed for the backward
//! sweep. Graphs are rebuilt per forward pass (cross-section sizes vary
//! day to day), so node ids are only meaningful within one graph.
//!
//! Gradients accumulate: repeated [`Graph::backward`] calls add into the
//! existing buffers until [`Graph::zero_grads`] resets them.

pub mod gradcheck;
mod gru;

pub use gru::GruWeightIds;

use crate::error::{Error, Result};
use crate::scalar::{Scalar, CORRELATION_EPS};

/// Handle to a tensor stored in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

/// One node of the computation graph: dense values plus the op record
/// used by the backward traversal.
#[derive(Debug, Clone)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    values: Vec<T>,
    grad: Option<Vec<T>>,
    op: Op<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Gradient buffer; `None` until a backward pass reaches this node.
    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Matmul { a: TensorId, b: TensorId },
    Add { a: TensorId, b: TensorId },
    Sub { a: TensorId, b: TensorId },
    Mul { a: TensorId, b: TensorId },
    AddRow { a: TensorId, row: TensorId },
    Scale { a: TensorId, factor: T },
    ScaleBy { a: TensorId, s: TensorId },
    Sigmoid { a: TensorId },
    Tanh { a: TensorId },
    SoftmaxRows { a: TensorId },
    SoftmaxCols { a: TensorId },
    PearsonRows { a: TensorId, b: TensorId },
    CosineRows { a: TensorId, b: TensorId },
    MeanAll { a: TensorId },
    GruSequence {
        inputs: TensorId,
        weights: GruWeightIds,
        cache: Box<gru::GruCache<T>>,
    },
}

/// Define-by-run computation graph over scalar type `T`.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Tensor<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn tensor(&self, id: TensorId) -> &Tensor<T> {
        &self.nodes[id.0]
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn values(&self, id: TensorId) -> &[T] {
        &self.nodes[id.0].values
    }

    pub fn grad(&self, id: TensorId) -> Option<&[T]> {
        self.nodes[id.0].grad.as_deref()
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<T>, op: Op<T>) -> TensorId {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.nodes.push(Tensor {
            shape,
            values,
            grad: None,
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    /// Insert a leaf tensor. `shape` must multiply out to `values.len()`.
    pub fn leaf(&mut self, values: Vec<T>, shape: &[usize]) -> Result<TensorId> {
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::Contract(format!(
                "leaf shape {:?} does not match buffer length {}",
                shape,
                values.len()
            )));
        }
        Ok(self.push(shape.to_vec(), values, Op::Leaf))
    }

    /// Leaf matrix filled with zeros.
    pub fn zeros(&mut self, rows: usize, cols: usize) -> TensorId {
        self.push(vec![rows, cols], vec![T::zero(); rows * cols], Op::Leaf)
    }

    /// Leaf holding a single scalar, shape `[1]`.
    pub fn scalar(&mut self, v: T) -> TensorId {
        self.push(vec![1], vec![v], Op::Leaf)
    }

    fn dims2(&self, id: TensorId, op: &'static str) -> Result<(usize, usize)> {
        let s = &self.nodes[id.0].shape;
        match s.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(Error::ShapeMismatch {
                op,
                lhs: s.clone(),
                rhs: vec![],
            }),
        }
    }

    fn same_shape(&self, a: TensorId, b: TensorId, op: &'static str) -> Result<()> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.nodes[a.0].shape.clone(),
                rhs: self.nodes[b.0].shape.clone(),
            });
        }
        Ok(())
    }

    // ── Op constructors (eager forward) ────────────────────────────────

    /// Matrix product `A[m×k] · B[k×n]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let mut out = vec![T::zero(); m * n];
        matmul_into(
            &mut out,
            &self.nodes[a.0].values,
            &self.nodes[b.0].values,
            m,
            k,
            n,
        );
        Ok(self.push(vec![m, n], out, Op::Matmul { a, b }))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape(a, b, "add")?;
        let values = zip_map(&self.nodes[a.0].values, &self.nodes[b.0].values, |x, y| {
            x + y
        });
        Ok(self.push(self.nodes[a.0].shape.clone(), values, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape(a, b, "sub")?;
        let values = zip_map(&self.nodes[a.0].values, &self.nodes[b.0].values, |x, y| {
            x - y
        });
        Ok(self.push(self.nodes[a.0].shape.clone(), values, Op::Sub { a, b }))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape(a, b, "mul")?;
        let values = zip_map(&self.nodes[a.0].values, &self.nodes[b.0].values, |x, y| {
            x * y
        });
        Ok(self.push(self.nodes[a.0].shape.clone(), values, Op::Mul { a, b }))
    }

    /// Add a length-`n` row vector to every row of `A[m×n]` (bias add).
    pub fn add_row(&mut self, a: TensorId, row: TensorId) -> Result<TensorId> {
        let (m, n) = self.dims2(a, "add_row")?;
        let rlen = self.nodes[row.0].values.len();
        if rlen != n {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: vec![m, n],
                rhs: self.nodes[row.0].shape.clone(),
            });
        }
        let mut values = self.nodes[a.0].values.clone();
        for i in 0..m {
            let r = &self.nodes[row.0].values;
            let dst = &mut values[i * n..(i + 1) * n];
            for j in 0..n {
                dst[j] += r[j];
            }
        }
        Ok(self.push(vec![m, n], values, Op::AddRow { a, row }))
    }

    /// Multiply by a compile-time-known constant (not a learnable scalar).
    pub fn scale(&mut self, a: TensorId, factor: T) -> TensorId {
        let values = self.nodes[a.0].values.iter().map(|&x| x * factor).collect();
        self.push(self.nodes[a.0].shape.clone(), values, Op::Scale { a, factor })
    }

    /// Multiply by a scalar tensor (shape `[1]`), differentiable in both.
    pub fn scale_by_scalar(&mut self, a: TensorId, s: TensorId) -> Result<TensorId> {
        if self.nodes[s.0].values.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "scale_by_scalar",
                lhs: self.nodes[a.0].shape.clone(),
                rhs: self.nodes[s.0].shape.clone(),
            });
        }
        let sv = self.nodes[s.0].values[0];
        let values = self.nodes[a.0].values.iter().map(|&x| x * sv).collect();
        Ok(self.push(self.nodes[a.0].shape.clone(), values, Op::ScaleBy { a, s }))
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let values = self.nodes[a.0].values.iter().map(|&x| sigmoid(x)).collect();
        self.push(self.nodes[a.0].shape.clone(), values, Op::Sigmoid { a })
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let values = self.nodes[a.0].values.iter().map(|&x| x.tanh()).collect();
        self.push(self.nodes[a.0].shape.clone(), values, Op::Tanh { a })
    }

    /// Row-wise softmax, stabilized by subtracting each row's max.
    pub fn softmax_rows(&mut self, a: TensorId) -> Result<TensorId> {
        let (m, n) = self.dims2(a, "softmax_rows")?;
        self.check_finite(a, "softmax_rows input")?;
        let src = &self.nodes[a.0].values;
        let mut values = vec![T::zero(); m * n];
        for i in 0..m {
            softmax_slice(&src[i * n..(i + 1) * n], &mut values[i * n..(i + 1) * n]);
        }
        Ok(self.push(vec![m, n], values, Op::SoftmaxRows { a }))
    }

    /// Column-wise softmax (normalizes across rows within each column).
    pub fn softmax_cols(&mut self, a: TensorId) -> Result<TensorId> {
        let (m, n) = self.dims2(a, "softmax_cols")?;
        self.check_finite(a, "softmax_cols input")?;
        let src = &self.nodes[a.0].values;
        let mut values = vec![T::zero(); m * n];
        let mut col = vec![T::zero(); m];
        let mut out = vec![T::zero(); m];
        for j in 0..n {
            for i in 0..m {
                col[i] = src[i * n + j];
            }
            softmax_slice(&col, &mut out);
            for i in 0..m {
                values[i * n + j] = out[i];
            }
        }
        Ok(self.push(vec![m, n], values, Op::SoftmaxCols { a }))
    }

    /// Pearson correlation of every row of `A` against every row of `B`.
    ///
    /// Entry `[x][y]` correlates row `x` of `A` with row `y` of `B`. When a
    /// row pair's raw denominator falls below the shared guard the entry is
    /// defined as 0 and contributes no gradient (constant rows would
    /// otherwise produce 0/0).
    pub fn pearson_rows(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, n) = self.dims2(a, "pearson_rows")?;
        self.same_shape(a, b, "pearson_rows")?;
        if n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: n });
        }
        let sa = RowStats::centered(&self.nodes[a.0].values, m, n);
        let sb = RowStats::centered(&self.nodes[b.0].values, m, n);
        let values = correlation_forward(&sa, &sb, m, n);
        Ok(self.push(vec![m, m], values, Op::PearsonRows { a, b }))
    }

    /// Cosine similarity of every row of `A` against every row of `B`.
    /// Same guard convention as [`Graph::pearson_rows`].
    pub fn cosine_rows(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, n) = self.dims2(a, "cosine_rows")?;
        self.same_shape(a, b, "cosine_rows")?;
        let sa = RowStats::raw(&self.nodes[a.0].values, m, n);
        let sb = RowStats::raw(&self.nodes[b.0].values, m, n);
        let values = correlation_forward(&sa, &sb, m, n);
        Ok(self.push(vec![m, m], values, Op::CosineRows { a, b }))
    }

    /// Full GRU recurrence as a single node. `inputs` must be step-major:
    /// `steps` consecutive blocks of `m × input_size` rows. Gate parameter
    /// shapes: input `input_size × h`, hidden `h × h`, bias `h`. Returns
    /// the final hidden state, `m × h`.
    pub fn gru_sequence(
        &mut self,
        inputs: TensorId,
        weights: GruWeightIds,
        steps: usize,
    ) -> Result<TensorId> {
        let (rows, input_size) = self.dims2(inputs, "gru_sequence")?;
        if steps == 0 || rows % steps != 0 {
            return Err(Error::Contract(format!(
                "gru_sequence inputs have {rows} rows, not divisible into {steps} steps"
            )));
        }
        let m = rows / steps;
        let hidden = match self.nodes[weights.update_hidden.0].shape.as_slice() {
            [h1, h2] if h1 == h2 => *h1,
            other => {
                return Err(Error::ShapeMismatch {
                    op: "gru_sequence",
                    lhs: other.to_vec(),
                    rhs: vec![],
                })
            }
        };
        for (id, expect) in [
            (weights.update_input, vec![input_size, hidden]),
            (weights.update_hidden, vec![hidden, hidden]),
            (weights.update_bias, vec![hidden]),
            (weights.reset_input, vec![input_size, hidden]),
            (weights.reset_hidden, vec![hidden, hidden]),
            (weights.reset_bias, vec![hidden]),
            (weights.candidate_input, vec![input_size, hidden]),
            (weights.candidate_hidden, vec![hidden, hidden]),
            (weights.candidate_bias, vec![hidden]),
        ] {
            if self.nodes[id.0].shape != expect {
                return Err(Error::ShapeMismatch {
                    op: "gru_sequence",
                    lhs: self.nodes[id.0].shape.clone(),
                    rhs: expect,
                });
            }
        }

        let cache = {
            let w = self.gru_slices(&weights);
            gru::forward(
                &self.nodes[inputs.0].values,
                m,
                input_size,
                hidden,
                steps,
                &w,
            )?
        };
        let mh = m * hidden;
        let values = cache.h_all[steps * mh..].to_vec();
        Ok(self.push(
            vec![m, hidden],
            values,
            Op::GruSequence {
                inputs,
                weights,
                cache: Box::new(cache),
            },
        ))
    }

    fn gru_slices(&self, w: &GruWeightIds) -> gru::GruSlices<'_, T> {
        let gate = |i: TensorId, h: TensorId, b: TensorId| gru::GateSlices {
            input: self.nodes[i.0].values.as_slice(),
            hidden: self.nodes[h.0].values.as_slice(),
            bias: self.nodes[b.0].values.as_slice(),
        };
        gru::GruSlices {
            update: gate(w.update_input, w.update_hidden, w.update_bias),
            reset: gate(w.reset_input, w.reset_hidden, w.reset_bias),
            candidate: gate(w.candidate_input, w.candidate_hidden, w.candidate_bias),
        }
    }

    /// Mean over every entry; returns a scalar tensor of shape `[1]`.
    pub fn mean_all(&mut self, a: TensorId) -> TensorId {
        let src = &self.nodes[a.0].values;
        let len = T::from_usize(src.len()).expect("usize conversion");
        let mean = src.iter().copied().sum::<T>() / len;
        self.push(vec![1], vec![mean], Op::MeanAll { a })
    }

    fn check_finite(&self, id: TensorId, context: &str) -> Result<()> {
        if self.nodes[id.0].values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(context.to_string()));
        }
        Ok(())
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reset every gradient buffer in the graph.
    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    /// Accumulate `dL/dnode` into every node reachable from `loss`.
    ///
    /// `loss` must be a single-element tensor. Each node is visited exactly
    /// once, in reverse creation order (creation order is topological since
    /// ops only reference earlier nodes).
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.nodes[loss.0].values.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let n = self.nodes.len();
        let mut adjoint: Vec<Option<Vec<T>>> = vec![None; n];
        adjoint[loss.0] = Some(vec![T::one()]);

        for idx in (0..n).rev() {
            let Some(g) = adjoint[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut adjoint);
            // fold this pass's adjoint into the persistent (accumulating) grad
            let node = &mut self.nodes[idx];
            match &mut node.grad {
                Some(buf) => {
                    for (dst, src) in buf.iter_mut().zip(&g) {
                        *dst += *src;
                    }
                }
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    /// Apply one node's backward rule, adding contributions into `adjoint`.
    fn propagate(&self, idx: usize, g: &[T], adjoint: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        fn slot<T: Scalar>(
            adjoint: &mut [Option<Vec<T>>],
            id: TensorId,
            len: usize,
        ) -> &mut Vec<T> {
            adjoint[id.0].get_or_insert_with(|| vec![T::zero(); len])
        }
        macro_rules! acc {
            ($adjoint:expr, $id:expr) => {
                slot($adjoint, $id, self.nodes[$id.0].values.len())
            };
        }
        match &node.op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (m, k) = (self.nodes[a.0].shape[0], self.nodes[a.0].shape[1]);
                let n = self.nodes[b.0].shape[1];
                let av = &self.nodes[a.0].values;
                let bv = &self.nodes[b.0].values;
                {
                    let da = acc!(adjoint, *a);
                    // dA += G · Bᵀ
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        let darow = &mut da[i * k..(i + 1) * k];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            let mut accu = T::zero();
                            for j in 0..n {
                                accu += grow[j] * brow[j];
                            }
                            darow[p] += accu;
                        }
                    }
                }
                {
                    let db = acc!(adjoint, *b);
                    // dB += Aᵀ · G
                    for i in 0..m {
                        let arow = &av[i * k..(i + 1) * k];
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = arow[p];
                            let dbrow = &mut db[p * n..(p + 1) * n];
                            for j in 0..n {
                                dbrow[j] += aip * grow[j];
                            }
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                add_into(acc!(adjoint, *a), g);
                add_into(acc!(adjoint, *b), g);
            }
            Op::Sub { a, b } => {
                add_into(acc!(adjoint, *a), g);
                let db = acc!(adjoint, *b);
                for (dst, src) in db.iter_mut().zip(g) {
                    *dst -= *src;
                }
            }
            Op::Mul { a, b } => {
                let bv = &self.nodes[b.0].values;
                let av = &self.nodes[a.0].values;
                {
                    let da = acc!(adjoint, *a);
                    for i in 0..g.len() {
                        da[i] += g[i] * bv[i];
                    }
                }
                {
                    let db = acc!(adjoint, *b);
                    for i in 0..g.len() {
                        db[i] += g[i] * av[i];
                    }
                }
            }
            Op::AddRow { a, row } => {
                add_into(acc!(adjoint, *a), g);
                let n = self.nodes[row.0].values.len();
                let m = g.len() / n;
                let drow = acc!(adjoint, *row);
                for i in 0..m {
                    for j in 0..n {
                        drow[j] += g[i * n + j];
                    }
                }
            }
            Op::Scale { a, factor } => {
                let da = acc!(adjoint, *a);
                for i in 0..g.len() {
                    da[i] += g[i] * *factor;
                }
            }
            Op::ScaleBy { a, s } => {
                let sv = self.nodes[s.0].values[0];
                let av = &self.nodes[a.0].values;
                {
                    let da = acc!(adjoint, *a);
                    for i in 0..g.len() {
                        da[i] += g[i] * sv;
                    }
                }
                {
                    let ds = acc!(adjoint, *s);
                    let mut accu = T::zero();
                    for i in 0..g.len() {
                        accu += g[i] * av[i];
                    }
                    ds[0] += accu;
                }
            }
            Op::Sigmoid { a } => {
                let y = &node.values;
                let da = acc!(adjoint, *a);
                for i in 0..g.len() {
                    da[i] += g[i] * y[i] * (T::one() - y[i]);
                }
            }
            Op::Tanh { a } => {
                let y = &node.values;
                let da = acc!(adjoint, *a);
                for i in 0..g.len() {
                    da[i] += g[i] * (T::one() - y[i] * y[i]);
                }
            }
            Op::SoftmaxRows { a } => {
                let (m, n) = (node.shape[0], node.shape[1]);
                let y = &node.values;
                let da = acc!(adjoint, *a);
                for i in 0..m {
                    let yr = &y[i * n..(i + 1) * n];
                    let gr = &g[i * n..(i + 1) * n];
                    let dot = dot(yr, gr);
                    let dr = &mut da[i * n..(i + 1) * n];
                    for j in 0..n {
                        dr[j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
            Op::SoftmaxCols { a } => {
                let (m, n) = (node.shape[0], node.shape[1]);
                let y = &node.values;
                let da = acc!(adjoint, *a);
                for j in 0..n {
                    let mut dot = T::zero();
                    for i in 0..m {
                        dot += y[i * n + j] * g[i * n + j];
                    }
                    for i in 0..m {
                        da[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
                    }
                }
            }
            Op::PearsonRows { a, b } => {
                let m = self.nodes[a.0].shape[0];
                let n = self.nodes[a.0].shape[1];
                let sa = RowStats::centered(&self.nodes[a.0].values, m, n);
                let sb = RowStats::centered(&self.nodes[b.0].values, m, n);
                self.correlation_backward(&sa, &sb, &node.values, g, m, n, adjoint, *a, *b);
            }
            Op::CosineRows { a, b } => {
                let m = self.nodes[a.0].shape[0];
                let n = self.nodes[a.0].shape[1];
                let sa = RowStats::raw(&self.nodes[a.0].values, m, n);
                let sb = RowStats::raw(&self.nodes[b.0].values, m, n);
                self.correlation_backward(&sa, &sb, &node.values, g, m, n, adjoint, *a, *b);
            }
            Op::MeanAll { a } => {
                let len = self.nodes[a.0].values.len();
                let w = g[0] / T::from_usize(len).expect("usize conversion");
                let da = acc!(adjoint, *a);
                for d in da.iter_mut() {
                    *d += w;
                }
            }
            Op::GruSequence {
                inputs,
                weights,
                cache,
            } => {
                let input_size = self.nodes[inputs.0].shape[1];
                let w = self.gru_slices(weights);
                let grads = gru::backward(cache, &self.nodes[inputs.0].values, input_size, &w, g);
                add_into(acc!(adjoint, *inputs), &grads.inputs);
                for (id, dw) in weights.all().into_iter().zip(&grads.weights) {
                    add_into(acc!(adjoint, id), dw);
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn correlation_backward(
        &self,
        sa: &RowStats<T>,
        sb: &RowStats<T>,
        out: &[T],
        g: &[T],
        m: usize,
        n: usize,
        adjoint: &mut [Option<Vec<T>>],
        a: TensorId,
        b: TensorId,
    ) {
        let eps = T::from_f64_lossy(CORRELATION_EPS);
        let mut da = vec![T::zero(); m * n];
        let mut db = vec![T::zero(); m * n];
        for x in 0..m {
            let ax = &sa.rows[x * n..(x + 1) * n];
            for y in 0..m {
                let gxy = g[x * m + y];
                if gxy == T::zero() {
                    continue;
                }
                let raw = sa.norms[x] * sb.norms[y];
                if raw < eps {
                    continue; // guarded entry: defined as 0 with zero gradient
                }
                let by = &sb.rows[y * n..(y + 1) * n];
                let r = out[x * m + y];
                let inv = T::one() / raw;
                let ra = r / (sa.norms[x] * sa.norms[x]);
                let rb = r / (sb.norms[y] * sb.norms[y]);
                let dax = &mut da[x * n..(x + 1) * n];
                for i in 0..n {
                    dax[i] += gxy * (by[i] * inv - ra * ax[i]);
                }
                let dby = &mut db[y * n..(y + 1) * n];
                for i in 0..n {
                    dby[i] += gxy * (ax[i] * inv - rb * by[i]);
                }
            }
        }
        add_into(
            adjoint[a.0].get_or_insert_with(|| vec![T::zero(); m * n]),
            &da,
        );
        add_into(
            adjoint[b.0].get_or_insert_with(|| vec![T::zero(); m * n]),
            &db,
        );
    }
}

// ── Shared kernels ──────────────────────────────────────────────────────

/// Row-major matrix product accumulated into `out` (must be zeroed).
fn matmul_into<T: Scalar>(out: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += aip * brow[j];
            }
        }
    }
}

fn zip_map<T: Scalar>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Max-shifted softmax of `src` into `dst`.
fn softmax_slice<T: Scalar>(src: &[T], dst: &mut [T]) {
    let mut max = src[0];
    for &v in &src[1..] {
        if v > max {
            max = v;
        }
    }
    let mut sum = T::zero();
    for (d, &v) in dst.iter_mut().zip(src) {
        let e = (v - max).exp();
        *d = e;
        sum += e;
    }
    for d in dst.iter_mut() {
        *d = *d / sum;
    }
}

/// Per-row views used by both correlation kernels: for Pearson the rows are
/// mean-centered, for cosine they are taken as-is; `norms` is the L2 norm of
/// each (possibly centered) row.
struct RowStats<T> {
    rows: Vec<T>,
    norms: Vec<T>,
}

impl<T: Scalar> RowStats<T> {
    fn centered(values: &[T], m: usize, n: usize) -> Self {
        let mut rows = values.to_vec();
        let len = T::from_usize(n).expect("usize conversion");
        for i in 0..m {
            let row = &mut rows[i * n..(i + 1) * n];
            let mean = row.iter().copied().sum::<T>() / len;
            for v in row.iter_mut() {
                *v = *v - mean;
            }
        }
        Self::from_rows(rows, m, n)
    }

    fn raw(values: &[T], m: usize, n: usize) -> Self {
        Self::from_rows(values.to_vec(), m, n)
    }

    fn from_rows(rows: Vec<T>, m: usize, n: usize) -> Self {
        let norms = (0..m)
            .map(|i| {
                let row = &rows[i * n..(i + 1) * n];
                dot(row, row).sqrt()
            })
            .collect();
        RowStats { rows, norms }
    }
}

fn correlation_forward<T: Scalar>(sa: &RowStats<T>, sb: &RowStats<T>, m: usize, n: usize) -> Vec<T> {
    let eps = T::from_f64_lossy(CORRELATION_EPS);
    let mut out = vec![T::zero(); m * m];
    for x in 0..m {
        let ax = &sa.rows[x * n..(x + 1) * n];
        for y in 0..m {
            let raw = sa.norms[x] * sb.norms[y];
            out[x * m + y] = if raw < eps {
                T::zero()
            } else {
                dot(ax, &sb.rows[y * n..(y + 1) * n]) / raw
            };
        }
    }
    out
}
