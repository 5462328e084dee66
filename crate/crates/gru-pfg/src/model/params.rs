//! Learnable parameter storage shared by every model variant.
//!
//! Parameters live outside the per-day computation graphs: each forward
//! pass binds them as leaf tensors, and after backward the leaf gradients
//! are harvested back into the persistent `grad` buffers here.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A named, persistent parameter array with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct ParamTensor<T> {
    shape: Vec<usize>,
    pub values: Vec<T>,
    pub grad: Vec<T>,
    /// Frozen parameters keep their value through training; ablation
    /// variants are expressed by freezing fusion scalars.
    pub trainable: bool,
}

impl<T: Scalar> ParamTensor<T> {
    pub fn new(shape: Vec<usize>, values: Vec<T>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), values.len());
        let grad = vec![T::zero(); values.len()];
        ParamTensor {
            shape,
            values,
            grad,
            trainable: true,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self::new(shape, vec![T::zero(); len])
    }

    pub fn scalar(v: T) -> Self {
        Self::new(vec![1], vec![v])
    }

    /// Uniform init in `[-bound, bound]`, drawn in f64 so the stream is
    /// identical across scalar types.
    pub fn uniform(shape: Vec<usize>, bound: f64, rng: &mut impl Rng) -> Self {
        let len = shape.iter().product();
        let values = (0..len)
            .map(|_| T::from_f64_lossy(rng.random_range(-bound..=bound)))
            .collect();
        Self::new(shape, values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grad {
            *g = T::zero();
        }
    }

    pub fn frozen(mut self) -> Self {
        self.trainable = false;
        self
    }
}

/// Uniform access to a model's named parameters, in a stable order.
pub trait ParamSet<T: Scalar> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'static str, &'a ParamTensor<T>));
    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'static str, &'a mut ParamTensor<T>));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    fn zero_grads(&mut self) {
        self.visit_mut(&mut |_, t| t.zero_grad());
    }

    /// Concatenate all parameter values in visit order.
    fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |_, t| out.extend_from_slice(&t.values));
        out
    }

    /// Concatenate all gradients in visit order.
    fn grad_to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |_, t| out.extend_from_slice(&t.grad));
        out
    }

    /// Overwrite all parameter values from a flat vector in visit order.
    fn from_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Contract(format!(
                "flat vector length {} does not match parameter count {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        self.visit_mut(&mut |_, t| {
            let len = t.len();
            t.values.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        });
        Ok(())
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, t| ok &= t.values.iter().all(|v| v.is_finite()));
        ok
    }
}

/// One GRU gate: input projection, hidden projection, bias.
#[derive(Debug, Clone)]
pub struct GateParams<T> {
    pub input: ParamTensor<T>,  // [input_size × hidden]
    pub hidden: ParamTensor<T>, // [hidden × hidden]
    pub bias: ParamTensor<T>,   // [hidden]
}

impl<T: Scalar> GateParams<T> {
    fn init(input_size: usize, hidden: usize, bound: f64, rng: &mut impl Rng) -> Self {
        GateParams {
            input: ParamTensor::uniform(vec![input_size, hidden], bound, rng),
            hidden: ParamTensor::uniform(vec![hidden, hidden], bound, rng),
            bias: ParamTensor::zeros(vec![hidden]),
        }
    }

    fn zeros(input_size: usize, hidden: usize) -> Self {
        GateParams {
            input: ParamTensor::zeros(vec![input_size, hidden]),
            hidden: ParamTensor::zeros(vec![hidden, hidden]),
            bias: ParamTensor::zeros(vec![hidden]),
        }
    }
}

/// Single-layer GRU with update, reset and candidate gates.
#[derive(Debug, Clone)]
pub struct GruParams<T> {
    pub update: GateParams<T>,
    pub reset: GateParams<T>,
    pub candidate: GateParams<T>,
    pub input_size: usize,
    pub hidden_size: usize,
}

impl<T: Scalar> GruParams<T> {
    /// Gate weights uniform in `[-1/sqrt(hidden), 1/sqrt(hidden)]`, biases zero.
    pub fn init(input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden_size as f64).sqrt();
        GruParams {
            update: GateParams::init(input_size, hidden_size, bound, rng),
            reset: GateParams::init(input_size, hidden_size, bound, rng),
            candidate: GateParams::init(input_size, hidden_size, bound, rng),
            input_size,
            hidden_size,
        }
    }

    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        GruParams {
            update: GateParams::zeros(input_size, hidden_size),
            reset: GateParams::zeros(input_size, hidden_size),
            candidate: GateParams::zeros(input_size, hidden_size),
            input_size,
            hidden_size,
        }
    }
}

/// Linear prediction head mapping hidden features to one return per stock.
#[derive(Debug, Clone)]
pub struct HeadParams<T> {
    pub weight: ParamTensor<T>, // [hidden × 1]
    pub bias: ParamTensor<T>,   // [1]
}

impl<T: Scalar> HeadParams<T> {
    pub fn init(hidden_size: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden_size as f64).sqrt();
        HeadParams {
            weight: ParamTensor::uniform(vec![hidden_size, 1], bound, rng),
            bias: ParamTensor::zeros(vec![1]),
        }
    }

    pub fn zeros(hidden_size: usize) -> Self {
        HeadParams {
            weight: ParamTensor::zeros(vec![hidden_size, 1]),
            bias: ParamTensor::zeros(vec![1]),
        }
    }
}

pub const FUSION_INIT: f64 = 0.1;

/// The six scalar mixing weights of the relationship stages.
///
/// `residual_row`/`residual_col` weight the softmax projections subtracted
/// from the features to form the residual; `base`, `primary`, `residual`
/// and `secondary` weight the four terms of the final fused feature.
#[derive(Debug, Clone)]
pub struct FusionWeights<T> {
    pub residual_row: ParamTensor<T>,
    pub residual_col: ParamTensor<T>,
    pub base: ParamTensor<T>,
    pub primary: ParamTensor<T>,
    pub residual: ParamTensor<T>,
    pub secondary: ParamTensor<T>,
}

impl<T: Scalar> FusionWeights<T> {
    pub fn init() -> Self {
        let v = T::from_f64_lossy(FUSION_INIT);
        FusionWeights {
            residual_row: ParamTensor::scalar(v),
            residual_col: ParamTensor::scalar(v),
            base: ParamTensor::scalar(v),
            primary: ParamTensor::scalar(v),
            residual: ParamTensor::scalar(v),
            secondary: ParamTensor::scalar(v),
        }
    }

    /// Freeze the secondary-stage contributions at zero, leaving only the
    /// base and primary terms active.
    pub fn freeze_secondary_stage(&mut self) {
        self.residual.values[0] = T::zero();
        self.residual.trainable = false;
        self.secondary.values[0] = T::zero();
        self.secondary.trainable = false;
    }

    /// Freeze everything so the model reduces to the GRU + head baseline.
    pub fn freeze_to_baseline(&mut self) {
        self.residual_row.values[0] = T::zero();
        self.residual_col.values[0] = T::zero();
        self.base.values[0] = T::one();
        self.primary.values[0] = T::zero();
        self.residual.values[0] = T::zero();
        self.secondary.values[0] = T::zero();
        for t in [
            &mut self.residual_row,
            &mut self.residual_col,
            &mut self.base,
            &mut self.primary,
            &mut self.residual,
            &mut self.secondary,
        ] {
            t.trainable = false;
        }
    }
}

/// All learnable parameters of the GRU-PFG model.
#[derive(Debug, Clone)]
pub struct GruPfgParams<T> {
    pub gru: GruParams<T>,
    pub fusion: FusionWeights<T>,
    pub head: HeadParams<T>,
}

impl<T: Scalar> GruPfgParams<T> {
    pub fn init(input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        GruPfgParams {
            gru: GruParams::init(input_size, hidden_size, rng),
            fusion: FusionWeights::init(),
            head: HeadParams::init(hidden_size, rng),
        }
    }

    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        GruPfgParams {
            gru: GruParams::zeros(input_size, hidden_size),
            fusion: FusionWeights::init(),
            head: HeadParams::zeros(hidden_size),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.gru.hidden_size
    }
}

macro_rules! visit_entries {
    ($self:ident, $f:ident, $($name:literal => $field:expr),+ $(,)?) => {
        $( $f($name, $field); )+
    };
}

impl<T: Scalar> ParamSet<T> for GruPfgParams<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'static str, &'a ParamTensor<T>)) {
        visit_entries!(self, f,
            "gru.update.input" => &self.gru.update.input,
            "gru.update.hidden" => &self.gru.update.hidden,
            "gru.update.bias" => &self.gru.update.bias,
            "gru.reset.input" => &self.gru.reset.input,
            "gru.reset.hidden" => &self.gru.reset.hidden,
            "gru.reset.bias" => &self.gru.reset.bias,
            "gru.candidate.input" => &self.gru.candidate.input,
            "gru.candidate.hidden" => &self.gru.candidate.hidden,
            "gru.candidate.bias" => &self.gru.candidate.bias,
            "fusion.residual_row" => &self.fusion.residual_row,
            "fusion.residual_col" => &self.fusion.residual_col,
            "fusion.base" => &self.fusion.base,
            "fusion.primary" => &self.fusion.primary,
            "fusion.residual" => &self.fusion.residual,
            "fusion.secondary" => &self.fusion.secondary,
            "head.weight" => &self.head.weight,
            "head.bias" => &self.head.bias,
        );
    }

    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'static str, &'a mut ParamTensor<T>)) {
        visit_entries!(self, f,
            "gru.update.input" => &mut self.gru.update.input,
            "gru.update.hidden" => &mut self.gru.update.hidden,
            "gru.update.bias" => &mut self.gru.update.bias,
            "gru.reset.input" => &mut self.gru.reset.input,
            "gru.reset.hidden" => &mut self.gru.reset.hidden,
            "gru.reset.bias" => &mut self.gru.reset.bias,
            "gru.candidate.input" => &mut self.gru.candidate.input,
            "gru.candidate.hidden" => &mut self.gru.candidate.hidden,
            "gru.candidate.bias" => &mut self.gru.candidate.bias,
            "fusion.residual_row" => &mut self.fusion.residual_row,
            "fusion.residual_col" => &mut self.fusion.residual_col,
            "fusion.base" => &mut self.fusion.base,
            "fusion.primary" => &mut self.fusion.primary,
            "fusion.residual" => &mut self.fusion.residual,
            "fusion.secondary" => &mut self.fusion.secondary,
            "head.weight" => &mut self.head.weight,
            "head.bias" => &mut self.head.bias,
        );
    }
}

/// Parameters of the plain GRU + linear head baseline.
#[derive(Debug, Clone)]
pub struct GruBaselineParams<T> {
    pub gru: GruParams<T>,
    pub head: HeadParams<T>,
}

impl<T: Scalar> GruBaselineParams<T> {
    pub fn init(input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        GruBaselineParams {
            gru: GruParams::init(input_size, hidden_size, rng),
            head: HeadParams::init(hidden_size, rng),
        }
    }

    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        GruBaselineParams {
            gru: GruParams::zeros(input_size, hidden_size),
            head: HeadParams::zeros(hidden_size),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.gru.hidden_size
    }
}

impl<T: Scalar> ParamSet<T> for GruBaselineParams<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'static str, &'a ParamTensor<T>)) {
        visit_entries!(self, f,
            "gru.update.input" => &self.gru.update.input,
            "gru.update.hidden" => &self.gru.update.hidden,
            "gru.update.bias" => &self.gru.update.bias,
            "gru.reset.input" => &self.gru.reset.input,
            "gru.reset.hidden" => &self.gru.reset.hidden,
            "gru.reset.bias" => &self.gru.reset.bias,
            "gru.candidate.input" => &self.gru.candidate.input,
            "gru.candidate.hidden" => &self.gru.candidate.hidden,
            "gru.candidate.bias" => &self.gru.candidate.bias,
            "head.weight" => &self.head.weight,
            "head.bias" => &self.head.bias,
        );
    }

    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'static str, &'a mut ParamTensor<T>)) {
        visit_entries!(self, f,
            "gru.update.input" => &mut self.gru.update.input,
            "gru.update.hidden" => &mut self.gru.update.hidden,
            "gru.update.bias" => &mut self.gru.update.bias,
            "gru.reset.input" => &mut self.gru.reset.input,
            "gru.reset.hidden" => &mut self.gru.reset.hidden,
            "gru.reset.bias" => &mut self.gru.reset.bias,
            "gru.candidate.input" => &mut self.gru.candidate.input,
            "gru.candidate.hidden" => &mut self.gru.candidate.hidden,
            "gru.candidate.bias" => &mut self.gru.candidate.bias,
            "head.weight" => &mut self.head.weight,
            "head.bias" => &mut self.head.bias,
        );
    }
}

/// Feed-forward baseline: 360 -> 256 -> 64 -> 1 with tanh activations.
#[derive(Debug, Clone)]
pub struct MlpParams<T> {
    pub layers: Vec<(ParamTensor<T>, ParamTensor<T>)>, // (weight, bias) per layer
}

pub const MLP_LAYER_SIZES: [usize; 4] = [360, 256, 64, 1];

impl<T: Scalar> MlpParams<T> {
    pub fn init(rng: &mut impl Rng) -> Self {
        let layers = MLP_LAYER_SIZES
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                (
                    ParamTensor::uniform(vec![w[0], w[1]], bound, rng),
                    ParamTensor::zeros(vec![w[1]]),
                )
            })
            .collect();
        MlpParams { layers }
    }

    pub fn zeros() -> Self {
        let layers = MLP_LAYER_SIZES
            .windows(2)
            .map(|w| {
                (
                    ParamTensor::zeros(vec![w[0], w[1]]),
                    ParamTensor::zeros(vec![w[1]]),
                )
            })
            .collect();
        MlpParams { layers }
    }
}

const MLP_NAMES: [(&str, &str); 3] = [
    ("mlp.layer1.weight", "mlp.layer1.bias"),
    ("mlp.layer2.weight", "mlp.layer2.bias"),
    ("mlp.layer3.weight", "mlp.layer3.bias"),
];

impl<T: Scalar> ParamSet<T> for MlpParams<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'static str, &'a ParamTensor<T>)) {
        for (layer, names) in self.layers.iter().zip(MLP_NAMES) {
            f(names.0, &layer.0);
            f(names.1, &layer.1);
        }
    }

    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'static str, &'a mut ParamTensor<T>)) {
        for (layer, names) in self.layers.iter_mut().zip(MLP_NAMES) {
            f(names.0, &mut layer.0);
            f(names.1, &mut layer.1);
        }
    }
}
