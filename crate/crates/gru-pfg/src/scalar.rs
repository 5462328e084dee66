//! Scalar abstraction for the numeric core.
//!
//! All tensor math, model code and metrics are generic over [`Scalar`] so the
//! same kernels run at f32 or f64. The shipped defaults (CLI, checkpoints,
//! panel files) are f64; see the type aliases at the crate root.

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar usable in tensors, panels and metrics.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from f64 literals and parsed input.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }

    /// Conversion to f64 for reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Denominator guard shared by the correlation kernels and the IC metric:
/// a correlation whose raw denominator falls below this is defined as 0
/// with zero gradient.
pub const CORRELATION_EPS: f64 = 1e-8;
