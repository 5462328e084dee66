//! Central finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A deterministic scalar function of a flat parameter vector, together
/// with its analytic gradient. Implementations typically rebuild a fresh
/// [`super::Graph`] per call.
pub trait GradTarget<T: Scalar> {
    fn value(&self, params: &[T]) -> Result<T>;
    fn gradient(&self, params: &[T]) -> Result<Vec<T>>;
}

/// Pair of closures implementing [`GradTarget`].
pub struct FnTarget<V, G> {
    pub value_fn: V,
    pub gradient_fn: G,
}

impl<T, V, G> GradTarget<T> for FnTarget<V, G>
where
    T: Scalar,
    V: Fn(&[T]) -> Result<T>,
    G: Fn(&[T]) -> Result<Vec<T>>,
{
    fn value(&self, params: &[T]) -> Result<T> {
        (self.value_fn)(params)
    }

    fn gradient(&self, params: &[T]) -> Result<Vec<T>> {
        (self.gradient_fn)(params)
    }
}

pub const DEFAULT_FD_EPS: f64 = 1e-5;

/// Compare the analytic gradient of `target` at `params` against central
/// finite differences, coordinate by coordinate.
///
/// Returns the worst relative error over all coordinates, where
/// `rel = |a - n| / max(|a|, |n|, 1e-8)`. The target is evaluated twice up
/// front; a bitwise mismatch means it is not deterministic and is an error.
pub fn grad_check<T: Scalar>(
    target: &impl GradTarget<T>,
    params: &[T],
    eps: T,
) -> Result<T> {
    if eps <= T::zero() {
        return Err(Error::Spec("finite-difference eps must be positive".into()));
    }
    let v1 = target.value(params)?;
    let v2 = target.value(params)?;
    if !(v1 == v2) {
        return Err(Error::Determinism(format!(
            "double evaluation mismatch: {v1} vs {v2}"
        )));
    }

    let analytic = target.gradient(params)?;
    if analytic.len() != params.len() {
        return Err(Error::Contract(format!(
            "gradient length {} does not match parameter length {}",
            analytic.len(),
            params.len()
        )));
    }

    let floor = T::from_f64_lossy(1e-8);
    let two = T::from_f64_lossy(2.0);
    let mut worst = T::zero();
    let mut point = params.to_vec();
    for i in 0..point.len() {
        let orig = point[i];
        point[i] = orig + eps;
        let fp = target.value(&point)?;
        point[i] = orig - eps;
        let fm = target.value(&point)?;
        point[i] = orig;
        let numeric = (fp - fm) / (two * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(floor);
        let rel = (analytic[i] - numeric).abs() / denom;
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;

    #[test]
    fn quadratic_at_three() {
        let target = FnTarget {
            value_fn: |p: &[f64]| Ok(p[0] * p[0]),
            gradient_fn: |p: &[f64]| Ok(vec![2.0 * p[0]]),
        };
        let worst = grad_check(&target, &[3.0], 1e-5).unwrap();
        assert!(worst < 1e-9, "worst rel err {worst}");
    }

    #[test]
    fn pearson_loss_on_small_matrix() {
        // mean of all entries of pearson_rows(softmax_rows(X), softmax_cols(X))
        type Built = (Graph<f64>, crate::autodiff::TensorId, crate::autodiff::TensorId);
        fn build(params: &[f64]) -> crate::error::Result<Built> {
            let mut g = Graph::new();
            let x = g.leaf(params.to_vec(), &[3, 4])?;
            let sr = g.softmax_rows(x)?;
            let sc = g.softmax_cols(x)?;
            let r = g.pearson_rows(sr, sc)?;
            let loss = g.mean_all(r);
            Ok((g, x, loss))
        }
        let target = FnTarget {
            value_fn: |p: &[f64]| {
                let (g, _, loss) = build(p)?;
                Ok(g.values(loss)[0])
            },
            gradient_fn: |p: &[f64]| {
                let (mut g, x, loss) = build(p)?;
                g.backward(loss)?;
                Ok(g.grad(x).unwrap().to_vec())
            },
        };
        // irregular values: arithmetic ramps would softmax into constant
        // rows and trip the correlation guard
        let params: Vec<f64> = (0..12)
            .map(|i: u32| f64::from((i * i * 31 + 7) % 13) * 0.21 - 1.1)
            .collect();
        let worst = grad_check(&target, &params, 1e-5).unwrap();
        assert!(worst < 1e-5, "worst rel err {worst}");
    }

    #[test]
    fn non_deterministic_target_is_rejected() {
        use std::cell::Cell;
        let counter = Cell::new(0.0_f64);
        let target = FnTarget {
            value_fn: move |_: &[f64]| {
                counter.set(counter.get() + 1.0);
                Ok(counter.get())
            },
            gradient_fn: |_: &[f64]| Ok(vec![0.0]),
        };
        assert!(matches!(
            grad_check(&target, &[1.0], 1e-5),
            Err(Error::Determinism(_))
        ));
    }
}
