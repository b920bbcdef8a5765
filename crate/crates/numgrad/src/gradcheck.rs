//! Central finite-difference checks against the tape's analytic gradients.

use crate::error::Result;
use crate::scalar::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Compares analytic and central-difference gradients of a scalar
/// function and returns the largest relative error
/// `|analytic − numeric| / (|analytic| + 1e-8)` over all coordinates of
/// all inputs.
///
/// `f` builds the loss on a fresh tape from the given input variables and
/// must be deterministic.
pub fn finite_diff_check<T, F>(f: F, inputs: &[Tensor<T>], eps: f64) -> Result<f64>
where
    T: Real,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor<T>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.wrt(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let eval = |values: &[Tensor<T>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss).item().as_f64())
    };

    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor<T>> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for j in 0..input.numel() {
            let x = input.data()[j];
            probe[k].data_mut()[j] = x + T::lit(eps);
            let up = eval(&probe)?;
            probe[k].data_mut()[j] = x - T::lit(eps);
            let down = eval(&probe)?;
            probe[k].data_mut()[j] = x;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[k].data()[j].as_f64();
            let err = (a - numeric).abs() / (a.abs() + 1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let err = finite_diff_check(|t, v| Ok(t.square(v[0])), &[Tensor::scalar(3.0f64)], 1e-5).unwrap();
        assert!(err < 1e-6, "{err:e}");
    }

    #[test]
    fn detects_wrong_gradient() {
        // clamp at the evaluation point: analytic gradient 0, numeric 0.5
        let err = finite_diff_check(|t, v| Ok(t.clamp_min(v[0], 1.0)), &[Tensor::scalar(1.0f64)], 1e-5).unwrap();
        assert!(err > 0.1);
    }
}
