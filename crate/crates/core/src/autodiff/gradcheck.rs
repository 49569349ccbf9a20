//! Central finite-difference verification of tape gradients.

use crate::autodiff::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Compares the tape gradient of a scalar function against central
/// differences at `point`.
///
/// `function` records the computation on a fresh tape, starting from the
/// differentiable leaf it is handed, and returns the scalar output. The
/// result is `max_i |analytic_i − numeric_i| / max(1, |analytic_i|)`.
pub fn finite_difference_check<F>(function: F, point: &Tensor, epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Parameter(format!(
            "finite-difference step must be positive, got {epsilon}"
        )));
    }

    let mut tape = Tape::new();
    let x = tape.variable(point.clone());
    let y = function(&mut tape, x)?;
    let value = tape.value(y).item()?;
    if !value.is_finite() {
        return Err(Error::Evaluation(format!("f(point) = {value}")));
    }
    let analytic = tape.backward(y)?.take_or_zeros(x, point.shape());

    let evaluate = |p: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.variable(p);
        let y = function(&mut tape, x)?;
        let v = tape.value(y).item()?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation(format!("f = {v} near the check point")))
        }
    };

    let mut worst = 0.0f64;
    for i in 0..point.numel() {
        let mut plus = point.clone();
        plus.data_mut()[i] += epsilon;
        let mut minus = point.clone();
        minus.data_mut()[i] -= epsilon;
        let numeric = (evaluate(plus)? - evaluate(minus)?) / (2.0 * epsilon);
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_of_squares(tape: &mut Tape, x: Var) -> Result<Var> {
        let sq = tape.mul(x, x)?;
        tape.sum(sq)
    }

    #[test]
    fn quadratic_is_differenced_exactly() {
        let point = Tensor::vector(vec![0.3, -1.7, 2.2, 0.05, -0.9]);
        let err = finite_difference_check(sum_of_squares, &point, 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn zero_step_is_rejected() {
        let point = Tensor::vector(vec![1.0]);
        assert!(matches!(
            finite_difference_check(sum_of_squares, &point, 0.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn non_finite_function_is_an_evaluation_error() {
        let point = Tensor::vector(vec![1.0]);
        let blow_up = |tape: &mut Tape, x: Var| -> Result<Var> {
            let big = tape.constant(Tensor::vector(vec![f64::MAX]));
            let y = tape.mul(x, big)?;
            let y2 = tape.mul(y, big)?;
            tape.sum(y2)
        };
        let err = finite_difference_check(blow_up, &point, 1e-5).unwrap_err();
        // Debug builds catch the overflow at the op, release builds at the output.
        assert!(
            matches!(err, Error::Evaluation(_) | Error::NonFinite(_)),
            "{err}"
        );
    }
}
