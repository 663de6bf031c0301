//! Central-finite-difference validation of analytic gradients.

use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Compares the tape gradient of `f` at `x` against central finite
/// differences with the given step, and returns the worst normalized error
///
/// ```text
/// max_i |analytic_i - numeric_i| / max(|analytic_i| + |numeric_i|, 1e-3)
/// ```
///
/// The denominator floor keeps coordinates with negligible gradients from
/// dominating the score with pure truncation noise; genuine backward-pass
/// bugs show up at the scale of the real gradients and are not hidden by it.
/// `f` must build a scalar loss from the provided variable on the provided
/// tape, and must be a pure function of the variable's value.
pub fn grad_check<F>(f: F, x: &Tensor, step: f64) -> f64
where
    F: Fn(&Tape, Var) -> Var,
{
    assert!(step > 0.0 && step.is_finite(), "grad_check step must be positive");
    let tape = Tape::new();
    let xv = tape.param(x.clone());
    let loss = f(&tape, xv);
    assert_eq!(tape.value(loss).numel(), 1, "grad_check needs a scalar loss");
    let grads = tape.backward(loss);
    let analytic = grads.get_or_zeros(xv, x.shape());

    let eval = |probe: &Tensor| -> f64 {
        let t = Tape::new();
        let v = t.param(probe.clone());
        let l = f(&t, v);
        t.value(l).item()
    };

    let mut worst = 0.0f64;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += step;
        let mut minus = x.clone();
        minus.data_mut()[i] -= step;
        let numeric = (eval(&plus) - eval(&minus)) / (2.0 * step);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-3);
        if err > worst {
            worst = err;
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_form_is_exact() {
        // Central differences are exact for quadratics up to rounding.
        let x = Tensor::new(vec![3, 1], vec![0.3, -1.2, 0.7]);
        let err = grad_check(
            |t, v| {
                let w = t.leaf(Tensor::new(vec![2, 3], vec![1., 2., 0., -1., 0.5, 3.]));
                let y = t.matmul(w, v);
                t.sum_all(t.mul(y, y))
            },
            &x,
            1e-4,
        );
        assert!(err < 1e-8, "max rel error {err}");
    }

    #[test]
    fn denominator_floor_absorbs_truncation_noise() {
        // sum(x^3) at x = 0: the analytic gradient is exactly zero while the
        // central difference returns step^2. The floor keeps that truncation
        // residue small instead of letting 0-vs-1e-8 blow up to error 1.
        let x = Tensor::zeros(vec![2, 1]);
        let err = grad_check(
            |t, v| {
                let sq = t.mul(v, v);
                t.sum_all(t.mul(sq, v))
            },
            &x,
            1e-4,
        );
        assert!(err > 0.0 && err < 1e-4, "cubic truncation: {err}");
    }

    #[test]
    fn unused_variable_has_zero_gradient() {
        let x = Tensor::new(vec![2, 1], vec![1.0, 2.0]);
        let err = grad_check(|t, _v| t.sum_all(t.leaf(Tensor::scalar(5.0))), &x, 1e-4);
        assert_eq!(err, 0.0);
    }
}
