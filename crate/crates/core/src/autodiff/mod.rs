//! Dense reverse-mode differentiation over 64-bit matrices, plus Adam.

mod adam;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use tape::{sigmoid, AutodiffError, Gradients, Matrix, Tape, Var, BCE_CLAMP};

/// Relative error with an absolute floor on the denominator, so that
/// gradients that are numerically zero compare by absolute difference.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central finite-difference gradient of `f` with respect to every entry of
/// `x`.
pub fn central_difference<F>(x: &Matrix, eps: f64, mut f: F) -> Matrix
where
    F: FnMut(&Matrix) -> f64,
{
    let mut grad = Matrix::zeros(x.raw_dim());
    let mut probe = x.clone();
    for (idx, g) in grad.indexed_iter_mut() {
        let orig = probe[idx];
        probe[idx] = orig + eps;
        let up = f(&probe);
        probe[idx] = orig - eps;
        let down = f(&probe);
        probe[idx] = orig;
        *g = (up - down) / (2.0 * eps);
    }
    grad
}
