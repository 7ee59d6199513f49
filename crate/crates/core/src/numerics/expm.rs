use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Matrix exponential `e^{A t}` by scaling and squaring with a truncated
/// Taylor series.
pub fn mat_exp(a: &Matrix, t: f64) -> Result<Matrix> {
    let n = a.require_square("mat_exp")?;
    if !a.is_finite() || !t.is_finite() {
        return Err(Error::Parameter("mat_exp: non-finite input".into()));
    }
    let at = a.scale(t);
    let norm = at.norm_inf();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = at.scale(0.5f64.powi(squarings));

    let mut sum = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..=40 {
        term = (&term * &scaled).scale(1.0 / k as f64);
        sum.add_scaled(1.0, &term);
        if term.norm_inf() <= f64::EPSILON * 1e-2 * sum.norm_inf() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    Ok(sum)
}
