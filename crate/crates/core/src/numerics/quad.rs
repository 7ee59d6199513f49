use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Values that composite quadrature can accumulate.
pub trait Integrand: Clone {
    /// `self += w * other`
    fn add_weighted(&mut self, w: f64, other: &Self);
    fn scaled(&self, s: f64) -> Self;
}

impl Integrand for f64 {
    fn add_weighted(&mut self, w: f64, other: &f64) {
        *self += w * other;
    }
    fn scaled(&self, s: f64) -> f64 {
        self * s
    }
}

impl Integrand for Matrix {
    fn add_weighted(&mut self, w: f64, other: &Matrix) {
        self.add_scaled(w, other);
    }
    fn scaled(&self, s: f64) -> Matrix {
        self.scale(s)
    }
}

/// Composite Simpson rule over `[a, b]` with an even number of panels.
pub fn quad_simpson<T, G>(mut g: G, a: f64, b: f64, n_panels: usize) -> Result<T>
where
    T: Integrand,
    G: FnMut(f64) -> T,
{
    if n_panels == 0 || !n_panels.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "simpson needs an even panel count, got {n_panels}"
        )));
    }
    if !(b > a) {
        return Err(Error::Parameter(format!(
            "simpson needs b > a, got [{a}, {b}]"
        )));
    }
    let h = (b - a) / n_panels as f64;
    let mut acc = g(a);
    acc.add_weighted(1.0, &g(b));
    for i in 1..n_panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc.add_weighted(w, &g(a + i as f64 * h));
    }
    Ok(acc.scaled(h / 3.0))
}
