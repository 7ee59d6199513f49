//! Eigenvalues of small dense matrices.
//!
//! Non-symmetric matrices up to 4x4 go through their characteristic
//! polynomial: closed-form quadratic for n = 2, Aberth-Ehrlich simultaneous
//! root iteration for n = 3, 4. Symmetric matrices of any size use cyclic
//! Jacobi rotations.

use super::complex::{poly_eval, Complex};
use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Real-part margin below which an eigenvalue counts as stable.
pub const HURWITZ_MARGIN: f64 = 1e-12;

/// Characteristic polynomial `det(λI - A)` by Faddeev-LeVerrier.
///
/// Coefficients are highest degree first; the leading entry is 1.
pub fn char_poly(a: &Matrix) -> Result<Vec<f64>> {
    let n = a.require_square("char_poly")?;
    let mut coeffs = vec![1.0];
    let mut m = Matrix::zeros(n, n);
    let mut c_prev = 1.0;
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{n-k+1} I
        let mut next = a * &m;
        for i in 0..n {
            next[(i, i)] += c_prev;
        }
        let c = -(a * &next).trace() / k as f64;
        coeffs.push(c);
        c_prev = c;
        m = next;
    }
    Ok(coeffs)
}

/// Monic polynomial with the given roots, highest degree first.
///
/// Complex roots are expected in conjugate pairs; imaginary residue from
/// unpaired roots is discarded.
pub fn poly_from_roots(roots: &[Complex]) -> Vec<f64> {
    let mut p = vec![Complex::ONE];
    for &r in roots {
        let mut next = vec![Complex::ZERO; p.len() + 1];
        for (i, &c) in p.iter().enumerate() {
            next[i] = next[i] + c;
            next[i + 1] = next[i + 1] - c * r;
        }
        p = next;
    }
    p.into_iter().map(|c| c.re).collect()
}

/// All eigenvalues of a square matrix with n <= 4, sorted by real then
/// imaginary part.
pub fn eig_small(a: &Matrix) -> Result<Vec<Complex>> {
    let n = a.require_square("eig_small")?;
    if n == 0 || n > 4 {
        return Err(Error::UnsupportedSize(n));
    }
    if !a.is_finite() {
        return Err(Error::Parameter("eig_small: non-finite entries".into()));
    }
    let mut roots = match n {
        1 => vec![Complex::real(a[(0, 0)])],
        2 => {
            let tr = a.trace();
            let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
            quadratic_roots(-tr, det).to_vec()
        }
        _ => {
            let p = char_poly(a)?;
            aberth_roots(&p)
        }
    };
    roots.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(roots)
}

/// Roots of `z^2 + b z + c`.
pub fn quadratic_roots(b: f64, c: f64) -> [Complex; 2] {
    let half = -0.5 * b;
    let disc = half * half - c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        // avoid cancellation: compute the larger-magnitude root first
        let r1 = if half >= 0.0 { half + s } else { half - s };
        let r2 = if r1 != 0.0 { c / r1 } else { half - s };
        [Complex::real(r1), Complex::real(r2)]
    } else {
        let s = (-disc).sqrt();
        [Complex::new(half, -s), Complex::new(half, s)]
    }
}

fn poly_derivative(p: &[f64]) -> Vec<f64> {
    let deg = p.len() - 1;
    p.iter()
        .take(deg)
        .enumerate()
        .map(|(i, &c)| c * (deg - i) as f64)
        .collect()
}

/// Aberth-Ehrlich iteration for all roots of a monic real polynomial.
fn aberth_roots(p: &[f64]) -> Vec<Complex> {
    let deg = p.len() - 1;
    let dp = poly_derivative(p);
    let bound = 1.0 + p[1..].iter().map(|c| c.abs()).fold(0.0, f64::max);
    let center = -p[1] / deg as f64;
    let radius = 0.5 * bound;
    let mut z: Vec<Complex> = (0..deg)
        .map(|k| {
            let ang = 0.4 + std::f64::consts::TAU * k as f64 / deg as f64;
            Complex::real(center) + Complex::from_polar(radius, ang)
        })
        .collect();

    for _ in 0..800 {
        let mut max_step: f64 = 0.0;
        for k in 0..deg {
            let pk = poly_eval(p, z[k]);
            if pk.abs() == 0.0 {
                continue;
            }
            let w = pk / poly_eval(&dp, z[k]);
            let repulsion = (0..deg)
                .filter(|&j| j != k)
                .fold(Complex::ZERO, |acc, j| acc + Complex::ONE / (z[k] - z[j]));
            let step = w / (Complex::ONE - w * repulsion);
            if step.re.is_finite() && step.im.is_finite() {
                z[k] = z[k] - step;
                max_step = max_step.max(step.abs() / (1.0 + z[k].abs()));
            }
        }
        if max_step < 1e-16 {
            break;
        }
    }

    // Roots of a real polynomial: snap near-real roots, pair the rest.
    for r in z.iter_mut() {
        if r.im.abs() <= 1e-9 * (1.0 + r.abs()) {
            r.im = 0.0;
        }
    }
    let mut paired = vec![false; deg];
    for i in 0..deg {
        if paired[i] || z[i].im <= 0.0 {
            continue;
        }
        let partner = (0..deg)
            .filter(|&j| !paired[j] && j != i && z[j].im < 0.0)
            .min_by(|&a, &b| {
                (z[a] - z[i].conj())
                    .abs()
                    .total_cmp(&(z[b] - z[i].conj()).abs())
            });
        if let Some(j) = partner {
            let re = 0.5 * (z[i].re + z[j].re);
            let im = 0.5 * (z[i].im - z[j].im);
            z[i] = Complex::new(re, im);
            z[j] = Complex::new(re, -im);
            paired[i] = true;
            paired[j] = true;
        }
    }
    z
}

/// True iff every eigenvalue has real part below `-HURWITZ_MARGIN`.
pub fn is_hurwitz(a: &Matrix) -> Result<bool> {
    Ok(eig_small(a)?.iter().all(|l| l.re < -HURWITZ_MARGIN))
}

/// Eigenvalues of a symmetric matrix, ascending. Only the upper triangle
/// participates in the rotations; the input is symmetrized first.
pub fn sym_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    let n = a.require_square("sym_eigenvalues")?;
    let mut m = Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let scale = m.norm_fro();
    if scale == 0.0 {
        return Ok(vec![0.0; n]);
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}
