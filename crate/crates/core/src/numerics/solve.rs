use super::matrix::{Matrix, Vector};
use crate::error::{Error, Result};

/// Pivots at or below this magnitude are treated as zero.
pub const PIVOT_TOL: f64 = 1e-13;

/// LU factorization with partial pivoting, `PA = LU`.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Self> {
        let n = a.require_square("lu")?;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .expect("non-empty pivot range");
            if pivot <= PIVOT_TOL * scale || !pivot.is_finite() {
                return Err(Error::Singular { column: k, pivot });
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
            }
            let d = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / d;
                lu[(i, k)] = f;
                for j in k + 1..n {
                    let v = lu[(k, j)];
                    lu[(i, j)] -= f * v;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vector {
        let n = self.perm.len();
        assert_eq!(b.len(), n, "lu solve: rhs dimension");
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] -= self.lu[(i, j)] * x[j];
            }
            x[i] /= self.lu[(i, i)];
        }
        x.into()
    }

    pub fn solve_matrix(&self, b: &Matrix) -> Matrix {
        let cols: Vec<Vector> = (0..b.cols()).map(|j| self.solve(&b.col(j))).collect();
        Matrix::from_fn(b.rows(), b.cols(), |i, j| cols[j][i])
    }

    pub fn determinant(&self) -> f64 {
        let n = self.perm.len();
        let mut det: f64 = (0..n).map(|i| self.lu[(i, i)]).product();
        // parity of the permutation
        let mut seen = vec![false; n];
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut j = start;
            while !seen[j] {
                seen[j] = true;
                j = self.perm[j];
                len += 1;
            }
            if len % 2 == 0 {
                det = -det;
            }
        }
        det
    }
}

/// Solves `A x = b` for square nonsingular `A`.
pub fn solve_linear(a: &Matrix, b: &Vector) -> Result<Vector> {
    if a.rows() != b.dim() {
        return Err(Error::Dimension(format!(
            "solve_linear: {}x{} matrix with rhs of length {}",
            a.rows(),
            a.cols(),
            b.dim()
        )));
    }
    Ok(Lu::factor(a)?.solve(b))
}

pub fn inverse(a: &Matrix) -> Result<Matrix> {
    let n = a.require_square("inverse")?;
    Ok(Lu::factor(a)?.solve_matrix(&Matrix::identity(n)))
}

/// Minimum-norm solution `Aᵀ(AAᵀ)⁻¹ B_rhs` of `A X = B_rhs` for wide,
/// full-row-rank `A`.
pub fn min_norm_solve(a: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    if a.rows() != rhs.rows() {
        return Err(Error::Dimension(format!(
            "min_norm_solve: {} rows vs rhs {} rows",
            a.rows(),
            rhs.rows()
        )));
    }
    let r = rank(a);
    if r < a.rows() {
        return Err(Error::Rank {
            expected: a.rows(),
            found: r,
        });
    }
    let gram = a * &a.transpose();
    let y = Lu::factor(&gram)?.solve_matrix(rhs);
    Ok(&a.transpose() * &y)
}

/// Numerical rank by Gaussian elimination with full pivoting.
pub fn rank(a: &Matrix) -> usize {
    rank_with_tol(a, 1e-10)
}

/// Rank where pivots below `rel_tol * max|a_ij|` count as zero.
pub fn rank_with_tol(a: &Matrix, rel_tol: f64) -> usize {
    let mut m = a.clone();
    let (rows, cols) = (m.rows(), m.cols());
    let scale = m.max_abs();
    if scale == 0.0 {
        return 0;
    }
    let mut r = 0;
    let mut col_used = vec![false; cols];
    for _ in 0..rows.min(cols) {
        let mut best = (0, 0, 0.0);
        for i in r..rows {
            for j in 0..cols {
                if !col_used[j] && m[(i, j)].abs() > best.2 {
                    best = (i, j, m[(i, j)].abs());
                }
            }
        }
        if best.2 <= rel_tol * scale {
            break;
        }
        let (pi, pj, _) = best;
        for j in 0..cols {
            let tmp = m[(r, j)];
            m[(r, j)] = m[(pi, j)];
            m[(pi, j)] = tmp;
        }
        col_used[pj] = true;
        let d = m[(r, pj)];
        for i in r + 1..rows {
            let f = m[(i, pj)] / d;
            for j in 0..cols {
                let v = m[(r, j)];
                m[(i, j)] -= f * v;
            }
        }
        r += 1;
    }
    r
}
