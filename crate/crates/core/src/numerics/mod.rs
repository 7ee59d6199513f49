//! Dense linear algebra, matrix functions, ODE integration and quadrature.
//!
//! Everything here is a pure function of its inputs and sized for the
//! 2x2 to 4x4 systems this crate works with.

mod complex;
mod eigen;
mod expm;
mod matrix;
mod ode;
mod quad;
mod solve;

pub use complex::{poly_eval, Complex};
pub use eigen::{
    char_poly, eig_small, is_hurwitz, poly_from_roots, quadratic_roots, sym_eigenvalues,
    HURWITZ_MARGIN,
};
pub use expm::mat_exp;
pub use matrix::{Matrix, Vector};
pub(crate) use ode::check_span;
pub use ode::{integrate_ode, rk4_step, step_grid, OdeTrajectory};
pub use quad::{quad_simpson, Integrand};
pub use solve::{inverse, min_norm_solve, rank, rank_with_tol, solve_linear, Lu, PIVOT_TOL};
