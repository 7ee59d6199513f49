//! Minimum-energy steering of linear systems with several input channels.
//!
//! Channel availability is a 0/1 mask over the columns of `B`; a masked
//! system is `(A, BP)` with `P = diag(bits)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{
    check_span, mat_exp, quad_simpson, rank_with_tol, rk4_step, solve_linear, step_grid,
    sym_eigenvalues, Matrix, OdeTrajectory, Vector,
};

/// Simpson panels used for quadrature Gramians.
pub const GRAMIAN_PANELS: usize = 512;
/// Relative eigenvalue floor below which a Gramian counts as singular.
pub const SINGULAR_REL_EIG: f64 = 1e-10;
/// Largest Gramian condition number accepted when planning.
pub const MAX_CONDITION: f64 = 1e12;
/// Endpoint tolerance for integrated minimum-energy plans.
pub const ENDPOINT_TOL: f64 = 1e-4;
/// Largest channel count [`enumerate_patterns`] will walk.
pub const MAX_ENUMERATED_CHANNELS: usize = 16;

/// `ẋ = Ax + Bu`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtiSystem {
    pub a: Matrix,
    pub b: Matrix,
}

impl LtiSystem {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        let n = a.require_square("drift matrix")?;
        if n == 0 || b.cols() == 0 {
            return Err(Error::Dimension("system needs n >= 1 and m >= 1".into()));
        }
        if b.rows() != n {
            return Err(Error::Dimension(format!(
                "B has {} rows but A is {n}x{n}",
                b.rows()
            )));
        }
        Ok(Self { a, b })
    }

    /// The planar double integrator driven through one, two or three
    /// channels: `B = [0;1]`, `[[0,1],[1,0]]` or `[[0,1,1],[1,0,1]]`.
    pub fn planar_channels(m: usize) -> Result<Self> {
        let a = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]])?;
        let b = match m {
            1 => Matrix::from_rows(&[[0.0], [1.0]])?,
            2 => Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]])?,
            3 => Matrix::from_rows(&[[0.0, 1.0, 1.0], [1.0, 0.0, 1.0]])?,
            _ => {
                return Err(Error::Parameter(format!(
                    "planar example has 1 to 3 channels, got {m}"
                )))
            }
        };
        Self::new(a, b)
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.b.cols()
    }

    /// `B·P`, the input map with masked channels zeroed.
    pub fn masked_input(&self, pattern: &ProjectionPattern) -> Result<Matrix> {
        pattern.check_len(self.m())?;
        Ok(Matrix::from_fn(self.n(), self.m(), |i, j| {
            if pattern.bits[j] {
                self.b[(i, j)]
            } else {
                0.0
            }
        }))
    }

    /// Appends one input column.
    pub fn augmented(&self, extra_col: &Vector) -> Result<Self> {
        if extra_col.dim() != self.n() {
            return Err(Error::Dimension(format!(
                "extra column has length {}, expected {}",
                extra_col.dim(),
                self.n()
            )));
        }
        Self::new(self.a.clone(), self.b.hstack(&Matrix::column(extra_col))?)
    }
}

/// Steer from `x0` to `x1` over `[0, T]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringTask {
    pub x0: Vector,
    pub x1: Vector,
    pub horizon: f64,
}

impl SteeringTask {
    pub fn new(x0: impl Into<Vector>, x1: impl Into<Vector>, horizon: f64) -> Result<Self> {
        let (x0, x1) = (x0.into(), x1.into());
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Parameter(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if x0.dim() != x1.dim() {
            return Err(Error::Dimension(format!(
                "x0 has length {}, x1 has length {}",
                x0.dim(),
                x1.dim()
            )));
        }
        Ok(Self { x0, x1, horizon })
    }

    fn check(&self, sys: &LtiSystem) -> Result<()> {
        if self.x0.dim() != sys.n() {
            return Err(Error::Dimension(format!(
                "task has dimension {}, system has {}",
                self.x0.dim(),
                sys.n()
            )));
        }
        Ok(())
    }
}

/// Channel availability mask, written `P[1,0,1]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProjectionPattern {
    pub bits: Vec<bool>,
}

impl ProjectionPattern {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn full(m: usize) -> Self {
        Self::new(vec![true; m])
    }

    pub fn empty(m: usize) -> Self {
        Self::new(vec![false; m])
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        Self::new(bits.iter().map(|&b| b != 0).collect())
    }

    /// Pattern whose channel `j` is on when bit `j` of `index` is set.
    pub fn from_index(m: usize, index: u32) -> Self {
        Self::new((0..m).map(|j| index >> j & 1 == 1).collect())
    }

    /// All channels on except `j`.
    pub fn drop_channel(m: usize, j: usize) -> Self {
        Self::new((0..m).map(|i| i != j).collect())
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.len() == other.len() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn matrix(&self) -> Matrix {
        let d: Vec<f64> = self
            .bits
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        Matrix::diag(&d)
    }

    pub(crate) fn check_len(&self, m: usize) -> Result<()> {
        if self.len() == m {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "pattern {self} has {} entries for {m} channels",
                self.len()
            )))
        }
    }
}

impl fmt::Display for ProjectionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bits: Vec<&str> = self
            .bits
            .iter()
            .map(|&b| if b { "1" } else { "0" })
            .collect();
        write!(f, "P[{}]", bits.join(","))
    }
}

impl FromStr for ProjectionPattern {
    type Err = Error;

    /// Accepts `P[1,0,1]`, `[1,0,1]`, `1,0,1` or `101`.
    fn from_str(s: &str) -> Result<Self> {
        let body = s.trim().trim_start_matches(['P', 'p']);
        let body = body.trim_start_matches('[').trim_end_matches(']');
        let bits = body
            .chars()
            .filter(|c| !c.is_whitespace() && *c != ',')
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Parameter(format!("bad pattern {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if bits.is_empty() {
            return Err(Error::Parameter(format!("bad pattern {s:?}")));
        }
        Ok(Self::new(bits))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GramianMethod {
    /// Composite Simpson on the integrand.
    Quadrature,
    /// Exact polynomial integration; requires nilpotent `A`.
    Series,
}

/// `W = ∫₀ᵀ e^{A(T−s)} BPBᵀ e^{A(T−s)ᵀ} ds`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gramian {
    pub w: Matrix,
    pub horizon: f64,
    pub pattern: ProjectionPattern,
}

impl Gramian {
    /// Eigenvalues of `W`, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        sym_eigenvalues(&self.w)
    }

    /// Largest over smallest eigenvalue; infinite when singular.
    pub fn condition_number(&self) -> Result<f64> {
        let ev = self.eigenvalues()?;
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        Ok(if lo <= 0.0 { f64::INFINITY } else { hi / lo })
    }

    /// Smallest eigenvalue exceeds [`SINGULAR_REL_EIG`] times the largest.
    pub fn is_nonsingular(&self) -> Result<bool> {
        let ev = self.eigenvalues()?;
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        Ok(hi > 0.0 && lo > SINGULAR_REL_EIG * hi)
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn matrix_powers(a: &Matrix, count: usize) -> Vec<Matrix> {
    let mut out = vec![Matrix::identity(a.rows())];
    for i in 1..count {
        let next = &out[i - 1] * a;
        out.push(next);
    }
    out
}

pub fn gramian(
    sys: &LtiSystem,
    horizon: f64,
    pattern: &ProjectionPattern,
    method: GramianMethod,
) -> Result<Gramian> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Parameter(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let bp = sys.masked_input(pattern)?;
    let q = &bp * &bp.transpose();
    let w = match method {
        GramianMethod::Quadrature => {
            let at = sys.a.transpose();
            quad_simpson(
                |s| {
                    let e = mat_exp(&sys.a, horizon - s).expect("square drift");
                    let et = mat_exp(&at, horizon - s).expect("square drift");
                    &(&e * &q) * &et
                },
                0.0,
                horizon,
                GRAMIAN_PANELS,
            )?
        }
        GramianMethod::Series => {
            let n = sys.n();
            let pows = matrix_powers(&sys.a, n + 1);
            let scale = sys.a.max_abs().max(1.0).powi(n as i32);
            if pows[n].max_abs() > 1e-12 * scale {
                return Err(Error::NotNilpotent);
            }
            let mut w = Matrix::zeros(n, n);
            for (i, ai) in pows.iter().take(n).enumerate() {
                for (j, aj) in pows.iter().take(n).enumerate() {
                    let p = (i + j + 1) as f64;
                    let c = horizon.powf(p) / (p * factorial(i) * factorial(j));
                    w.add_scaled(c, &(&(ai * &q) * &aj.transpose()));
                }
            }
            w
        }
    };
    // symmetrize away rounding asymmetry
    let w = (&w + &w.transpose()).scale(0.5);
    Ok(Gramian {
        w,
        horizon,
        pattern: pattern.clone(),
    })
}

/// Open-loop minimum-energy control for one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinEnergyPlan {
    /// `W⁻¹z`.
    pub lambda: Vector,
    /// `x₁ − e^{AT}x₀`.
    pub z: Vector,
    /// `zᵀW⁻¹z`, the energy `∫‖u‖² dt` of the optimal input.
    pub cost_eta: f64,
    pub horizon: f64,
    pub pattern: ProjectionPattern,
}

impl MinEnergyPlan {
    /// `u(t) = P Bᵀ e^{Aᵀ(T−t)} λ`.
    pub fn control_at(&self, sys: &LtiSystem, t: f64) -> Result<Vector> {
        let bp = sys.masked_input(&self.pattern)?;
        let e = mat_exp(&sys.a.transpose(), self.horizon - t)?;
        Ok(bp.transpose().matvec(&e.matvec(&self.lambda)))
    }
}

pub fn min_energy_plan(
    sys: &LtiSystem,
    task: &SteeringTask,
    pattern: &ProjectionPattern,
) -> Result<MinEnergyPlan> {
    task.check(sys)?;
    let g = gramian(sys, task.horizon, pattern, GramianMethod::Quadrature)?;
    let cond = g.condition_number()?;
    if !(cond < MAX_CONDITION) {
        return Err(Error::NotControllable {
            pattern: pattern.to_string(),
            detail: format!(
                "gramian condition number {cond:.3e} over horizon {}",
                task.horizon
            ),
        });
    }
    let drift = mat_exp(&sys.a, task.horizon)?.matvec(&task.x0);
    let z = &task.x1 - &drift;
    let lambda = solve_linear(&g.w, &z)?;
    let cost_eta = z.dot(&lambda).max(0.0);
    Ok(MinEnergyPlan {
        lambda,
        z,
        cost_eta,
        horizon: task.horizon,
        pattern: pattern.clone(),
    })
}

/// Integrated minimum-energy plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinEnergyRun {
    /// States `x` only; the running cost is in `running_cost`.
    pub trajectory: OdeTrajectory,
    pub controls: Vec<Vector>,
    pub running_cost: Vec<f64>,
    pub realized_cost: f64,
    pub endpoint_error: f64,
}

/// Integrates `ẋ = Ax + BPu(t)` with the accumulated energy as an extra
/// state, and checks the endpoint and the energy against the plan.
pub fn simulate_min_energy(
    sys: &LtiSystem,
    plan: &MinEnergyPlan,
    task: &SteeringTask,
    dt: f64,
) -> Result<MinEnergyRun> {
    task.check(sys)?;
    check_span(0.0, task.horizon, dt)?;
    let n = sys.n();
    let bp = sys.masked_input(&plan.pattern)?;
    let bpt = bp.transpose();
    let at = sys.a.transpose();
    let control = |t: f64| -> Vector {
        let e = mat_exp(&at, plan.horizon - t).expect("square drift");
        bpt.matvec(&e.matvec(&plan.lambda))
    };
    let mut rhs = |t: f64, s: &Vector| {
        let x = &s[..n];
        let u = control(t);
        let mut d = sys.a.matvec(x);
        let bu = bp.matvec(&u);
        for i in 0..n {
            d[i] += bu[i];
        }
        let mut out = d.into_inner();
        out.push(u.dot(&u));
        Vector::from(out)
    };

    let mut s = Vector::from_fn(n + 1, |i| if i < n { task.x0[i] } else { 0.0 });
    let mut traj = OdeTrajectory::new(
        0.0,
        task.x0.clone(),
        format!("min-energy {} T={} dt={dt}", plan.pattern, plan.horizon),
    );
    let mut controls = vec![control(0.0)];
    let mut running_cost = vec![0.0];
    for (t, h) in step_grid(0.0, task.horizon, dt) {
        s = rk4_step(&mut rhs, t, &s, h);
        if !s.is_finite() {
            return Err(Error::Divergence { last_valid_time: t });
        }
        traj.push(t + h, Vector::from(&s[..n]));
        controls.push(control(t + h));
        running_cost.push(s[n]);
    }
    let endpoint_error = traj.final_state().max_abs_diff(&task.x1);
    let realized_cost = s[n];
    if endpoint_error > ENDPOINT_TOL {
        return Err(Error::Consistency(format!(
            "min-energy endpoint misses target by {endpoint_error:.3e}"
        )));
    }
    let cost_gap = (realized_cost - plan.cost_eta).abs();
    if cost_gap > ENDPOINT_TOL * plan.cost_eta.max(1.0) {
        return Err(Error::Consistency(format!(
            "realized energy {realized_cost} differs from planned {}",
            plan.cost_eta
        )));
    }
    Ok(MinEnergyRun {
        trajectory: traj,
        controls,
        running_cost,
        realized_cost,
        endpoint_error,
    })
}

/// Optimal cost before and after appending `extra_col` to `B`.
pub fn augment_cost_compare(
    sys: &LtiSystem,
    task: &SteeringTask,
    extra_col: &Vector,
) -> Result<(f64, f64)> {
    let before = min_energy_plan(sys, task, &ProjectionPattern::full(sys.m()))?.cost_eta;
    let aug = sys.augmented(extra_col)?;
    let after = min_energy_plan(&aug, task, &ProjectionPattern::full(aug.m()))?.cost_eta;
    Ok((before, after))
}

/// Kalman matrix `[B, AB, …, A^{n−1}B]`.
pub fn controllability_matrix(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.require_square("drift matrix")?;
    let mut out = b.clone();
    let mut block = b.clone();
    for _ in 1..n {
        block = a * &block;
        out = out.hstack(&block)?;
    }
    Ok(out)
}

/// Whether `(A, BP)` is controllable over `[0, T]`, by Gramian
/// nonsingularity checked against the Kalman rank test.
pub fn k_channel_controllable(
    sys: &LtiSystem,
    pattern: &ProjectionPattern,
    horizon: f64,
) -> Result<bool> {
    let g = gramian(sys, horizon, pattern, GramianMethod::Quadrature)?;
    let by_gramian = g.is_nonsingular()?;
    let kalman = controllability_matrix(&sys.a, &sys.masked_input(pattern)?)?;
    let by_rank = kalman.max_abs() > 0.0 && rank_with_tol(&kalman, 1e-10) == sys.n();
    if by_gramian != by_rank {
        return Err(Error::Consistency(format!(
            "pattern {pattern}: gramian says {by_gramian}, kalman rank says {by_rank}"
        )));
    }
    Ok(by_gramian)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternVerdict {
    pub pattern: ProjectionPattern,
    pub controllable: bool,
}

/// Classifies all `2^m` channel patterns, ordered by pattern index (bit
/// `j` of the index is channel `j`).
pub fn enumerate_patterns(sys: &LtiSystem, horizon: f64) -> Result<Vec<PatternVerdict>> {
    let m = sys.m();
    if m > MAX_ENUMERATED_CHANNELS {
        return Err(Error::TooManyChannels { m });
    }
    let verdicts: Vec<PatternVerdict> = (0..1u32 << m)
        .into_par_iter()
        .map(|idx| {
            let pattern = ProjectionPattern::from_index(m, idx);
            k_channel_controllable(sys, &pattern, horizon).map(|controllable| PatternVerdict {
                pattern,
                controllable,
            })
        })
        .collect::<Result<_>>()?;
    for (idx, v) in verdicts.iter().enumerate() {
        if !v.controllable {
            continue;
        }
        for j in 0..m {
            let sup = idx | 1 << j;
            if !verdicts[sup].controllable {
                return Err(Error::Consistency(format!(
                    "{} controllable but its superset {} is not",
                    v.pattern, verdicts[sup].pattern
                )));
            }
        }
    }
    Ok(verdicts)
}

/// Minimum-energy cost from the origin to `(cos φ, sin φ)` for `n_phi`
/// equally spaced `φ ∈ [0, 2π)`, using all channels of a planar system.
pub fn cost_over_circle(sys: &LtiSystem, horizon: f64, n_phi: usize) -> Result<Vec<(f64, f64)>> {
    if sys.n() != 2 {
        return Err(Error::Dimension(format!(
            "cost sweep needs a planar system, got n = {}",
            sys.n()
        )));
    }
    let full = ProjectionPattern::full(sys.m());
    (0..n_phi)
        .map(|i| {
            let phi = std::f64::consts::TAU * i as f64 / n_phi as f64;
            let task = SteeringTask::new([0.0, 0.0], [phi.cos(), phi.sin()], horizon)?;
            Ok((phi, min_energy_plan(sys, &task, &full)?.cost_eta))
        })
        .collect()
}
