//! Set-point controllers `u = v + Kx` built from redundant input channels,
//! and their behaviour when channels drop out.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multichannel::{LtiSystem, ProjectionPattern};
use crate::numerics::{
    char_poly, check_span, is_hurwitz, min_norm_solve, poly_from_roots, rank, rk4_step,
    solve_linear, step_grid, Complex, Lu, Matrix, OdeTrajectory, Vector,
};

/// Tolerance on `(A+BK)x_g + Bv = 0` and `BÂ = A`.
pub const EQUATION_TOL: f64 = 1e-10;
/// Terminal distance under which a dropout run counts as reaching its goal.
pub const REACHED_TOL: f64 = 1e-3;
/// Finite-difference step for the gain solver's Jacobian.
pub const GAIN_FD_STEP: f64 = 1e-7;
pub const GAIN_MAX_ITER: usize = 100;
pub const GAIN_RESTARTS: usize = 20;

fn require_full_row_rank(sys: &LtiSystem) -> Result<()> {
    let r = rank(&sys.b);
    if r < sys.n() {
        return Err(Error::Rank {
            expected: sys.n(),
            found: r,
        });
    }
    Ok(())
}

/// `R = Bᵀ(BBᵀ)⁻¹A`, the minimum-norm solution of `BR = A`.
pub fn pseudo_drift_r(sys: &LtiSystem) -> Result<Matrix> {
    min_norm_solve(&sys.b, &sys.a)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetConstruction {
    /// Minimum-norm solution of `Bv = −(A+BK)x_g`.
    OffsetEq,
    /// `v = −(R+K)x_g`.
    ParticularR,
    /// `v = −(Â+K)x_g` for a chosen factorization `BÂ = A`.
    HatA,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetVector {
    pub v: Vector,
    pub goal: Vector,
    pub construction: OffsetConstruction,
}

impl OffsetVector {
    /// `‖(A+BK)x_g + Bv‖∞`.
    pub fn residual(&self, sys: &LtiSystem, k: &Matrix) -> f64 {
        let closed = &sys.a + &(&sys.b * k);
        let r = &closed.matvec(&self.goal) + &sys.b.matvec(&self.v);
        r.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

fn check_gain_shape(sys: &LtiSystem, k: &Matrix) -> Result<()> {
    if k.rows() != sys.m() || k.cols() != sys.n() {
        return Err(Error::Dimension(format!(
            "gain is {}x{}, expected {}x{}",
            k.rows(),
            k.cols(),
            sys.m(),
            sys.n()
        )));
    }
    Ok(())
}

fn offset_from(
    m: &Matrix,
    k: &Matrix,
    goal: &Vector,
    construction: OffsetConstruction,
) -> OffsetVector {
    OffsetVector {
        v: -&(m + k).matvec(goal),
        goal: goal.clone(),
        construction,
    }
}

pub fn offset_min_norm(sys: &LtiSystem, k: &Matrix, goal: &Vector) -> Result<OffsetVector> {
    check_gain_shape(sys, k)?;
    let closed = &sys.a + &(&sys.b * k);
    let rhs = Matrix::column(&-&closed.matvec(goal));
    let v = min_norm_solve(&sys.b, &rhs)?.col(0);
    Ok(OffsetVector {
        v,
        goal: goal.clone(),
        construction: OffsetConstruction::OffsetEq,
    })
}

pub fn offset_particular(sys: &LtiSystem, k: &Matrix, goal: &Vector) -> Result<OffsetVector> {
    check_gain_shape(sys, k)?;
    let r = pseudo_drift_r(sys)?;
    Ok(offset_from(&r, k, goal, OffsetConstruction::ParticularR))
}

pub fn offset_from_hat_a(hat_a: &Matrix, k: &Matrix, goal: &Vector) -> Result<OffsetVector> {
    if hat_a.rows() != k.rows() || hat_a.cols() != k.cols() || goal.dim() != k.cols() {
        return Err(Error::Dimension("hat A, K and goal shapes disagree".into()));
    }
    Ok(offset_from(hat_a, k, goal, OffsetConstruction::HatA))
}

/// One solution `Â` of `BÂ = A` with its coordinates in a [`DriftFamily`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftFactorization {
    pub hat_a: Matrix,
    pub params: Vec<f64>,
}

/// All solutions of `BÂ = A`: `R + Σ params_i · basis_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftFamily {
    pub particular: Matrix,
    /// Frobenius-orthonormal basis of `{N : BN = 0}`.
    pub basis: Vec<Matrix>,
    a: Matrix,
    b: Matrix,
}

impl DriftFamily {
    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    pub fn member(&self, params: &[f64]) -> Result<DriftFactorization> {
        if params.len() != self.dimension() {
            return Err(Error::Dimension(format!(
                "family has {} parameters, got {}",
                self.dimension(),
                params.len()
            )));
        }
        let mut hat_a = self.particular.clone();
        for (p, n) in params.iter().zip(&self.basis) {
            hat_a.add_scaled(*p, n);
        }
        Ok(DriftFactorization {
            hat_a,
            params: params.to_vec(),
        })
    }

    /// Coordinates of `hat_a` relative to the particular solution.
    pub fn params_of(&self, hat_a: &Matrix) -> Vec<f64> {
        let d = hat_a - &self.particular;
        self.basis
            .iter()
            .map(|n| {
                d.as_slice()
                    .iter()
                    .zip(n.as_slice())
                    .map(|(x, y)| x * y)
                    .sum()
            })
            .collect()
    }

    /// True when `BÂ = A` to [`EQUATION_TOL`].
    pub fn contains(&self, hat_a: &Matrix) -> bool {
        hat_a.rows() == self.particular.rows()
            && hat_a.cols() == self.particular.cols()
            && (&self.b * hat_a).max_abs_diff(&self.a) < EQUATION_TOL
    }

    /// Wraps `hat_a` with its family coordinates, rejecting non-members.
    pub fn factorization(&self, hat_a: Matrix) -> Result<DriftFactorization> {
        if !self.contains(&hat_a) {
            return Err(Error::Consistency("matrix does not satisfy B·Â = A".into()));
        }
        let params = self.params_of(&hat_a);
        Ok(DriftFactorization { hat_a, params })
    }
}

/// Orthonormal basis of the null space of `b`, via Gram-Schmidt on the
/// columns of the projector `I − Bᵀ(BBᵀ)⁻¹B`.
fn null_space(b: &Matrix) -> Result<Vec<Vector>> {
    let m = b.cols();
    let proj = &Matrix::identity(m) - &min_norm_solve(b, b)?;
    let mut basis: Vec<Vector> = Vec::new();
    for j in 0..m {
        let mut v = proj.col(j);
        for q in &basis {
            v = v.axpy(-v.dot(q), q);
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v.scale(1.0 / norm));
        }
    }
    Ok(basis)
}

pub fn drift_family(sys: &LtiSystem) -> Result<DriftFamily> {
    require_full_row_rank(sys)?;
    if sys.m() <= sys.n() {
        return Err(Error::Parameter(format!(
            "drift family needs more channels than states (m = {}, n = {})",
            sys.m(),
            sys.n()
        )));
    }
    let particular = pseudo_drift_r(sys)?;
    let (m, n) = (sys.m(), sys.n());
    let mut basis = Vec::new();
    for q in null_space(&sys.b)? {
        for col in 0..n {
            basis.push(Matrix::from_fn(
                m,
                n,
                |i, j| if j == col { q[i] } else { 0.0 },
            ));
        }
    }
    if basis.len() != (m - n) * n {
        return Err(Error::Consistency(format!(
            "null space family has dimension {}, expected {}",
            basis.len(),
            (m - n) * n
        )));
    }
    Ok(DriftFamily {
        particular,
        basis,
        a: sys.a.clone(),
        b: sys.b.clone(),
    })
}

/// `PÂ = Â`: every row of `Â` for a masked channel is zero.
pub fn invariance_check(hat_a: &Matrix, pattern: &ProjectionPattern) -> bool {
    pattern.len() == hat_a.rows()
        && (0..hat_a.rows())
            .filter(|&i| !pattern.bits[i])
            .all(|i| hat_a.row(i).iter().all(|x| x.abs() < 1e-12))
}

/// State feedback gain `K` (m×n) making `A + BK` Hurwitz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainMatrix {
    pub k: Matrix,
}

impl GainMatrix {
    pub fn new(sys: &LtiSystem, k: Matrix) -> Result<Self> {
        check_gain_shape(sys, &k)?;
        let closed = &sys.a + &(&sys.b * &k);
        if !is_hurwitz(&closed)? {
            return Err(Error::Consistency("A + BK is not Hurwitz".into()));
        }
        Ok(Self { k })
    }
}

/// `A + B·P·K`.
pub fn closed_loop(sys: &LtiSystem, k: &Matrix, pattern: &ProjectionPattern) -> Result<Matrix> {
    Ok(&sys.a + &(&sys.masked_input(pattern)? * k))
}

fn gain_residual(
    sys: &LtiSystem,
    patterns: &[ProjectionPattern],
    target: &[f64],
    k: &Matrix,
) -> Result<Vector> {
    let mut r = Vec::with_capacity(patterns.len() * sys.n());
    for p in patterns {
        let cp = char_poly(&closed_loop(sys, k, p)?)?;
        r.extend(cp[1..].iter().zip(&target[1..]).map(|(c, t)| c - t));
    }
    Ok(Vector::from(r))
}

fn newton_gains(
    sys: &LtiSystem,
    patterns: &[ProjectionPattern],
    target: &[f64],
    k0: Matrix,
) -> Result<(Matrix, f64)> {
    let (m, n) = (sys.m(), sys.n());
    let unknowns = m * n;
    let mut k = k0;
    let mut r = gain_residual(sys, patterns, target, &k)?;
    let mut norm = r.norm();
    for _ in 0..GAIN_MAX_ITER {
        if norm < 1e-13 {
            break;
        }
        // forward-difference Jacobian, one column per gain entry
        let mut jac = Matrix::zeros(r.dim(), unknowns);
        for u in 0..unknowns {
            let mut kp = k.clone();
            kp[(u / n, u % n)] += GAIN_FD_STEP;
            let rp = gain_residual(sys, patterns, target, &kp)?;
            for i in 0..r.dim() {
                jac[(i, u)] = (rp[i] - r[i]) / GAIN_FD_STEP;
            }
        }
        // Gauss-Newton step from the normal equations
        let jt = jac.transpose();
        let mut normal = &jt * &jac;
        for d in 0..unknowns {
            normal[(d, d)] += 1e-14;
        }
        let step = match Lu::factor(&normal) {
            Ok(lu) => lu.solve(&-&jt.matvec(&r)),
            Err(_) => break,
        };
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let trial = Matrix::from_fn(m, n, |i, j| k[(i, j)] + alpha * step[i * n + j]);
            let rt = gain_residual(sys, patterns, target, &trial)?;
            if rt.norm() < norm {
                k = trial;
                r = rt;
                norm = r.norm();
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((k, norm))
}

/// Finds one gain `K` so that `A + BPK` has characteristic polynomial
/// `∏(s − pole)` for every pattern `P` in `patterns`.
///
/// Damped Gauss-Newton on the stacked coefficient residuals, started from
/// `initial` (or zero) and then from seeded random guesses.
pub fn simultaneous_gains_solve(
    sys: &LtiSystem,
    patterns: &[ProjectionPattern],
    target_poles: &[Complex],
    initial: Option<Matrix>,
) -> Result<GainMatrix> {
    let (m, n) = (sys.m(), sys.n());
    if target_poles.len() != n {
        return Err(Error::Dimension(format!(
            "need {n} target poles, got {}",
            target_poles.len()
        )));
    }
    if target_poles.iter().any(|p| !(p.re < 0.0)) {
        return Err(Error::Parameter(
            "target poles must lie in the open left half plane".into(),
        ));
    }
    if patterns.is_empty() {
        return Err(Error::Parameter("need at least one pattern".into()));
    }
    for p in patterns {
        p.check_len(m)?;
    }
    let target = poly_from_roots(target_poles);
    let first = match initial {
        Some(k) => {
            check_gain_shape(sys, &k)?;
            k
        }
        None => Matrix::zeros(m, n),
    };

    let mut best: Option<(Matrix, f64)> = None;
    for attempt in 0..=GAIN_RESTARTS {
        let start = if attempt == 0 {
            first.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(attempt as u64);
            Matrix::from_fn(m, n, |_, _| rng.random_range(-2.0..2.0))
        };
        let (k, res) = newton_gains(sys, patterns, &target, start)?;
        if best.as_ref().is_none_or(|(_, b)| res < *b) {
            best = Some((k, res));
        }
        if res < 1e-10 {
            break;
        }
    }
    let (k, residual) = best.expect("at least one attempt");
    if !(residual < 1e-10) {
        return Err(Error::NoSolution {
            residual,
            iterations: GAIN_MAX_ITER,
        });
    }
    for p in patterns {
        if !is_hurwitz(&closed_loop(sys, &k, p)?)? {
            return Err(Error::Consistency(format!(
                "solved gains leave {p} unstable"
            )));
        }
    }
    GainMatrix::new(sys, k)
}

/// `u = v + Kx` with the goal as rest point of the full closed loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardPartsController {
    pub gain: GainMatrix,
    pub offset: OffsetVector,
}

impl StandardPartsController {
    pub fn new(sys: &LtiSystem, gain: GainMatrix, offset: OffsetVector) -> Result<Self> {
        check_gain_shape(sys, &gain.k)?;
        if offset.v.dim() != sys.m() || offset.goal.dim() != sys.n() {
            return Err(Error::Dimension(
                "offset shape does not match system".into(),
            ));
        }
        let res = offset.residual(sys, &gain.k);
        if res > EQUATION_TOL {
            return Err(Error::Consistency(format!(
                "offset leaves goal off equilibrium (residual {res:.3e})"
            )));
        }
        Ok(Self { gain, offset })
    }

    pub fn goal(&self) -> &Vector {
        &self.offset.goal
    }

    /// `P(Kx + v)`.
    pub fn control(&self, x: &[f64], pattern: &ProjectionPattern) -> Vector {
        let mut u = &self.gain.k.matvec(x) + &self.offset.v;
        for (ui, on) in u.iter_mut().zip(&pattern.bits) {
            if !on {
                *ui = 0.0;
            }
        }
        u
    }

    /// Rest point `−(A+BPK)⁻¹BPv`, when the patterned loop is invertible.
    pub fn rest_point(
        &self,
        sys: &LtiSystem,
        pattern: &ProjectionPattern,
    ) -> Result<Option<Vector>> {
        let closed = closed_loop(sys, &self.gain.k, pattern)?;
        let forcing = sys.masked_input(pattern)?.matvec(&self.offset.v);
        Ok(solve_linear(&closed, &-&forcing).ok())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum DropoutVerdict {
    Reached,
    Diverted { rest_point: Option<Vector> },
    Unstable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutRun {
    pub trajectory: OdeTrajectory,
    pub controls: Vec<Vector>,
    pub verdict: DropoutVerdict,
    pub terminal_distance: f64,
}

fn patterned_rhs<'a>(
    sys: &'a LtiSystem,
    ctrl: &'a StandardPartsController,
    pattern: &'a ProjectionPattern,
) -> impl FnMut(f64, &Vector) -> Vector + 'a {
    move |_t, x| {
        let u = ctrl.control(x, pattern);
        &sys.a.matvec(x) + &sys.b.matvec(&u)
    }
}

/// Integrates `ẋ = Ax + BP(Kx + v)` and classifies the outcome.
pub fn simulate_dropout(
    ctrl: &StandardPartsController,
    sys: &LtiSystem,
    pattern: &ProjectionPattern,
    x0: &Vector,
    t_end: f64,
    dt: f64,
) -> Result<DropoutRun> {
    check_span(0.0, t_end, dt)?;
    pattern.check_len(sys.m())?;
    if x0.dim() != sys.n() {
        return Err(Error::Dimension(format!("x0 has length {}", x0.dim())));
    }
    let hurwitz = is_hurwitz(&closed_loop(sys, &ctrl.gain.k, pattern)?)?;
    let mut rhs = patterned_rhs(sys, ctrl, pattern);
    let mut traj = OdeTrajectory::new(0.0, x0.clone(), format!("dropout {pattern} dt={dt}"));
    let mut controls = vec![ctrl.control(x0, pattern)];
    let mut x = x0.clone();
    let mut blew_up = false;
    for (t, h) in step_grid(0.0, t_end, dt) {
        let next = rk4_step(&mut rhs, t, &x, h);
        if !next.is_finite() {
            blew_up = true;
            break;
        }
        x = next;
        controls.push(ctrl.control(&x, pattern));
        traj.push(t + h, x.clone());
    }
    let terminal_distance = if blew_up {
        f64::INFINITY
    } else {
        (traj.final_state() - ctrl.goal()).norm()
    };
    let verdict = if !hurwitz || blew_up {
        DropoutVerdict::Unstable
    } else if terminal_distance < REACHED_TOL {
        DropoutVerdict::Reached
    } else {
        DropoutVerdict::Diverted {
            rest_point: ctrl.rest_point(sys, pattern)?,
        }
    };
    Ok(DropoutRun {
        trajectory: traj,
        controls,
        verdict,
        terminal_distance,
    })
}

/// Controllers switched by a Markov chain at fixed dwell boundaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovSwitchPlan {
    pub controllers: Vec<StandardPartsController>,
    /// Row-stochastic; `transition_matrix[i][j]` is the probability of
    /// moving from controller `i` to `j` at a dwell boundary.
    pub transition_matrix: Vec<Vec<f64>>,
    pub dwell_dt: f64,
    pub seed: u64,
    /// Channels available to every controller.
    pub pattern: ProjectionPattern,
    pub initial: usize,
}

impl MarkovSwitchPlan {
    pub fn validate(&self) -> Result<()> {
        let c = self.controllers.len();
        if c == 0 {
            return Err(Error::Parameter("need at least one controller".into()));
        }
        if self.transition_matrix.len() != c || self.transition_matrix.iter().any(|r| r.len() != c)
        {
            return Err(Error::Dimension(format!(
                "transition matrix must be {c}x{c}"
            )));
        }
        for (i, row) in self.transition_matrix.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Parameter(format!(
                    "transition row {i} is not a distribution"
                )));
            }
        }
        if !(self.dwell_dt > 0.0 && self.dwell_dt.is_finite()) {
            return Err(Error::Parameter(format!(
                "dwell_dt must be positive, got {}",
                self.dwell_dt
            )));
        }
        if self.initial >= c {
            return Err(Error::Parameter(format!(
                "initial controller {} out of range",
                self.initial
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovRun {
    pub trajectory: OdeTrajectory,
    /// Controller index active over the step leaving each sample.
    pub active: Vec<usize>,
    pub controls: Vec<Vector>,
    pub min_distance: f64,
    pub min_distance_time: f64,
    pub terminal_distance: f64,
    pub seed: u64,
    pub notes: Vec<String>,
}

pub fn markov_modulate(
    plan: &MarkovSwitchPlan,
    sys: &LtiSystem,
    x0: &Vector,
    t_end: f64,
    dt: f64,
    target: &Vector,
) -> Result<MarkovRun> {
    plan.validate()?;
    check_span(0.0, t_end, dt)?;
    plan.pattern.check_len(sys.m())?;
    if x0.dim() != sys.n() || target.dim() != sys.n() {
        return Err(Error::Dimension(
            "x0 and target must match the state dimension".into(),
        ));
    }
    let per_dwell = ((plan.dwell_dt / dt).round() as usize).max(1);
    let mut notes = Vec::new();
    let dwell_eff = per_dwell as f64 * dt;
    if (dwell_eff - plan.dwell_dt).abs() > 1e-12 * plan.dwell_dt {
        notes.push(format!("dwell {} rounded to {dwell_eff}", plan.dwell_dt));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut current = plan.initial;
    let mut x = x0.clone();
    let mut traj = OdeTrajectory::new(
        0.0,
        x0.clone(),
        format!("markov seed={} dt={dt}", plan.seed),
    );
    let mut active = Vec::new();
    let mut controls = Vec::new();
    let mut min_distance = (x0 - target).norm();
    let mut min_distance_time = 0.0;
    for (i, (t, h)) in step_grid(0.0, t_end, dt).enumerate() {
        if i > 0 && i % per_dwell == 0 {
            let u: f64 = rng.random();
            let row = &plan.transition_matrix[current];
            let mut acc = 0.0;
            current = row
                .iter()
                .position(|p| {
                    acc += p;
                    u < acc
                })
                .unwrap_or(row.len() - 1);
        }
        let ctrl = &plan.controllers[current];
        active.push(current);
        controls.push(ctrl.control(&x, &plan.pattern));
        let next = rk4_step(&mut patterned_rhs(sys, ctrl, &plan.pattern), t, &x, h);
        if !next.is_finite() {
            return Err(Error::Divergence { last_valid_time: t });
        }
        x = next;
        let d = (&x - target).norm();
        if d < min_distance {
            min_distance = d;
            min_distance_time = t + h;
        }
        traj.push(t + h, x.clone());
    }
    active.push(current);
    controls.push(plan.controllers[current].control(&x, &plan.pattern));
    Ok(MarkovRun {
        terminal_distance: (&x - target).norm(),
        trajectory: traj,
        active,
        controls,
        min_distance,
        min_distance_time,
        seed: plan.seed,
        notes,
    })
}

/// [`markov_modulate`] over many seeds in parallel, returned in seed order.
pub fn markov_batch(
    plan: &MarkovSwitchPlan,
    sys: &LtiSystem,
    x0: &Vector,
    seeds: &[u64],
    t_end: f64,
    dt: f64,
    target: &Vector,
) -> Result<Vec<MarkovRun>> {
    seeds
        .par_iter()
        .map(|&s| markov_modulate(&plan.with_seed(s), sys, x0, t_end, dt, target))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys3() -> LtiSystem {
        LtiSystem::planar_channels(3).unwrap()
    }

    fn dropout_gain() -> Matrix {
        Matrix::from_rows(&[[0.0, -1.0], [-1.0, 0.0], [-0.5, -0.5]]).unwrap()
    }

    fn hat_a() -> Matrix {
        Matrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [0.0, 0.0]]).unwrap()
    }

    #[test]
    fn pseudo_drift_fixture() {
        let r = pseudo_drift_r(&sys3()).unwrap();
        let want =
            Matrix::from_rows(&[[0.0, -1.0 / 3.0], [0.0, 2.0 / 3.0], [0.0, 1.0 / 3.0]]).unwrap();
        assert!(r.max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn square_b_gives_inverse() {
        let sys = LtiSystem::planar_channels(2).unwrap();
        let r = pseudo_drift_r(&sys).unwrap();
        let want = &crate::numerics::inverse(&sys.b).unwrap() * &sys.a;
        assert!(r.max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn rank_deficient_b_rejected() {
        let sys = LtiSystem::new(
            Matrix::identity(2),
            Matrix::from_rows(&[[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]).unwrap(),
        )
        .unwrap();
        assert!(matches!(drift_family(&sys), Err(Error::Rank { .. })));
        assert!(matches!(pseudo_drift_r(&sys), Err(Error::Rank { .. })));
    }

    #[test]
    fn family_structure() {
        let fam = drift_family(&sys3()).unwrap();
        assert_eq!(fam.dimension(), 2);
        assert_eq!(fam.member(&[0.0, 0.0]).unwrap().hat_a, fam.particular);
        assert!(fam.contains(&hat_a()));
        let fact = fam.factorization(hat_a()).unwrap();
        let back = fam.member(&fact.params).unwrap();
        assert!(back.hat_a.max_abs_diff(&hat_a()) < 1e-14);
        let wrong = Matrix::from_rows(&[[0.0, 0.0], [0.0, 0.5], [0.0, 0.5]]).unwrap();
        assert!(!fam.contains(&wrong));
        for a in &fam.basis {
            for b in &fam.basis {
                let dot: f64 = a
                    .as_slice()
                    .iter()
                    .zip(b.as_slice())
                    .map(|(x, y)| x * y)
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invariance_examples() {
        let h = hat_a();
        assert!(invariance_check(
            &h,
            &ProjectionPattern::from_bits(&[0, 1, 1])
        ));
        assert!(invariance_check(
            &h,
            &ProjectionPattern::from_bits(&[1, 1, 0])
        ));
        assert!(invariance_check(&h, &ProjectionPattern::full(3)));
        assert!(!invariance_check(
            &h,
            &ProjectionPattern::from_bits(&[1, 0, 1])
        ));
    }

    #[test]
    fn offsets_match_closed_forms() {
        let sys = sys3();
        let k = dropout_gain();
        for phi in [0.0, 0.3, std::f64::consts::FRAC_PI_2, 2.0] {
            let (s, c) = f64::sin_cos(phi);
            let g = Vector::from([c, s]);
            let p = offset_particular(&sys, &k, &g).unwrap();
            let want = Vector::from([4.0 / 3.0 * s, c - 2.0 / 3.0 * s, 0.5 * c + s / 6.0]);
            assert!(p.v.max_abs_diff(&want) < 1e-14);
            assert!(p.residual(&sys, &k) < EQUATION_TOL);
            let h = offset_from_hat_a(&hat_a(), &k, &g).unwrap();
            let want = Vector::from([s, c - s, 0.5 * (c + s)]);
            assert!(h.v.max_abs_diff(&want) < 1e-14);
            assert!(h.residual(&sys, &k) < EQUATION_TOL);
            let mn = offset_min_norm(&sys, &k, &g).unwrap();
            assert!(mn.residual(&sys, &k) < EQUATION_TOL);
        }
    }

    #[test]
    fn gains_recovered() {
        let sys = sys3();
        let pats: Vec<_> = (0..3)
            .map(|j| ProjectionPattern::drop_channel(3, j))
            .collect();
        let poles = [Complex::real(-1.0), Complex::real(-1.0)];
        let g = simultaneous_gains_solve(&sys, &pats, &poles, None).unwrap();
        assert!(g.k.max_abs_diff(&dropout_gain()) < 1e-8, "{}", g.k);
    }

    #[test]
    fn gain_solver_reports_failure() {
        // one channel cannot move x2's pole pair with P[0,1,0]
        let sys = sys3();
        let pats = [ProjectionPattern::from_bits(&[0, 1, 0])];
        let poles = [Complex::real(-1.0), Complex::real(-1.0)];
        assert!(matches!(
            simultaneous_gains_solve(&sys, &pats, &poles, None),
            Err(Error::NoSolution { .. })
        ));
    }

    fn controller(goal: [f64; 2], hat: bool) -> StandardPartsController {
        let sys = sys3();
        let g = Vector::from(goal);
        let off = if hat {
            offset_from_hat_a(&hat_a(), &dropout_gain(), &g).unwrap()
        } else {
            offset_particular(&sys, &dropout_gain(), &g).unwrap()
        };
        StandardPartsController::new(&sys, GainMatrix::new(&sys, dropout_gain()).unwrap(), off)
            .unwrap()
    }

    #[test]
    fn full_availability_reaches_goal() {
        let sys = sys3();
        let ctrl = controller([0.0, 1.0], false);
        let run = simulate_dropout(
            &ctrl,
            &sys,
            &ProjectionPattern::full(3),
            &Vector::zeros(2),
            30.0,
            1e-2,
        )
        .unwrap();
        assert_eq!(run.verdict, DropoutVerdict::Reached);
    }

    #[test]
    fn diverted_rest_point_matches_terminal_state() {
        let sys = sys3();
        let ctrl = controller([0.0, 1.0], true);
        let p = ProjectionPattern::drop_channel(3, 1);
        let run = simulate_dropout(&ctrl, &sys, &p, &Vector::zeros(2), 30.0, 1e-2).unwrap();
        match &run.verdict {
            DropoutVerdict::Diverted {
                rest_point: Some(rp),
            } => {
                assert!(run.trajectory.final_state().max_abs_diff(rp) < 1e-3);
            }
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn single_channel_loop_is_unstable() {
        let sys = sys3();
        let ctrl = controller([1.0, 0.0], false);
        let p = ProjectionPattern::from_bits(&[0, 1, 0]);
        let run = simulate_dropout(&ctrl, &sys, &p, &Vector::zeros(2), 5.0, 1e-2).unwrap();
        assert_eq!(run.verdict, DropoutVerdict::Unstable);
    }

    #[test]
    fn absorbing_chain_settles_on_first_goal() {
        let sys = sys3();
        let plan = MarkovSwitchPlan {
            controllers: vec![controller([1.0, 0.0], false), controller([0.0, 1.0], true)],
            transition_matrix: vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            dwell_dt: 0.05,
            seed: 1,
            pattern: ProjectionPattern::full(3),
            initial: 1,
        };
        let run = markov_modulate(
            &plan,
            &sys,
            &Vector::zeros(2),
            30.0,
            1e-2,
            &Vector::from([1.0, 0.0]),
        )
        .unwrap();
        assert!(run.terminal_distance < 1e-3);
        assert_eq!(run.active[0], 1);
        assert_eq!(*run.active.last().unwrap(), 0);
    }

    #[test]
    fn markov_plan_validation() {
        let mut plan = MarkovSwitchPlan {
            controllers: vec![controller([1.0, 0.0], false)],
            transition_matrix: vec![vec![0.9]],
            dwell_dt: 0.05,
            seed: 0,
            pattern: ProjectionPattern::full(3),
            initial: 0,
        };
        assert!(plan.validate().is_err());
        plan.transition_matrix = vec![vec![1.0]];
        assert!(plan.validate().is_ok());
        plan.dwell_dt = 0.0;
        assert!(plan.validate().is_err());
    }
}
