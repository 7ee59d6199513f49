//! Tau-balance steering of the corridor vehicle.
//!
//! The vehicle obeys `(ẋ, ẏ, θ̇) = (v cos θ, v sin θ, u)` and steers with
//! `u = k(τ_ℓ − τ_r)`. Three variants are simulated: continuous feedback,
//! sample-and-hold feedback, and feedback averaged over a noisy array of
//! receptors that drop out at random.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::corridor::{tau_balance_closed_form, CorridorScene, ImageRays, VehicleState};
use crate::error::{Error, Result};
use crate::numerics::{check_span, rk4_step, step_grid, Complex, Matrix, OdeTrajectory, Vector};

/// Tolerance on `|x|` and `|θ − π/2|` for declaring convergence.
pub const CONVERGENCE_TOL: f64 = 1e-3;
/// How long the tolerance band must hold, s.
pub const CONVERGENCE_HOLD: f64 = 5.0;
/// Central-difference step for [`finite_diff_jacobian`].
pub const FD_STEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringGain(f64);

impl SteeringGain {
    pub fn new(k: f64) -> Result<Self> {
        if k > 0.0 && k.is_finite() {
            Ok(Self(k))
        } else {
            Err(Error::Parameter(format!(
                "steering gain must be positive, got {k}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledSchedule {
    pub h: f64,
}

impl SampledSchedule {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h.is_finite() {
            Ok(Self { h })
        } else {
            Err(Error::Parameter(format!(
                "sampling interval must be positive, got {h}"
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureCause {
    WallContact,
    ConeExit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimFailure {
    pub time: f64,
    pub cause: FailureCause,
}

/// Output of a corridor simulation. States are `[x, y, θ]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringRun {
    pub trajectory: OdeTrajectory,
    /// Turn rate active at each recorded sample.
    pub controls: Vec<f64>,
    /// Set when the vehicle hit a wall or left the critical cone; the
    /// trajectory then ends at the last valid sample.
    pub failure: Option<SimFailure>,
    pub notes: Vec<String>,
}

impl SteeringRun {
    pub fn final_pose(&self) -> VehicleState {
        pose(self.trajectory.final_state())
    }

    /// Earliest time after which the pose stays within
    /// [`CONVERGENCE_TOL`] of the center line, provided the band holds for
    /// at least [`CONVERGENCE_HOLD`] seconds before the run ends.
    pub fn convergence_time(&self) -> Option<f64> {
        if self.failure.is_some() {
            return None;
        }
        let within =
            |s: &Vector| s[0].abs() < CONVERGENCE_TOL && (s[2] - FRAC_PI_2).abs() < CONVERGENCE_TOL;
        let tr = &self.trajectory;
        let mut start = None;
        for (t, s) in tr.times.iter().zip(&tr.states).rev() {
            if within(s) {
                start = Some(*t);
            } else {
                break;
            }
        }
        start.filter(|t0| tr.final_time() - t0 >= CONVERGENCE_HOLD)
    }

    pub fn converged(&self) -> bool {
        self.convergence_time().is_some()
    }
}

fn pose(s: &[f64]) -> VehicleState {
    VehicleState::new(s[0], s[1], s[2])
}

fn vehicle_rhs(s: &Vector, speed: f64, u: f64) -> Vector {
    Vector::from([speed * s[2].cos(), speed * s[2].sin(), u])
}

fn check_start(state0: &VehicleState, scene: &CorridorScene) -> Result<()> {
    if !scene.inside_walls(state0.x) {
        return Err(Error::Parameter(format!(
            "start x = {} outside the corridor (R = {})",
            state0.x, scene.half_width
        )));
    }
    if !scene.in_cone(state0.theta) {
        return Err(Error::NoIntersection {
            theta: state0.theta,
        });
    }
    Ok(())
}

fn check_pose(s: &Vector, scene: &CorridorScene) -> Option<FailureCause> {
    if !scene.inside_walls(s[0]) {
        Some(FailureCause::WallContact)
    } else if !scene.in_cone(s[2]) {
        Some(FailureCause::ConeExit)
    } else {
        None
    }
}

fn start_vector(state0: &VehicleState) -> Vector {
    Vector::from([state0.x, state0.y, state0.theta])
}

/// Continuous two-receptor tau-balance steering.
pub fn simulate_two_pixel(
    state0: &VehicleState,
    scene: &CorridorScene,
    k: SteeringGain,
    t_end: f64,
    dt: f64,
) -> Result<SteeringRun> {
    check_span(0.0, t_end, dt)?;
    check_start(state0, scene)?;
    let k = k.value();
    let control = |s: &Vector| tau_balance_closed_form(&pose(s), scene, k);

    let x0 = start_vector(state0);
    let mut traj = OdeTrajectory::new(0.0, x0.clone(), format!("two-pixel k={k} dt={dt}"));
    let mut controls = vec![control(&x0)?];
    let mut x = x0;
    let mut failure = None;
    for (t, h) in step_grid(0.0, t_end, dt) {
        let mut stage_err = false;
        let mut rhs = |_t: f64, s: &Vector| match control(s) {
            Ok(u) => vehicle_rhs(s, scene.speed, u),
            Err(_) => {
                stage_err = true;
                vehicle_rhs(s, scene.speed, 0.0)
            }
        };
        let next = rk4_step(&mut rhs, t, &x, h);
        if !next.is_finite() {
            return Err(Error::Divergence { last_valid_time: t });
        }
        if let Some(cause) = check_pose(&next, scene) {
            failure = Some(SimFailure { time: t + h, cause });
            break;
        }
        if stage_err {
            failure = Some(SimFailure {
                time: t + h,
                cause: FailureCause::ConeExit,
            });
            break;
        }
        x = next;
        controls.push(control(&x)?);
        traj.push(t + h, x.clone());
    }
    Ok(SteeringRun {
        trajectory: traj,
        controls,
        failure,
        notes: Vec::new(),
    })
}

/// Sample-and-hold tau-balance steering with sampling interval `h`.
///
/// `h` is rounded to the nearest positive multiple of `dt`; any change is
/// recorded in the run notes.
pub fn simulate_sampled(
    state0: &VehicleState,
    scene: &CorridorScene,
    k: SteeringGain,
    schedule: SampledSchedule,
    t_end: f64,
    dt: f64,
) -> Result<SteeringRun> {
    check_span(0.0, t_end, dt)?;
    check_start(state0, scene)?;
    if dt > schedule.h * (1.0 + 1e-9) {
        return Err(Error::Parameter(format!(
            "dt = {dt} exceeds sampling interval h = {}",
            schedule.h
        )));
    }
    let k = k.value();
    let per_sample = ((schedule.h / dt).round() as usize).max(1);
    let h_eff = per_sample as f64 * dt;
    let mut notes = Vec::new();
    if (h_eff - schedule.h).abs() > 1e-12 * schedule.h {
        notes.push(format!(
            "sampling interval {} rounded to {} ({} steps of {})",
            schedule.h, h_eff, per_sample, dt
        ));
    }

    let x0 = start_vector(state0);
    let mut held = tau_balance_closed_form(state0, scene, k)?;
    let mut traj = OdeTrajectory::new(0.0, x0.clone(), format!("sampled k={k} h={h_eff} dt={dt}"));
    let mut controls = vec![held];
    let mut x = x0;
    let mut failure = None;
    for (i, (t, h)) in step_grid(0.0, t_end, dt).enumerate() {
        if i % per_sample == 0 {
            held = tau_balance_closed_form(&pose(&x), scene, k)?;
            if let Some(c) = controls.last_mut() {
                *c = held;
            }
        }
        let u = held;
        let next = rk4_step(
            &mut |_t, s: &Vector| vehicle_rhs(s, scene.speed, u),
            t,
            &x,
            h,
        );
        if !next.is_finite() {
            return Err(Error::Divergence { last_valid_time: t });
        }
        if let Some(cause) = check_pose(&next, scene) {
            failure = Some(SimFailure { time: t + h, cause });
            break;
        }
        x = next;
        controls.push(held);
        traj.push(t + h, x.clone());
    }
    Ok(SteeringRun {
        trajectory: traj,
        controls,
        failure,
        notes,
    })
}

/// Linearization of the reduced `(x, θ)` dynamics about the center line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearizationReport {
    pub jacobian: Matrix,
    /// Closed-form eigenvalues, ordered `(−, +)` on the square-root branch.
    pub eigenvalues: [Complex; 2],
    /// Gain at which the eigenvalues turn from complex to real.
    pub k_crit: f64,
}

/// Gain separating oscillatory (below) from overdamped (above) approach.
pub fn critical_gain(scene: &CorridorScene) -> f64 {
    let (f, r, v) = (scene.focal_length, scene.half_width, scene.speed);
    2.0 * v * v / (f.powi(3) * (1.0 + r).powi(2))
}

/// Analytic Jacobian and eigenvalues at `(x, θ) = (0, π/2)`.
///
/// At unit speed the Jacobian is `[[0, −1], [2fk, −2kf²(1+R)]]` with
/// eigenvalues `−f²k(1+R) ± √(fk[f³k(1+R)² − 2])`.
pub fn linearize_reduced(scene: &CorridorScene, k: SteeringGain) -> LinearizationReport {
    let (f, r, v) = (scene.focal_length, scene.half_width, scene.speed);
    let k = k.value();
    let damping = k * f * f * (1.0 + r) / v;
    let jacobian =
        Matrix::from_rows(&[[0.0, -v], [2.0 * f * k / v, -2.0 * damping]]).expect("2x2 literal");
    let disc = damping * damping - 2.0 * f * k;
    let eigenvalues = if disc >= 0.0 {
        let s = disc.sqrt();
        [Complex::real(-damping - s), Complex::real(-damping + s)]
    } else {
        let s = (-disc).sqrt();
        [Complex::new(-damping, -s), Complex::new(-damping, s)]
    };
    LinearizationReport {
        jacobian,
        eigenvalues,
        k_crit: critical_gain(scene),
    }
}

/// Vector field of the reduced system `(ẋ, θ̇) = (v cos θ, k[τ_ℓ − τ_r])`.
pub fn reduced_field(
    scene: &CorridorScene,
    k: SteeringGain,
    x: f64,
    theta: f64,
) -> Result<[f64; 2]> {
    let u = tau_balance_closed_form(&VehicleState::new(x, 0.0, theta), scene, k.value())?;
    Ok([scene.speed * theta.cos(), u])
}

/// Central-difference Jacobian of [`reduced_field`] at `(x, θ)`.
pub fn finite_diff_jacobian(
    scene: &CorridorScene,
    k: SteeringGain,
    at: (f64, f64),
) -> Result<Matrix> {
    let (x, th) = at;
    let e = FD_STEP;
    let dx_p = reduced_field(scene, k, x + e, th)?;
    let dx_m = reduced_field(scene, k, x - e, th)?;
    let dt_p = reduced_field(scene, k, x, th + e)?;
    let dt_m = reduced_field(scene, k, x, th - e)?;
    Matrix::from_rows(&[
        [
            (dx_p[0] - dx_m[0]) / (2.0 * e),
            (dt_p[0] - dt_m[0]) / (2.0 * e),
        ],
        [
            (dx_p[1] - dx_m[1]) / (2.0 * e),
            (dt_p[1] - dt_m[1]) / (2.0 * e),
        ],
    ])
}

fn g_domain(phi: f64, x: f64, scene: &CorridorScene) -> Result<()> {
    let phi_max = FRAC_PI_2 - scene.critical_angle();
    if !(phi.abs() < phi_max) {
        return Err(Error::Domain(format!(
            "|phi| = {} not below {phi_max}",
            phi.abs()
        )));
    }
    if !scene.inside_walls(x) {
        return Err(Error::Domain(format!(
            "|x| = {} not below R = {}",
            x.abs(),
            scene.half_width
        )));
    }
    Ok(())
}

/// One hold interval of sampled steering in the heading deviation
/// `φ = θ − π/2`, with lateral position `x` frozen at its sample value:
/// `g(φ) = φ + (2fkh/v)·(f sin φ (R + cos φ) − x cos φ)/(f² sin²φ − cos²φ)`.
pub fn iterate_map_g(
    phi: f64,
    x: f64,
    scene: &CorridorScene,
    k: SteeringGain,
    h: f64,
) -> Result<f64> {
    g_domain(phi, x, scene)?;
    let (f, r, v) = (scene.focal_length, scene.half_width, scene.speed);
    let (s, c) = phi.sin_cos();
    let gain = 2.0 * f * k.value() * h / v;
    Ok(phi + gain * (f * s * (r + c) - x * c) / (f * f * s * s - c * c))
}

/// Derivative of [`iterate_map_g`] in `φ`. At `φ = x = 0` it equals
/// `1 − 2f²kh(1+R)/v`.
pub fn iterate_map_g_prime(
    phi: f64,
    x: f64,
    scene: &CorridorScene,
    k: SteeringGain,
    h: f64,
) -> Result<f64> {
    g_domain(phi, x, scene)?;
    let (f, r, v) = (scene.focal_length, scene.half_width, scene.speed);
    let (s, c) = phi.sin_cos();
    let gain = 2.0 * f * k.value() * h / v;
    let num = f * s * (r + c) - x * c;
    let num_d = f * c * (r + c) - f * s * s + x * s;
    let den = f * f * s * s - c * c;
    let den_d = 2.0 * (f * f + 1.0) * s * c;
    Ok(1.0 + gain * (num_d * den - num * den_d) / (den * den))
}

/// Largest `|g′|` over a uniform `n × n` grid on
/// `[−phi_max, phi_max] × [−x_max, x_max]`.
pub fn sup_abs_g_prime(
    scene: &CorridorScene,
    k: SteeringGain,
    h: f64,
    phi_max: f64,
    x_max: f64,
    n: usize,
) -> Result<f64> {
    let n = n.max(2);
    let mut sup: f64 = 0.0;
    for i in 0..n {
        let phi = -phi_max + 2.0 * phi_max * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let x = -x_max + 2.0 * x_max * j as f64 / (n - 1) as f64;
            sup = sup.max(iterate_map_g_prime(phi, x, scene, k, h)?.abs());
        }
    }
    Ok(sup)
}

/// Iterates `g` from `phi0` with `x` frozen; stops early on leaving the
/// domain, returning the orbit so far.
pub fn iterate_orbit(
    phi0: f64,
    x: f64,
    scene: &CorridorScene,
    k: SteeringGain,
    h: f64,
    n_iter: usize,
) -> Vec<f64> {
    let mut orbit = vec![phi0];
    let mut phi = phi0;
    for _ in 0..n_iter {
        match iterate_map_g(phi, x, scene, k, h) {
            Ok(next) if next.is_finite() => {
                phi = next;
                orbit.push(phi);
            }
            _ => break,
        }
    }
    orbit
}

/// Photoreceptor array model: `n_per_side` receptors per wall, each
/// registering a feature near image coordinate `±1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReceptorArray {
    pub n_per_side: usize,
    /// Per-step probability that a receptor reports nothing.
    pub dropout_prob: f64,
    /// Standard deviation of additive noise on each reported τ, s.
    pub tau_noise_sigma: f64,
    /// Half-width of the uniform jitter around `±1` in image coordinates.
    pub jitter: f64,
    pub seed: u64,
}

impl ReceptorArray {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_side == 0 {
            return Err(Error::Parameter("n_per_side must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::Parameter(format!(
                "dropout_prob must lie in [0, 1), got {}",
                self.dropout_prob
            )));
        }
        if !(self.tau_noise_sigma >= 0.0) || !self.tau_noise_sigma.is_finite() {
            return Err(Error::Parameter("tau_noise_sigma must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::Parameter(format!(
                "jitter must lie in [0, 1), got {}",
                self.jitter
            )));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// One frame of receptor readings: image positions, liveness, and noise.
struct Frame {
    left: Vec<(f64, f64)>,
    right: Vec<(f64, f64)>,
}

impl Frame {
    fn draw(array: &ReceptorArray, rng: &mut ChaCha8Rng) -> Self {
        let mut side = |sign: f64| {
            let mut out = Vec::with_capacity(array.n_per_side);
            for _ in 0..array.n_per_side {
                let d = sign * (1.0 + array.jitter * rng.random_range(-1.0..=1.0));
                let alive = rng.random::<f64>() >= array.dropout_prob;
                let z: f64 = rng.sample(StandardNormal);
                let eps = array.tau_noise_sigma * z;
                if alive {
                    out.push((d, eps));
                }
            }
            out
        };
        let left = side(-1.0);
        let right = side(1.0);
        Self { left, right }
    }

    /// `k(mean τ_left − mean τ_right)` over surviving receptors whose gaze
    /// reaches a wall, or `None` when a side has no such receptor.
    fn control(&self, s: &VehicleState, scene: &CorridorScene, k: f64) -> Option<f64> {
        let rays = ImageRays::new(s, scene);
        let mean = |readings: &[(f64, f64)]| {
            let (sum, n) = readings
                .iter()
                .filter_map(|&(d, eps)| rays.tau(d).map(|t| t + eps))
                .fold((0.0, 0usize), |(a, n), t| (a + t, n + 1));
            (n > 0).then(|| sum / n as f64)
        };
        Some(k * (mean(&self.left)? - mean(&self.right)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyRun {
    pub run: SteeringRun,
    pub seed: u64,
    /// Fraction of steps that began with a side lacking any reading.
    pub starved_fraction: f64,
}

/// Tau-balance steering from a noisy, intermittently failing receptor array.
///
/// A fresh frame is drawn each integration step; every RK4 stage within
/// the step evaluates the same frame at its own pose. When a side is
/// starved the previous command is held.
pub fn simulate_noisy_array(
    state0: &VehicleState,
    scene: &CorridorScene,
    k: SteeringGain,
    array: &ReceptorArray,
    t_end: f64,
    dt: f64,
) -> Result<NoisyRun> {
    check_span(0.0, t_end, dt)?;
    check_start(state0, scene)?;
    array.validate()?;
    let k = k.value();
    let mut rng = ChaCha8Rng::seed_from_u64(array.seed);

    let x0 = start_vector(state0);
    let mut traj = OdeTrajectory::new(
        0.0,
        x0.clone(),
        format!(
            "noisy-array k={k} dt={dt} n={} p={} sigma={} jitter={} seed={}",
            array.n_per_side, array.dropout_prob, array.tau_noise_sigma, array.jitter, array.seed
        ),
    );
    let mut held = 0.0;
    let mut controls = Vec::new();
    let mut x = x0;
    let mut failure = None;
    let mut steps = 0usize;
    let mut starved = 0usize;
    for (t, h) in step_grid(0.0, t_end, dt) {
        let frame = Frame::draw(array, &mut rng);
        steps += 1;
        match frame.control(&pose(&x), scene, k) {
            Some(u) => held = u,
            None => starved += 1,
        }
        controls.push(held);
        let hold = held;
        let mut rhs = |_t: f64, s: &Vector| {
            let u = frame.control(&pose(s), scene, k).unwrap_or(hold);
            vehicle_rhs(s, scene.speed, u)
        };
        let next = rk4_step(&mut rhs, t, &x, h);
        if !next.is_finite() {
            return Err(Error::Divergence { last_valid_time: t });
        }
        if let Some(cause) = check_pose(&next, scene) {
            failure = Some(SimFailure { time: t + h, cause });
            break;
        }
        x = next;
        traj.push(t + h, x.clone());
    }
    controls.push(held);
    controls.truncate(traj.len());
    Ok(NoisyRun {
        run: SteeringRun {
            trajectory: traj,
            controls,
            failure,
            notes: Vec::new(),
        },
        seed: array.seed,
        starved_fraction: starved as f64 / steps.max(1) as f64,
    })
}

/// Runs [`simulate_noisy_array`] for each seed in parallel; results are
/// returned in seed order.
pub fn simulate_noisy_batch(
    state0: &VehicleState,
    scene: &CorridorScene,
    k: SteeringGain,
    array: &ReceptorArray,
    seeds: &[u64],
    t_end: f64,
    dt: f64,
) -> Result<Vec<NoisyRun>> {
    seeds
        .par_iter()
        .map(|&seed| simulate_noisy_array(state0, scene, k, &array.with_seed(seed), t_end, dt))
        .collect()
}

/// Terminal `|x|`, counting a failed run as infinitely far off.
pub fn terminal_abs_x(run: &SteeringRun) -> f64 {
    if run.failure.is_some() {
        f64::INFINITY
    } else {
        run.trajectory.final_state()[0].abs()
    }
}
