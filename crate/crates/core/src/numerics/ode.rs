//! Fixed-step classical Runge-Kutta integration.
//!
//! The step is `dt` everywhere except the last one, which is shortened so
//! the trajectory lands exactly on `t1`.

use serde::{Deserialize, Serialize};

use super::matrix::Vector;
use crate::error::{Error, Result};

/// Sampled solution of an initial value problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    /// Free-form description of the inputs that produced the trajectory.
    pub meta: String,
}

impl OdeTrajectory {
    pub fn new(t0: f64, x0: Vector, meta: impl Into<String>) -> Self {
        Self {
            times: vec![t0],
            states: vec![x0],
            meta: meta.into(),
        }
    }

    pub fn push(&mut self, t: f64, x: Vector) {
        debug_assert!(t > *self.times.last().unwrap_or(&f64::NEG_INFINITY));
        self.times.push(t);
        self.states.push(x);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &Vector {
        self.states
            .last()
            .expect("trajectory has at least one sample")
    }

    pub fn final_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("trajectory has at least one sample")
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vector::dim)
    }
}

/// One RK4 step of `x' = f(t, x)`.
pub fn rk4_step<F>(f: &mut F, t: f64, x: &Vector, h: f64) -> Vector
where
    F: FnMut(f64, &Vector) -> Vector,
{
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &x.axpy(0.5 * h, &k1));
    let k3 = f(t + 0.5 * h, &x.axpy(0.5 * h, &k2));
    let k4 = f(t + h, &x.axpy(h, &k3));
    Vector::from_fn(x.dim(), |i| {
        x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    })
}

/// Number of steps and the grid used between `t0` and `t1`.
pub fn step_grid(t0: f64, t1: f64, dt: f64) -> impl Iterator<Item = (f64, f64)> {
    let n = ((t1 - t0) / dt - 1e-9).ceil().max(1.0) as usize;
    (0..n).map(move |i| {
        let a = t0 + i as f64 * dt;
        let b = if i + 1 == n {
            t1
        } else {
            t0 + (i + 1) as f64 * dt
        };
        (a, b - a)
    })
}

pub(crate) fn check_span(t0: f64, t1: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
    }
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::Parameter(format!("need t1 > t0, got [{t0}, {t1}]")));
    }
    Ok(())
}

/// Integrates `x' = f(t, x)` from `t0` to `t1`, recording every step.
pub fn integrate_ode<F>(mut f: F, x0: &Vector, t0: f64, t1: f64, dt: f64) -> Result<OdeTrajectory>
where
    F: FnMut(f64, &Vector) -> Vector,
{
    check_span(t0, t1, dt)?;
    if !x0.is_finite() {
        return Err(Error::Divergence {
            last_valid_time: t0,
        });
    }
    let mut traj = OdeTrajectory::new(t0, x0.clone(), format!("rk4 dt={dt}"));
    let mut x = x0.clone();
    for (t, h) in step_grid(t0, t1, dt) {
        let next = rk4_step(&mut f, t, &x, h);
        if !next.is_finite() {
            return Err(Error::Divergence { last_valid_time: t });
        }
        x = next;
        traj.push(t + h, x.clone());
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{mat_exp, Matrix};

    #[test]
    fn zero_field_is_constant() {
        let x0 = Vector::from([1.0, 2.0]);
        let tr = integrate_ode(|_, x| Vector::zeros(x.dim()), &x0, 0.0, 3.0, 0.1).unwrap();
        assert!(tr.states.iter().all(|s| *s == x0));
        assert_eq!(tr.final_time(), 3.0);
    }

    #[test]
    fn scalar_decay() {
        let tr = integrate_ode(|_, x| x.scale(-1.0), &Vector::from([1.0]), 0.0, 1.0, 1e-3).unwrap();
        assert!((tr.final_state()[0] - (-1f64).exp()).abs() < 1e-9);
        assert_eq!(tr.len(), 1001);
    }

    #[test]
    fn double_integrator_matches_exponential() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        let x0 = Vector::from([0.0, 1.0]);
        let tr = integrate_ode(|_, x| a.matvec(x), &x0, 0.0, 1.0, 1e-3).unwrap();
        let want = mat_exp(&a, 1.0).unwrap().matvec(&x0);
        assert!(tr.final_state().max_abs_diff(&want) < 1e-12);
        assert!(tr.final_state().max_abs_diff(&Vector::from([1.0, 1.0])) < 1e-12);
    }

    #[test]
    fn final_step_is_shortened() {
        let tr = integrate_ode(|_, x| x.clone(), &Vector::from([1.0]), 0.0, 1.05, 0.1).unwrap();
        assert_eq!(tr.len(), 12);
        assert_eq!(tr.final_time(), 1.05);
        let steps: Vec<f64> = tr.times.windows(2).map(|w| w[1] - w[0]).collect();
        assert!((steps.last().unwrap() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |dt: f64| {
            let tr = integrate_ode(
                |t, _| Vector::from([t.cos()]),
                &Vector::from([0.0]),
                0.0,
                2.0,
                dt,
            )
            .unwrap();
            (tr.final_state()[0] - 2f64.sin()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
    }

    #[test]
    fn blow_up_is_reported() {
        let err = integrate_ode(
            |_, x| Vector::from([x[0] * x[0]]),
            &Vector::from([1.0]),
            0.0,
            2.0,
            0.01,
        )
        .unwrap_err();
        match err {
            Error::Divergence { last_valid_time } => assert!(last_valid_time > 0.9),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn bad_span_rejected() {
        assert!(integrate_ode(|_, x| x.clone(), &Vector::from([1.0]), 1.0, 0.0, 0.1).is_err());
        assert!(integrate_ode(|_, x| x.clone(), &Vector::from([1.0]), 0.0, 1.0, 0.0).is_err());
    }
}
