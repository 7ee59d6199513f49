//! Geometry of a pinhole camera vehicle between two parallel walls.
//!
//! World frame: walls at `x = ±R`, corridor axis along `y`. Heading `θ` is
//! measured from the world `x` axis, so `θ = π/2` is parallel to the walls.
//! The one-dimensional image plane is the body `y` axis and the pinhole sits
//! at body coordinate `(f, 0)`. An image point at body `(0, d)` looks
//! through the pinhole, so `d > 0` registers a feature on the right wall
//! (`x = +R`) and `d < 0` one on the left wall.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold on `|f² cos²θ − sin²θ|` below which a heading is critical.
pub const CRITICAL_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl VehicleState {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    /// Pose aligned with the corridor at lateral offset `x`.
    pub fn aligned(x: f64) -> Self {
        Self::new(x, 0.0, std::f64::consts::FRAC_PI_2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorridorScene {
    /// Half the corridor width, m.
    pub half_width: f64,
    /// Pinhole focal length; `tan φ = f` sets the critical heading `φ`.
    pub focal_length: f64,
    /// Forward speed, m/s.
    pub speed: f64,
}

impl CorridorScene {
    pub fn new(half_width: f64, focal_length: f64, speed: f64) -> Result<Self> {
        for (name, v) in [
            ("half_width", half_width),
            ("focal_length", focal_length),
            ("speed", speed),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(Self {
            half_width,
            focal_length,
            speed,
        })
    }

    /// Critical heading angle `φ = atan f`.
    pub fn critical_angle(&self) -> f64 {
        self.focal_length.atan()
    }

    /// `f² cos²θ − sin²θ`; negative strictly inside the critical cone.
    pub fn cone_denominator(&self, theta: f64) -> f64 {
        let f = self.focal_length;
        let c = theta.cos();
        let s = theta.sin();
        f * f * c * c - s * s
    }

    /// True when `φ < θ < π − φ` (modulo 2π).
    pub fn in_cone(&self, theta: f64) -> bool {
        theta.sin() > 0.0 && self.cone_denominator(theta) < -CRITICAL_EPS
    }

    pub fn inside_walls(&self, x: f64) -> bool {
        x.abs() < self.half_width
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturePoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WallSide {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauPair {
    pub left: f64,
    pub right: f64,
}

impl TauPair {
    pub fn difference(&self) -> f64 {
        self.left - self.right
    }
}

/// Time to transit a world feature at constant speed.
pub fn tau_of_feature(state: &VehicleState, scene: &CorridorScene, feat: &FeaturePoint) -> f64 {
    let (s, c) = state.theta.sin_cos();
    (c * (feat.x - state.x) + s * (feat.y - state.y)) / scene.speed
}

/// Time to transit from an image track: position over its rate.
pub fn tau_from_image_track(d_i: f64, d_i_dot: f64) -> Result<f64> {
    if d_i_dot.abs() <= 1e-12 {
        return Err(Error::UndefinedTau);
    }
    Ok(d_i / d_i_dot)
}

fn require_cone(state: &VehicleState, scene: &CorridorScene) -> Result<()> {
    if scene.in_cone(state.theta) {
        Ok(())
    } else {
        Err(Error::NoIntersection { theta: state.theta })
    }
}

/// World location of the wall point seen by the receptor at image `∓1`.
pub fn wall_feature_world(
    state: &VehicleState,
    scene: &CorridorScene,
    side: WallSide,
) -> Result<FeaturePoint> {
    require_cone(state, scene)?;
    let (r, f, x) = (scene.half_width, scene.focal_length, state.x);
    let (s, c) = state.theta.sin_cos();
    Ok(match side {
        WallSide::Left => FeaturePoint {
            x: -r,
            y: state.y + f * s + (r + x + f * c) * (c + f * s) / (s - f * c),
        },
        WallSide::Right => FeaturePoint {
            x: r,
            y: state.y + f * s + (r - x - f * c) * (f * s - c) / (f * c + s),
        },
    })
}

/// Receptor rays from one pose, with the heading's sine and cosine cached
/// for evaluating many image coordinates.
#[derive(Clone, Copy, Debug)]
pub struct ImageRays<'a> {
    state: &'a VehicleState,
    scene: &'a CorridorScene,
    s: f64,
    c: f64,
}

impl<'a> ImageRays<'a> {
    pub fn new(state: &'a VehicleState, scene: &'a CorridorScene) -> Self {
        let (s, c) = state.theta.sin_cos();
        Self { state, scene, s, c }
    }

    /// Wall point registered at image coordinate `d`, or `None` when the
    /// ray through the pinhole does not reach the wall on the side
    /// selected by the sign of `d`.
    pub fn feature(&self, d: f64) -> Option<FeaturePoint> {
        let (s, c, f) = (self.s, self.c, self.scene.focal_length);
        let dir_x = f * c + d * s;
        if d == 0.0 || dir_x.abs() <= CRITICAL_EPS || dir_x.signum() != d.signum() {
            return None;
        }
        let wall = self.scene.half_width.copysign(d);
        let reach = (wall - self.state.x - f * c) / dir_x;
        (reach > 0.0).then_some(FeaturePoint {
            x: wall,
            y: self.state.y + f * s + reach * (f * s - d * c),
        })
    }

    pub fn tau(&self, d: f64) -> Option<f64> {
        let p = self.feature(d)?;
        Some((self.c * (p.x - self.state.x) + self.s * (p.y - self.state.y)) / self.scene.speed)
    }
}

/// Wall point registered at an arbitrary image coordinate `d`.
///
/// Fails when the ray through the pinhole does not reach the wall on the
/// side selected by the sign of `d`.
pub fn wall_feature_at_image(
    state: &VehicleState,
    scene: &CorridorScene,
    d: f64,
) -> Result<FeaturePoint> {
    ImageRays::new(state, scene)
        .feature(d)
        .ok_or(Error::NoIntersection { theta: state.theta })
}

/// Time to transit the wall point registered at image coordinate `d`.
pub fn tau_at_image(state: &VehicleState, scene: &CorridorScene, d: f64) -> Result<f64> {
    let feat = wall_feature_at_image(state, scene, d)?;
    Ok(tau_of_feature(state, scene, &feat))
}

/// Closed-form transit times of the two receptors at image `±1`.
pub fn tau_pair_exact(state: &VehicleState, scene: &CorridorScene) -> Result<TauPair> {
    require_cone(state, scene)?;
    let (r, f, x) = (scene.half_width, scene.focal_length, state.x);
    let (s, c) = state.theta.sin_cos();
    let right = c * (r - x) + s * (f * s + (f * s - c) * (-f * c + r - x) / (f * c + s));
    let left = c * (-r - x) + s * (f * s + (f * s + c) * (f * c + r + x) / (s - f * c));
    Ok(TauPair {
        left: left / scene.speed,
        right: right / scene.speed,
    })
}

/// Steering command `k(τ_ℓ − τ_r)` in reduced rational form.
pub fn tau_balance_closed_form(state: &VehicleState, scene: &CorridorScene, k: f64) -> Result<f64> {
    let den = scene.cone_denominator(state.theta);
    if den.abs() < CRITICAL_EPS {
        return Err(Error::CriticalHeading {
            theta: state.theta,
            denominator: den,
        });
    }
    let (r, f, x) = (scene.half_width, scene.focal_length, state.x);
    let (s, c) = state.theta.sin_cos();
    Ok(-2.0 * f * k * (f * c * (s + r) + x * s) / den / scene.speed)
}
