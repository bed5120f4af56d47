//! Sensitivity sets `K(v)`: the velocity-dependent regions an agent reacts to.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Bounded Lipschitz radius map: linear ramp `base -> base + gain` over
/// speeds `[0, knee]`, constant beyond.
///
/// The kink at `knee` keeps the map genuinely Lipschitz (not smooth), which
/// is exactly the regularity the velocity-smoothing estimates are stated for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusProfile {
    pub base: f64,
    pub gain: f64,
    #[serde(default = "default_knee")]
    pub knee: f64,
}

fn default_knee() -> f64 {
    1.0
}

impl RadiusProfile {
    pub fn radius(&self, speed: f64) -> f64 {
        self.base + self.gain * (speed / self.knee).min(1.0)
    }

    pub fn sup_radius(&self) -> f64 {
        self.base + self.gain.max(0.0)
    }

    pub fn lipschitz_bound(&self) -> f64 {
        (self.gain / self.knee).abs()
    }
}

/// Smooth vision half-angle: `pi` for speeds up to 1, then strictly
/// decreasing toward `theta_star`.
///
/// The transition uses the flat switch `q(z) = (z-1)^2 exp(-1/(z-1))`, which
/// vanishes with all derivatives at `z = 1`, so theta is smooth and exactly
/// `pi` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaProfile {
    pub theta_star: f64,
    /// Transition rate; larger closes the cone faster past speed 1.
    pub kappa: f64,
}

impl ThetaProfile {
    pub fn angle(&self, speed: f64) -> f64 {
        if speed <= 1.0 {
            return PI;
        }
        let t = speed - 1.0;
        let q = t * t * (-1.0 / t).exp();
        self.theta_star + (PI - self.theta_star) * (-self.kappa * q).exp()
    }
}

/// The set-valued map `v -> K(v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SensitivityRegion {
    /// Closed ball of fixed radius.
    FixedBall { r: f64 },
    /// Closed ball whose radius varies smoothly with speed.
    VariableBall { r: RadiusProfile },
    /// Vision cone of radius `r` and speed-dependent half-angle, d = 2 or 3.
    VisionCone { r: f64, theta: ThetaProfile, dim: usize },
}

impl SensitivityRegion {
    /// Radius of the compact master set containing every `K(v)`.
    pub fn master_radius(&self) -> f64 {
        match self {
            Self::FixedBall { r } => *r,
            Self::VariableBall { r } => r.sup_radius(),
            Self::VisionCone { r, .. } => *r,
        }
    }

    pub fn ball_radius(&self, speed: f64) -> Option<f64> {
        match self {
            Self::FixedBall { r } => Some(*r),
            Self::VariableBall { r } => Some(r.radius(speed)),
            Self::VisionCone { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            Self::FixedBall { r } => {
                if *r <= 0.0 {
                    return Err(format!("fixed ball radius must be positive, got {r}"));
                }
            }
            Self::VariableBall { r } => {
                if r.base <= 0.0 || r.gain < 0.0 {
                    return Err(format!(
                        "variable ball needs base > 0 and gain >= 0, got base={} gain={}",
                        r.base, r.gain
                    ));
                }
            }
            Self::VisionCone { r, theta, dim } => {
                if *r <= 0.0 {
                    return Err(format!("cone radius must be positive, got {r}"));
                }
                if !(*dim == 2 || *dim == 3) {
                    return Err(format!("vision cone supports d in {{2,3}}, got {dim}"));
                }
                if !(theta.theta_star > 0.0 && theta.theta_star <= PI) {
                    return Err(format!("theta_star must lie in (0, pi], got {}", theta.theta_star));
                }
                if theta.kappa <= 0.0 {
                    return Err(format!("theta kappa must be positive, got {}", theta.kappa));
                }
            }
        }
        Ok(())
    }

    /// Closed-set membership `x in K(v)`; boundary points count as inside.
    pub fn contains(&self, v: &[f64], x: &[f64]) -> bool {
        let s2: f64 = x.iter().map(|c| c * c).sum();
        match self {
            Self::FixedBall { r } => s2 <= r * r,
            Self::VariableBall { r } => {
                let rv = r.radius(norm(v));
                s2 <= rv * rv
            }
            Self::VisionCone { r, theta, .. } => {
                if s2 > r * r {
                    return false;
                }
                let speed = norm(v);
                let ang = theta.angle(speed);
                if ang >= PI {
                    return true;
                }
                let s = s2.sqrt();
                if s == 0.0 {
                    return true; // apex
                }
                let cos = dot(x, v) / (s * speed);
                cos.clamp(-1.0, 1.0).acos() <= ang
            }
        }
    }

    /// Euclidean distance from `x` to the topological boundary of `K(v)`.
    pub fn boundary_distance(&self, v: &[f64], x: &[f64]) -> f64 {
        let s = norm(x);
        match self {
            Self::FixedBall { r } => (s - r).abs(),
            Self::VariableBall { r } => (s - r.radius(norm(v))).abs(),
            Self::VisionCone { r, theta, .. } => {
                let speed = norm(v);
                let ang = theta.angle(speed);
                if ang >= PI {
                    return (s - r).abs();
                }
                let (p, q) = axis_coords(x, v, speed);
                cone_profile_distance(p, q, *r, ang)
            }
        }
    }
}

/// Half-plane coordinates of `x` relative to the axis `v`: component along
/// the axis and the perpendicular magnitude, the latter computed from the
/// residual vector to avoid cancellation on near-axis points.
pub(crate) fn axis_coords(x: &[f64], v: &[f64], speed: f64) -> (f64, f64) {
    let p = dot(x, v) / speed;
    let q2: f64 = x
        .iter()
        .zip(v)
        .map(|(xc, vc)| {
            let perp = xc - p * vc / speed;
            perp * perp
        })
        .sum();
    (p, q2.sqrt())
}

/// Distance from `(p, q >= 0)` to the boundary of the planar cone section
/// `{rho <= r, alpha <= ang}` (cap arc plus lateral segment through the apex).
pub(crate) fn cone_profile_distance(p: f64, q: f64, r: f64, ang: f64) -> f64 {
    let rho = (p * p + q * q).sqrt();
    let alpha = q.atan2(p); // in [0, pi] since q >= 0
    let cap = if alpha <= ang {
        (rho - r).abs()
    } else {
        dist_point(p, q, r * ang.cos(), r * ang.sin())
    };
    let lat = dist_segment(p, q, 0.0, 0.0, r * ang.cos(), r * ang.sin());
    cap.min(lat)
}

pub(crate) fn dist_point(px: f64, py: f64, ax: f64, ay: f64) -> f64 {
    ((px - ax).powi(2) + (py - ay).powi(2)).sqrt()
}

pub(crate) fn dist_segment(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return dist_point(px, py, ax, ay);
    }
    let t = (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0);
    dist_point(px, py, ax + t * dx, ay + t * dy)
}

#[inline]
pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
