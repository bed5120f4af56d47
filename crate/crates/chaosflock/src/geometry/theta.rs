//! The regularized boundary family `Theta(v)` and its enlargements.
//!
//! For balls `Theta(v)` is just the boundary sphere. For the vision cone the
//! family adds, at speeds in `(1/2, 1)`, the radial segment
//! `R(v) = [a(v), b(v)]` with `a(v) = -r v/|v|` and `b(v) = 2r(|v|-1) v/|v|`:
//! it pre-covers the notch that opens along the rear axis once the speed
//! crosses 1, which is what makes the symmetric-difference bound hold with a
//! constant proportional to `|v - w|`.

use super::region::{axis_coords, cone_profile_distance, norm, SensitivityRegion};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaFamily {
    pub region: SensitivityRegion,
    /// Configured (H2) constant used by membership checks.
    pub c: f64,
    /// Test ablation: drop the rear segment `R(v)` from the cone family.
    #[serde(default = "default_true")]
    pub include_segment: bool,
}

fn default_true() -> bool {
    true
}

impl ThetaFamily {
    pub fn new(region: SensitivityRegion, c: f64) -> Self {
        Self { region, c, include_segment: true }
    }

    /// The deliberately broken family: cone boundary without `R(v)`.
    pub fn without_segment(region: SensitivityRegion, c: f64) -> Self {
        Self { region, c, include_segment: false }
    }

    /// Recommended constant for the configured region, large enough for the
    /// symmetric-difference and family-stability checks (iii)-(iv) but small
    /// enough that a missing rear segment is still witnessed.
    pub fn default_constant(region: &SensitivityRegion) -> f64 {
        match region {
            SensitivityRegion::FixedBall { .. } => 2.0,
            SensitivityRegion::VariableBall { r } => r.lipschitz_bound() + 1.0,
            SensitivityRegion::VisionCone { r, .. } => 4.5 * r.max(1.0),
        }
    }

    /// Distance from `x` to `Theta(v)`.
    pub fn distance(&self, v: &[f64], x: &[f64]) -> f64 {
        match &self.region {
            SensitivityRegion::FixedBall { .. } | SensitivityRegion::VariableBall { .. } => {
                self.region.boundary_distance(v, x)
            }
            SensitivityRegion::VisionCone { r, theta, .. } => {
                let speed = norm(v);
                let ang = theta.angle(speed);
                let base = if ang >= PI || speed == 0.0 {
                    (norm(x) - r).abs()
                } else {
                    let (p, q) = axis_coords(x, v, speed);
                    cone_profile_distance(p, q, *r, ang)
                };
                if self.include_segment && speed > 0.5 && speed < 1.0 {
                    // R(v) lies on the rear axis: p in [-r, 2r(speed-1)], q = 0.
                    let (p, q) = axis_coords(x, v, speed);
                    let (lo, hi) = (-r, 2.0 * r * (speed - 1.0));
                    let dp = (lo - p).max(p - hi).max(0.0);
                    base.min((dp * dp + q * q).sqrt())
                } else {
                    base
                }
            }
        }
    }

    /// Membership in the enlargement `Theta(v)^{u,+}`.
    pub fn enlargement_contains(&self, v: &[f64], x: &[f64], u: f64) -> bool {
        self.distance(v, x) <= u
    }
}
