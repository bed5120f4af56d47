//! Sensitivity sets, their regularized boundary families, and the mollified
//! interaction kernel.

pub mod h2;
pub mod mollified;
pub mod region;
pub mod theta;

pub use h2::{verify_h2, H2Report, H2Witness};
pub use mollified::{ball_l1_smoothing_error, smoothed_ball_indicator, MollifiedKernel};
pub use region::{RadiusProfile, SensitivityRegion, ThetaProfile};
pub use theta::ThetaFamily;

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum GeometryError {
    #[error("mollifier widths must lie in (0, 1/2): eta={eta}, eps={eps}")]
    InvalidWidths { eta: f64, eps: f64 },
    #[error("quadrature budget exceeded: {detail}")]
    QuadratureBudgetExceeded { detail: String },
    #[error("(H2) violation at part {part}: dist {distance:.6} > allowed {allowed:.6}")]
    H2Violation { part: &'static str, distance: f64, allowed: f64, witness: Vec<f64> },
}

/// Sharp indicator of the closed set `K(v)` at displacement `x`.
pub fn indicator(region: &SensitivityRegion, v: &[f64], x: &[f64]) -> f64 {
    if region.contains(v, x) {
        1.0
    } else {
        0.0
    }
}

/// Membership in the eps-boundary `{x : dist(x, boundary K(v)) <= eps}`.
pub fn eps_boundary_contains(region: &SensitivityRegion, v: &[f64], x: &[f64], eps: f64) -> bool {
    debug_assert!(eps > 0.0);
    region.boundary_distance(v, x) <= eps
}

/// The rope inequality for a quadruple of positions: indicator differences
/// are controlled by boundary-layer membership at the first argument.
pub fn rope_bound_check(
    region: &SensitivityRegion,
    x1: &[f64],
    y1: &[f64],
    x2: &[f64],
    y2: &[f64],
    v: &[f64],
) -> bool {
    let d = x1.len();
    let mut dx1 = vec![0.0; d];
    let mut dx2 = vec![0.0; d];
    for i in 0..d {
        dx1[i] = y1[i] - x1[i];
        dx2[i] = y2[i] - x2[i];
    }
    let lhs = (indicator(region, v, &dx1) - indicator(region, v, &dx2)).abs();
    let sep_x = dist(x1, x2);
    let sep_y = dist(y1, y2);
    let bd = region.boundary_distance(v, &dx1);
    let rhs = f64::from(u8::from(bd <= 2.0 * sep_x)) + f64::from(u8::from(bd <= 2.0 * sep_y));
    lhs <= rhs
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
