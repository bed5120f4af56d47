//! Mean-field force evaluator `F[f](x, v)` from a gridded density or a
//! frozen sample cloud.
//!
//! For ball regions the kernel does not see the neighbor's velocity, so the
//! force separates into column moments: `F(x, v) = A(x, v) - B(x, v) v` with
//! `A = k * m1` and `B = k * m0` (periodic convolutions). Fixed balls drop
//! the `v` dependence of `k`, which is the O(nx^2)-per-step path the solver
//! uses.

use super::grid::PhaseDensity;
use crate::geometry::{MollifiedKernel, SensitivityRegion};
use crate::sde::{FrozenCloud1d, SimError};
use crate::transport::EmpiricalMeasure;

#[derive(Debug, Clone)]
pub enum ForceSource {
    /// Column moments of a gridded density (d = 1).
    GridMoments { nx: usize, dx: f64, length: f64, m0: Vec<f64>, m1: Vec<f64> },
    /// Frozen 1d sample cloud.
    Cloud(FrozenCloud1d),
    /// Constant drift (manufactured-solution and transport-only tests).
    Uniform(f64),
}

#[derive(Debug, Clone)]
pub struct DensityForceField {
    pub kernel: MollifiedKernel,
    pub source: ForceSource,
}

impl DensityForceField {
    pub fn from_grid(density: &PhaseDensity, kernel: MollifiedKernel) -> Self {
        let (m0, m1) = density.column_moments();
        let source = ForceSource::GridMoments {
            nx: density.grid.nx,
            dx: density.grid.dx(),
            length: density.grid.length,
            m0,
            m1,
        };
        Self { kernel, source }
    }

    /// Freeze a phase-space cloud `(x, v)` as the force source (d = 1).
    pub fn from_cloud(
        positions: &[f64],
        velocities: &[f64],
        kernel: MollifiedKernel,
        period: Option<f64>,
    ) -> Result<Self, SimError> {
        let cloud = FrozenCloud1d::build(positions, velocities, &kernel, period)
            .ok_or_else(|| SimError::Invalid("cloud force source needs a 1d fixed-ball kernel".into()))?;
        Ok(Self { kernel, source: ForceSource::Cloud(cloud) })
    }

    pub fn from_empirical(
        m: &EmpiricalMeasure,
        kernel: MollifiedKernel,
        period: Option<f64>,
    ) -> Result<Self, SimError> {
        if m.dim() != 2 {
            return Err(SimError::Invalid("empirical force source must be a 1d phase cloud".into()));
        }
        let n = m.len();
        let mut pos = Vec::with_capacity(n);
        let mut vel = Vec::with_capacity(n);
        for i in 0..n {
            let p = m.point(i);
            pos.push(p[0]);
            vel.push(p[1]);
        }
        Self::from_cloud(&pos, &vel, kernel, period)
    }

    /// Constant-drift field (testing hook; `0.0` disables the v-advection).
    pub fn uniform(value: f64, kernel: MollifiedKernel) -> Self {
        Self { kernel, source: ForceSource::Uniform(value) }
    }

    /// The alignment force at a phase point (d = 1).
    pub fn eval(&self, x: f64, v: f64) -> f64 {
        match &self.source {
            ForceSource::Cloud(cloud) => cloud.mean_force(x, v),
            ForceSource::Uniform(value) => *value,
            ForceSource::GridMoments { nx, dx, length, m0, m1 } => {
                let mut a = 0.0;
                let mut b = 0.0;
                for l in 0..*nx {
                    let y = (l as f64 + 0.5) * dx;
                    let mut delta = (y - x).abs() % length;
                    if delta > 0.5 * length {
                        delta = length - delta;
                    }
                    let k = self.kernel.ball_profile(v.abs(), delta, 1);
                    a += k * m1[l];
                    b += k * m0[l];
                }
                (a - b * v) * dx
            }
        }
    }

    /// Per-column coefficients `(A_j, B_j)` with `F(x_j, v) = A_j - B_j v`,
    /// available when the kernel is velocity-independent (fixed ball).
    pub fn column_coefficients(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if !matches!(self.kernel.region, SensitivityRegion::FixedBall { .. }) {
            return None;
        }
        self.coefficients_at_speed(0.0)
    }

    /// Coefficients for a velocity-dependent ball kernel at the given speed:
    /// `F(x_j, v) = A_j(|v|) - B_j(|v|) v`.
    pub fn row_coefficients(&self, speed: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        self.coefficients_at_speed(speed)
    }

    fn coefficients_at_speed(&self, speed: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        if let ForceSource::Uniform(value) = &self.source {
            return Some((vec![*value; 1], vec![0.0; 1]));
        }
        let ForceSource::GridMoments { nx, dx, length, m0, m1 } = &self.source else {
            return None;
        };
        if matches!(self.kernel.region, SensitivityRegion::VisionCone { .. }) {
            return None;
        }
        let nx = *nx;
        // kernel profile per periodic column offset
        let profile: Vec<f64> = (0..nx)
            .map(|o| {
                let mut delta = o as f64 * dx;
                if delta > 0.5 * length {
                    delta = length - delta;
                }
                self.kernel.ball_profile(speed, delta, 1)
            })
            .collect();
        let mut a = vec![0.0; nx];
        let mut b = vec![0.0; nx];
        for j in 0..nx {
            let mut sa = 0.0;
            let mut sb = 0.0;
            for (l, (m1l, m0l)) in m1.iter().zip(m0).enumerate() {
                let o = if j >= l { j - l } else { l - j };
                let k = profile[o];
                sa += k * m1l;
                sb += k * m0l;
            }
            a[j] = sa * dx;
            b[j] = sb * dx;
        }
        Some((a, b))
    }

    /// Crude bound on `|F|` for CFL purposes.
    pub fn max_abs(&self, v_box: f64) -> f64 {
        match &self.source {
            ForceSource::Cloud(_) => 2.0 * v_box,
            ForceSource::Uniform(value) => value.abs().max(1e-12),
            ForceSource::GridMoments { .. } => {
                if let Some((a, b)) = self.column_coefficients() {
                    a.iter()
                        .zip(&b)
                        .map(|(ai, bi)| ai.abs() + bi.abs() * v_box)
                        .fold(0.0, f64::max)
                } else {
                    2.0 * v_box
                }
            }
        }
    }
}
