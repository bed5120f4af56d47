//! Finite-volume stepping of the regularized kinetic equation on the d = 1
//! phase grid: upwind transport in `x`, upwind alignment drift in `v`,
//! explicit central diffusion of `profile^2 * f` in `v`, composed Strang
//! style with half steps of the x-transport around the velocity operators.
//!
//! Every substep is written as a convex combination of cell values, so mass
//! is conserved by telescoping fluxes and positivity survives the stated CFL
//! bound.

use super::force::DensityForceField;
use super::grid::PhaseDensity;
use crate::sde::DiffusionTruncation;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("CFL violation: dt {dt} exceeds allowed {allowed} ({which})")]
    CflViolation { dt: f64, allowed: f64, which: &'static str },
    #[error("L-inf ledger exceeded twice its fitted envelope at t = {t}: {linf} > 2 * {envelope}")]
    BoundBlowup { t: f64, linf: f64, envelope: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sim(#[from] crate::sde::SimError),
    #[error(transparent)]
    Transport(#[from] crate::transport::TransportError),
}

/// Largest stable timestep for the current force field.
pub fn cfl_limit(
    density: &PhaseDensity,
    field: &DensityForceField,
    sigma: f64,
    trunc: &DiffusionTruncation,
) -> f64 {
    let g = &density.grid;
    let dt_x = g.dx() / g.v_box;
    let max_f = field.max_abs(g.v_box).max(1e-30);
    let dt_v = g.dv() / max_f;
    let max_prof2 = (0..g.nv)
        .map(|m| trunc.profile(g.v_center(m).abs()).powi(2))
        .fold(0.0, f64::max);
    let dt_diff = if sigma * max_prof2 > 0.0 {
        g.dv() * g.dv() / (2.0 * sigma * max_prof2)
    } else {
        f64::INFINITY
    };
    dt_x.min(dt_v).min(dt_diff)
}

/// One split step of size `density.dt_pde`.
pub fn vfp_step(
    density: &PhaseDensity,
    field: &DensityForceField,
    sigma: f64,
    trunc: &DiffusionTruncation,
) -> Result<PhaseDensity, GridError> {
    let dt = density.dt_pde;
    let allowed = 0.9 * cfl_limit(density, field, sigma, trunc);
    if dt > allowed {
        return Err(GridError::CflViolation { dt, allowed, which: "combined" });
    }
    let mut out = density.clone();
    advect_x(&mut out, 0.5 * dt);
    advect_v(&mut out, field, dt);
    diffuse_v(&mut out, sigma, trunc, dt);
    advect_x(&mut out, 0.5 * dt);
    Ok(out)
}

fn advect_x(density: &mut PhaseDensity, dt: f64) {
    let g = density.grid;
    let nx = g.nx;
    let mut row_new = vec![0.0; nx];
    for m in 0..g.nv {
        let v = g.v_center(m);
        let nu = v.abs() * dt / g.dx();
        let row = &mut density.values[m * nx..(m + 1) * nx];
        if v >= 0.0 {
            for j in 0..nx {
                let up = row[(j + nx - 1) % nx];
                row_new[j] = (1.0 - nu) * row[j] + nu * up;
            }
        } else {
            for j in 0..nx {
                let up = row[(j + 1) % nx];
                row_new[j] = (1.0 - nu) * row[j] + nu * up;
            }
        }
        row.copy_from_slice(&row_new);
    }
}

fn advect_v(density: &mut PhaseDensity, field: &DensityForceField, dt: f64) {
    let g = density.grid;
    let nx = g.nx;
    let nv = g.nv;
    let lambda = dt / g.dv();
    let column_ab = field.column_coefficients();
    // face drifts per column: a(x_j, v_face), interior faces only
    let mut face_a = vec![0.0; nv + 1];
    let mut col = vec![0.0; nv];
    let mut col_new = vec![0.0; nv];
    // velocity-dependent kernels: coefficients per face speed
    let row_ab: Option<Vec<(Vec<f64>, Vec<f64>)>> = if column_ab.is_none() {
        Some(
            (0..=nv)
                .map(|m| {
                    field
                        .row_coefficients(g.v_face(m).abs())
                        .expect("grid force source required")
                })
                .collect(),
        )
    } else {
        None
    };
    for j in 0..nx {
        for m in 0..nv {
            col[m] = density.values[m * nx + j];
        }
        for m in 0..=nv {
            if m == 0 || m == nv {
                face_a[m] = 0.0; // no-flux walls
            } else {
                let vf = g.v_face(m);
                // length-1 coefficient vectors broadcast (uniform drift)
                let (a, b) = match (&column_ab, &row_ab) {
                    (Some((a, b)), _) => (a[j.min(a.len() - 1)], b[j.min(b.len() - 1)]),
                    (_, Some(rows)) => {
                        let (a, b) = &rows[m];
                        (a[j.min(a.len() - 1)], b[j.min(b.len() - 1)])
                    }
                    _ => unreachable!(),
                };
                face_a[m] = a - b * vf;
            }
        }
        for m in 0..nv {
            let al = face_a[m];
            let ar = face_a[m + 1];
            let keep = 1.0 - lambda * (ar.max(0.0) - al.min(0.0));
            let from_below = if m > 0 { lambda * al.max(0.0) * col[m - 1] } else { 0.0 };
            let from_above = if m + 1 < nv { -lambda * ar.min(0.0) * col[m + 1] } else { 0.0 };
            col_new[m] = keep * col[m] + from_below + from_above;
        }
        for m in 0..nv {
            density.values[m * nx + j] = col_new[m];
        }
    }
}

fn diffuse_v(density: &mut PhaseDensity, sigma: f64, trunc: &DiffusionTruncation, dt: f64) {
    if sigma == 0.0 {
        return;
    }
    let g = density.grid;
    let nx = g.nx;
    let nv = g.nv;
    let mu = sigma * dt / (g.dv() * g.dv());
    let prof2: Vec<f64> = (0..nv).map(|m| trunc.profile(g.v_center(m).abs()).powi(2)).collect();
    let mut col = vec![0.0; nv];
    for j in 0..nx {
        for m in 0..nv {
            col[m] = density.values[m * nx + j];
        }
        for m in 0..nv {
            let gm = prof2[m] * col[m];
            // zero-flux walls: mirror the cell value onto the outer face
            let gb = if m > 0 { prof2[m - 1] * col[m - 1] } else { gm };
            let ga = if m + 1 < nv { prof2[m + 1] * col[m + 1] } else { gm };
            density.values[m * nx + j] = col[m] + mu * (ga - 2.0 * gm + gb);
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LedgerEntry {
    pub t: f64,
    pub mass: f64,
    pub momentum: f64,
    pub linf: f64,
    pub vsupport: f64,
    pub moment_q: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct NormLedger {
    pub entries: Vec<LedgerEntry>,
}

impl NormLedger {
    fn record(&mut self, t: f64, d: &PhaseDensity, q: f64) {
        self.entries.push(LedgerEntry {
            t,
            mass: d.mass(),
            momentum: d.momentum(),
            linf: d.linf(),
            vsupport: d.velocity_support(),
            moment_q: d.position_moment(q),
        });
    }

    /// Smallest Riccati-envelope constant dominating the recorded sup norms:
    /// `g(t) = g0 / ((1 + g0) e^{-Ct} - g0)`.
    pub fn fitted_envelope_constant(&self) -> f64 {
        let g0 = match self.entries.first() {
            Some(e) => e.linf,
            None => return 0.0,
        };
        let mut c: f64 = 0.0;
        for e in self.entries.iter().skip(1) {
            if e.t <= 0.0 || e.linf <= 0.0 {
                continue;
            }
            let ratio = g0 * (1.0 + e.linf) / (e.linf * (1.0 + g0));
            if ratio < 1.0 {
                c = c.max(-(ratio.ln()) / e.t);
            }
        }
        c
    }

    /// Riccati envelope at time `t` for constant `c` (infinite past blowup).
    pub fn envelope(&self, c: f64, t: f64) -> f64 {
        let g0 = self.entries.first().map_or(0.0, |e| e.linf);
        let denom = (1.0 + g0) * (-c * t).exp() - g0;
        if denom <= 0.0 {
            f64::INFINITY
        } else {
            g0 / denom
        }
    }
}

#[derive(Debug, Clone)]
pub struct KineticSolution {
    pub snapshots: Vec<(f64, PhaseDensity)>,
    pub ledger: NormLedger,
    pub envelope_constant: f64,
    pub steps: u64,
}

/// Self-consistent kinetic run: the force is rebuilt from the current density
/// every step (explicit one-step lag), dt is CFL-limited, and the ledger is
/// checked against the Riccati sup-norm envelope fitted on the first half.
pub fn solve_kinetic(
    initial: &PhaseDensity,
    kernel: &crate::geometry::MollifiedKernel,
    sigma: f64,
    trunc: &DiffusionTruncation,
    t_end: f64,
    snapshot_times: &[f64],
    moment_q: f64,
) -> Result<KineticSolution, GridError> {
    let mass0 = initial.mass();
    if (mass0 - 1.0).abs() > 1e-8 {
        return Err(GridError::Invalid(format!("initial mass must be 1, got {mass0}")));
    }
    if initial.velocity_support() > trunc.v_m + 1e-12 {
        return Err(GridError::Invalid(format!(
            "initial support {} exceeds V_m {}",
            initial.velocity_support(),
            trunc.v_m
        )));
    }
    let mut snaps: Vec<f64> = snapshot_times.to_vec();
    snaps.sort_by(f64::total_cmp);
    let mut state = initial.clone();
    let mut t = 0.0;
    let mut ledger = NormLedger::default();
    ledger.record(0.0, &state, moment_q);
    let mut snapshots = Vec::new();
    let mut snap_idx = 0;
    while snap_idx < snaps.len() && snaps[snap_idx] <= 1e-12 {
        snapshots.push((0.0, state.clone()));
        snap_idx += 1;
    }
    let mut steps = 0u64;
    while t < t_end - 1e-12 {
        let field = DensityForceField::from_grid(&state, kernel.clone());
        let mut dt = 0.85 * cfl_limit(&state, &field, sigma, trunc);
        dt = dt.min(t_end - t);
        if snap_idx < snaps.len() {
            dt = dt.min((snaps[snap_idx] - t).max(1e-12));
        }
        state.dt_pde = dt;
        state = vfp_step(&state, &field, sigma, trunc)?;
        t += dt;
        steps += 1;
        let hit_snap = snap_idx < snaps.len() && t >= snaps[snap_idx] - 1e-9;
        if hit_snap {
            snapshots.push((t, state.clone()));
            // swallow duplicates so the next step is not forced to 1e-12
            while snap_idx < snaps.len() && t >= snaps[snap_idx] - 1e-9 {
                snap_idx += 1;
            }
        }
        if hit_snap || t >= t_end - 1e-12 {
            ledger.record(t, &state, moment_q);
        }
    }
    // envelope fitted on the first half, validated on the rest
    let half = ledger.entries.len() / 2;
    let first_half = NormLedger { entries: ledger.entries[..half.max(2).min(ledger.entries.len())].to_vec() };
    let c = first_half.fitted_envelope_constant();
    for e in ledger.entries.iter().skip(1) {
        let env = ledger.envelope(c, e.t);
        if env.is_finite() && e.linf > 2.0 * env {
            return Err(GridError::BoundBlowup { t: e.t, linf: e.linf, envelope: env });
        }
    }
    Ok(KineticSolution { snapshots, ledger, envelope_constant: c, steps })
}
