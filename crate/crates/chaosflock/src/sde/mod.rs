//! Euler-Maruyama integration of the regularized interacting particle system
//! with speed-truncated diffusion.
//!
//! Velocities feel the mean alignment force weighted by the mollified
//! indicator of each agent's sensitivity set; the noise amplitude vanishes
//! smoothly at the speed cap `V_m`, which keeps every speed below
//! `V_m + C_slack * dt` without any projection. Brownian increments are keyed
//! by `(seed, particle id, step)`, so coupled runs and replicas reproduce
//! bit-identically under any thread layout.

mod force;

pub use force::{forces, forces_into, FrozenCloud1d};

use crate::geometry::{GeometryError, MollifiedKernel, ThetaFamily};
use crate::rng::CounterRng;
use crate::transport::{EmpiricalMeasure, TransportError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("non-finite state at step {step} (dt too large or inputs invalid)")]
    NonFiniteState { step: u64 },
    #[error("speed bound breached at step {step}: {speed} > {allowed} (scheme bug or dt too large)")]
    SpeedBoundBreach { step: u64, speed: f64, allowed: f64 },
    #[error("initial speeds must not exceed V_m = {v_m}; found {speed}")]
    InitialSpeedTooLarge { v_m: f64, speed: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Positions and velocities of `n` particles in `d` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub dim: usize,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    /// RNG stream ids; permuting particles together with their ids commutes
    /// with the dynamics.
    pub ids: Vec<u64>,
    pub time: f64,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<f64>, velocities: Vec<f64>, dim: usize) -> Result<Self, SimError> {
        if dim == 0 || positions.len() % dim != 0 || positions.len() != velocities.len() {
            return Err(SimError::Invalid(format!(
                "inconsistent buffers: {} positions, {} velocities, dim {dim}",
                positions.len(),
                velocities.len()
            )));
        }
        if positions.iter().chain(&velocities).any(|c| !c.is_finite()) {
            return Err(SimError::Invalid("non-finite initial state".into()));
        }
        let n = positions.len() / dim;
        Ok(Self { dim, positions, velocities, ids: (0..n as u64).collect(), time: 0.0 })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    pub fn speed(&self, i: usize) -> f64 {
        self.velocity(i).iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn max_speed(&self) -> f64 {
        (0..self.n()).map(|i| self.speed(i)).fold(0.0, f64::max)
    }

    /// Apply a permutation to particles and their RNG ids.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let d = self.dim;
        let mut out = self.clone();
        for (new_i, &old_i) in perm.iter().enumerate() {
            out.positions[new_i * d..(new_i + 1) * d].copy_from_slice(self.position(old_i));
            out.velocities[new_i * d..(new_i + 1) * d].copy_from_slice(self.velocity(old_i));
            out.ids[new_i] = self.ids[old_i];
        }
        out
    }

    /// Phase-space point cloud `(x, v)` with uniform weights.
    pub fn empirical(&self) -> EmpiricalMeasure {
        let d = self.dim;
        let mut flat = Vec::with_capacity(self.n() * 2 * d);
        for i in 0..self.n() {
            flat.extend_from_slice(self.position(i));
            flat.extend_from_slice(self.velocity(i));
        }
        EmpiricalMeasure::uniform(flat, 2 * d).expect("finite ensemble")
    }
}

/// Noise amplitude profile vanishing at the speed cap.
///
/// `profile(s) = (1 - (s/V_m)^2)^3` for `s < V_m`, else 0: value, first and
/// second derivatives all vanish at `s = V_m`, so the coefficient is C^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionTruncation {
    pub v_m: f64,
}

impl DiffusionTruncation {
    pub fn new(v_m: f64) -> Self {
        assert!(v_m > 0.0, "speed cap must be positive");
        Self { v_m }
    }

    #[inline]
    pub fn profile(&self, speed: f64) -> f64 {
        if speed >= self.v_m {
            return 0.0;
        }
        let u = speed / self.v_m;
        (1.0 - u * u).powi(3)
    }

    /// Bound on `|profile'|`: max of `6u(1-u^2)^2 / V_m` at `u = 1/sqrt(5)`.
    pub fn lipschitz(&self) -> f64 {
        6.0 * (16.0 / 25.0) / 5.0f64.sqrt() / self.v_m
    }
}

/// Integration parameters; the interaction kernel travels separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub sigma: f64,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    /// Periodic wrap for position differences (torus runs); none = free space.
    pub x_period: Option<f64>,
    /// Speed overshoot allowance per unit dt; breach raises an error.
    pub c_slack: f64,
    /// Report pairs within this distance of `Theta(V_i)`.
    pub tau_boundary: f64,
    pub record_boundary_events: bool,
    pub record_pair_weights: bool,
}

impl SimParams {
    pub fn new(sigma: f64, dt: f64, t_end: f64, seed: u64, trunc: &DiffusionTruncation, eps: f64) -> Self {
        Self {
            sigma,
            dt,
            t_end,
            seed,
            x_period: None,
            c_slack: 2.0 * trunc.v_m,
            tau_boundary: 2.0 * eps,
            record_boundary_events: false,
            record_pair_weights: false,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) || self.t_end < 0.0 || self.sigma < 0.0 {
            return Err(SimError::Invalid(format!(
                "need dt > 0, t_end >= 0, sigma >= 0; got dt={} t_end={} sigma={}",
                self.dt, self.t_end, self.sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryEvent {
    pub i: u32,
    pub j: u32,
    pub dist: f64,
}

/// Per-step diagnostics standing in for the realized inclusion coefficients.
#[derive(Debug, Clone, Default)]
pub struct StepRecord {
    /// Sparse nonzero mollified weights `(i, j, w)` used this step.
    pub pair_weights: Vec<(u32, u32, f64)>,
    /// Pairs whose displacement sits within `tau_boundary` of `Theta(V_i)`.
    pub boundary_events: Vec<BoundaryEvent>,
}

/// Alignment force on particle `i`: the kernel-weighted mean of velocity
/// differences. The self term vanishes identically.
pub fn force(
    ensemble: &ParticleEnsemble,
    kernel: &MollifiedKernel,
    i: usize,
    x_period: Option<f64>,
) -> Result<Vec<f64>, SimError> {
    let all = forces(ensemble, kernel, x_period)?;
    let d = ensemble.dim;
    Ok(all[i * d..(i + 1) * d].to_vec())
}

/// One Euler-Maruyama step. `noise` holds `N(0, dt)` increments per particle
/// component, caller-supplied so coupled systems can share them.
pub fn em_step(
    ensemble: &ParticleEnsemble,
    params: &SimParams,
    trunc: &DiffusionTruncation,
    kernel: &MollifiedKernel,
    noise: &[f64],
) -> Result<(ParticleEnsemble, StepRecord), SimError> {
    let n = ensemble.n();
    let d = ensemble.dim;
    if noise.len() != n * d {
        return Err(SimError::Invalid(format!("noise buffer {} != n*d {}", noise.len(), n * d)));
    }
    let f = forces(ensemble, kernel, params.x_period)?;
    let mut out = ensemble.clone();
    let amp = (2.0 * params.sigma).sqrt();
    for i in 0..n {
        let prof = amp * trunc.profile(ensemble.speed(i));
        for c in 0..d {
            let k = i * d + c;
            out.positions[k] = ensemble.positions[k] + ensemble.velocities[k] * params.dt;
            out.velocities[k] =
                ensemble.velocities[k] + f[k] * params.dt + prof * noise[k];
        }
    }
    out.time = ensemble.time + params.dt;
    if out.positions.iter().chain(&out.velocities).any(|c| !c.is_finite()) {
        return Err(SimError::NonFiniteState { step: (out.time / params.dt).round() as u64 });
    }
    let mut record = StepRecord::default();
    if params.record_pair_weights || params.record_boundary_events {
        let theta = ThetaFamily::new(kernel.region, ThetaFamily::default_constant(&kernel.region));
        let mut delta = vec![0.0; d];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for c in 0..d {
                    delta[c] = wrap_diff(
                        ensemble.positions[j * d + c] - ensemble.positions[i * d + c],
                        params.x_period,
                    );
                }
                if params.record_pair_weights {
                    let w = kernel.eval_fast(ensemble.velocity(i), &delta)?;
                    if w > 0.0 {
                        record.pair_weights.push((i as u32, j as u32, w));
                    }
                }
                if params.record_boundary_events {
                    let dist = theta.distance(ensemble.velocity(i), &delta);
                    if dist <= params.tau_boundary {
                        record.boundary_events.push(BoundaryEvent {
                            i: i as u32,
                            j: j as u32,
                            dist,
                        });
                    }
                }
            }
        }
    }
    Ok((out, record))
}

#[inline]
pub(crate) fn wrap_diff(mut delta: f64, period: Option<f64>) -> f64 {
    if let Some(l) = period {
        delta %= l;
        if delta > 0.5 * l {
            delta -= l;
        } else if delta < -0.5 * l {
            delta += l;
        }
    }
    delta
}

/// `N(0, dt)` increments for one step, keyed by `(seed, particle id, step)`.
pub fn step_noise(
    rng: &CounterRng,
    ensemble: &ParticleEnsemble,
    step: u64,
    dt: f64,
    out: &mut Vec<f64>,
) {
    let d = ensemble.dim;
    let sd = dt.sqrt();
    out.clear();
    out.reserve(ensemble.n() * d);
    for i in 0..ensemble.n() {
        let stream = rng.stream(ensemble.ids[i]);
        for c in 0..d {
            out.push(sd * stream.standard_normal(step * d as u64 + c as u64));
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrajectorySummary {
    pub final_ensemble: ParticleEnsemble,
    pub max_speed_seen: f64,
    pub snapshots: Vec<(f64, ParticleEnsemble)>,
    pub boundary_log: Vec<(f64, BoundaryEvent)>,
    pub steps: u64,
}

/// Integrate to `t_end`, recording snapshots at the requested times.
///
/// Deterministic given the seed: increments depend only on
/// `(seed, particle id, step)`, never on thread count.
pub fn simulate(
    initial: &ParticleEnsemble,
    params: &SimParams,
    trunc: &DiffusionTruncation,
    kernel: &MollifiedKernel,
    snapshot_times: &[f64],
) -> Result<TrajectorySummary, SimError> {
    params.validate()?;
    let max0 = initial.max_speed();
    if max0 > trunc.v_m + 1e-12 {
        return Err(SimError::InitialSpeedTooLarge { v_m: trunc.v_m, speed: max0 });
    }
    let allowed = trunc.v_m + params.c_slack * params.dt;
    let steps = (params.t_end / params.dt).round().max(0.0) as u64;
    let rng = CounterRng::new(params.seed);
    let mut state = initial.clone();
    let mut max_speed = max0;
    let mut snapshots = Vec::new();
    let mut boundary_log = Vec::new();
    let mut noise = Vec::new();
    let mut next_snap = snapshot_times.iter().copied().collect::<Vec<_>>();
    next_snap.sort_by(f64::total_cmp);
    let mut snap_idx = 0;
    while snap_idx < next_snap.len() && next_snap[snap_idx] <= state.time + 1e-12 {
        snapshots.push((state.time, state.clone()));
        snap_idx += 1;
    }
    for step in 0..steps {
        step_noise(&rng, &state, step, params.dt, &mut noise);
        let (next, record) = em_step(&state, params, trunc, kernel, &noise)?;
        for ev in record.boundary_events {
            boundary_log.push((next.time, ev));
        }
        state = next;
        let ms = state.max_speed();
        if ms > allowed + 1e-12 {
            return Err(SimError::SpeedBoundBreach { step, speed: ms, allowed });
        }
        max_speed = max_speed.max(ms);
        while snap_idx < next_snap.len() && next_snap[snap_idx] <= state.time + 1e-9 {
            snapshots.push((state.time, state.clone()));
            snap_idx += 1;
        }
    }
    Ok(TrajectorySummary {
        final_ensemble: state,
        max_speed_seen: max_speed,
        snapshots,
        boundary_log,
        steps,
    })
}

/// Advance the interacting system and a mean-field ensemble with the same
/// Gaussian increments per particle index (synchronous coupling). The
/// mean-field drift comes from the supplied frozen-law force evaluator.
pub fn coupled_pair_step<F>(
    sys: &ParticleEnsemble,
    mf: &ParticleEnsemble,
    params: &SimParams,
    trunc: &DiffusionTruncation,
    kernel: &MollifiedKernel,
    frozen_density_force: F,
    noise: &[f64],
) -> Result<(ParticleEnsemble, ParticleEnsemble), SimError>
where
    F: Fn(&[f64], &[f64], &mut [f64]),
{
    if sys.n() != mf.n() || sys.dim != mf.dim {
        return Err(SimError::Invalid("coupled ensembles must match in size and dimension".into()));
    }
    let (sys_next, _) = em_step(sys, params, trunc, kernel, noise)?;
    let n = mf.n();
    let d = mf.dim;
    let mut out = mf.clone();
    let amp = (2.0 * params.sigma).sqrt();
    let mut drift = vec![0.0; d];
    for i in 0..n {
        frozen_density_force(mf.position(i), mf.velocity(i), &mut drift);
        let prof = amp * trunc.profile(mf.speed(i));
        for c in 0..d {
            let k = i * d + c;
            out.positions[k] = mf.positions[k] + mf.velocities[k] * params.dt;
            out.velocities[k] = mf.velocities[k] + drift[c] * params.dt + prof * noise[k];
        }
    }
    out.time = mf.time + params.dt;
    if out.positions.iter().chain(&out.velocities).any(|c| !c.is_finite()) {
        return Err(SimError::NonFiniteState { step: (out.time / params.dt).round() as u64 });
    }
    Ok((sys_next, out))
}

#[cfg(test)]
mod tests;
