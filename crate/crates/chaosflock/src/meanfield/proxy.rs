//! Sampled McKean-Vlasov dynamics: M i.i.d. particles driven by the force of
//! their own (periodically refrozen) empirical law. The computable stand-in
//! for the nonlinear process whose time marginals solve the kinetic equation.

use super::force::DensityForceField;
use crate::geometry::MollifiedKernel;
use crate::rng::CounterRng;
use crate::sde::{
    step_noise, DiffusionTruncation, FrozenCloud1d, ParticleEnsemble, SimError, SimParams,
};

#[derive(Debug, Clone)]
pub struct ProxyTrajectory {
    pub snapshots: Vec<(f64, ParticleEnsemble)>,
    pub final_ensemble: ParticleEnsemble,
    /// The empirical law at the start of every step (1d runs), for use as a
    /// frozen mean-field target in coupled experiments.
    pub per_step_laws: Vec<FrozenCloud1d>,
}

/// Evolve `initial` under the force of its own empirical law, refrozen every
/// `refresh_every` steps. `keep_laws` additionally records the step-by-step
/// law (requires d = 1 with a fixed-ball kernel).
pub fn nonlinear_sde_proxy(
    initial: &ParticleEnsemble,
    params: &SimParams,
    trunc: &DiffusionTruncation,
    kernel: &MollifiedKernel,
    refresh_every: u64,
    snapshot_times: &[f64],
    keep_laws: bool,
) -> Result<ProxyTrajectory, SimError> {
    params.validate()?;
    if refresh_every == 0 {
        return Err(SimError::Invalid("refresh_every must be at least 1".into()));
    }
    let d = initial.dim;
    let n = initial.n();
    let steps = (params.t_end / params.dt).round().max(0.0) as u64;
    let rng = CounterRng::new(params.seed);
    let mut state = initial.clone();
    let mut noise = Vec::new();
    let mut snaps: Vec<f64> = snapshot_times.to_vec();
    snaps.sort_by(f64::total_cmp);
    let mut snap_idx = 0;
    let mut snapshots = Vec::new();
    while snap_idx < snaps.len() && snaps[snap_idx] <= 1e-12 {
        snapshots.push((0.0, state.clone()));
        snap_idx += 1;
    }
    let mut per_step_laws = Vec::new();
    let mut frozen: Option<DensityForceField> = None;
    let amp = (2.0 * params.sigma).sqrt();
    for step in 0..steps {
        if keep_laws {
            let law = FrozenCloud1d::build(&state.positions, &state.velocities, kernel, params.x_period)
                .ok_or_else(|| {
                    SimError::Invalid("per-step laws need a 1d fixed-ball kernel".into())
                })?;
            per_step_laws.push(law);
        }
        if step % refresh_every == 0 {
            frozen = Some(if d == 1 {
                DensityForceField::from_cloud(
                    &state.positions,
                    &state.velocities,
                    kernel.clone(),
                    params.x_period,
                )?
            } else {
                return Err(SimError::Invalid(
                    "the sampled mean-field proxy is implemented for d = 1".into(),
                ));
            });
        }
        let field = frozen.as_ref().expect("frozen on first step");
        step_noise(&rng, &state, step, params.dt, &mut noise);
        let mut next = state.clone();
        for i in 0..n {
            let drift = field.eval(state.positions[i], state.velocities[i]);
            let prof = amp * trunc.profile(state.speed(i));
            next.positions[i] = state.positions[i] + state.velocities[i] * params.dt;
            next.velocities[i] = state.velocities[i] + drift * params.dt + prof * noise[i];
        }
        next.time = state.time + params.dt;
        if next.positions.iter().chain(&next.velocities).any(|c| !c.is_finite()) {
            return Err(SimError::NonFiniteState { step });
        }
        state = next;
        while snap_idx < snaps.len() && snaps[snap_idx] <= state.time + 1e-9 {
            snapshots.push((state.time, state.clone()));
            snap_idx += 1;
        }
    }
    Ok(ProxyTrajectory { snapshots, final_ensemble: state, per_step_laws })
}
