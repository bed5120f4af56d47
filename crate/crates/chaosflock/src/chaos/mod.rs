//! Propagation-of-chaos experiments: synchronous coupling of the interacting
//! system against the sampled mean-field law across a ladder of particle
//! counts, rate fits against the sampling-rate model, and the law-of-large-
//! numbers discrepancy checks that drive the coupling estimate.

use crate::geometry::mollified::bump_quantile_1d;
use crate::geometry::{GeometryError, MollifiedKernel, ThetaFamily};
use crate::meanfield::{nonlinear_sde_proxy, ProxyTrajectory};
use crate::rng::CounterRng;
use crate::sde::{
    forces_into, DiffusionTruncation, FrozenCloud1d, ParticleEnsemble, SimError, SimParams,
};
use crate::transport::{
    fg_rate, log_log_fit, resample, w1_assignment, EmpiricalMeasure, GroundMetric, RateModel,
    TransportError,
};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChaosError {
    #[error("need at least 8 replicas for standard errors, got {0}")]
    InsufficientReplicas(usize),
    #[error("ladder must be strictly increasing, got {0:?}")]
    BadLadder(Vec<usize>),
    #[error("proxy laws cover {have} steps but the run needs {need}")]
    LawsTooShort { have: usize, need: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Product-bump initial law on phase space (d = 1): positions on
/// `x_center +- x_width`, velocities on `+- v_width`.
#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize, PartialEq)]
pub struct InitialLaw {
    pub x_center: f64,
    pub x_width: f64,
    pub v_width: f64,
}

impl InitialLaw {
    pub fn sample(&self, n: usize, rng: &CounterRng) -> ParticleEnsemble {
        let mut pos = Vec::with_capacity(n);
        let mut vel = Vec::with_capacity(n);
        for k in 0..n {
            pos.push(self.x_center + self.x_width * bump_quantile_1d(rng.uniform(2 * k as u64)));
            vel.push(self.v_width * bump_quantile_1d(rng.uniform(2 * k as u64 + 1)));
        }
        ParticleEnsemble::new(pos, vel, 1).expect("bump samples are finite")
    }
}

/// Optional second mean-field target: the kinetic grid solution, compared
/// against each replica's ensemble alongside the proxy.
#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize, PartialEq)]
pub struct KineticTargetSpec {
    pub nx: usize,
    pub nv: usize,
    pub length: f64,
    pub v_box_factor: f64,
}

#[derive(Debug, Clone)]
pub struct ChaosExperiment {
    pub n_ladder: Vec<usize>,
    pub replicas: usize,
    pub horizon: f64,
    pub dt: f64,
    pub sigma: f64,
    pub seed: u64,
    pub proxy_samples: usize,
    pub proxy_refresh: u64,
    pub kernel: MollifiedKernel,
    pub trunc: DiffusionTruncation,
    /// Moment order in the sampling-rate model.
    pub q: f64,
    pub initial: InitialLaw,
    /// When set, also report W1 to the kinetic grid solution.
    pub kinetic_target: Option<KineticTargetSpec>,
}

impl ChaosExperiment {
    pub fn validate(&self) -> Result<(), ChaosError> {
        if self.replicas < 8 {
            return Err(ChaosError::InsufficientReplicas(self.replicas));
        }
        if self.n_ladder.len() < 2 || self.n_ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ChaosError::BadLadder(self.n_ladder.clone()));
        }
        Ok(())
    }

    fn steps(&self) -> u64 {
        (self.horizon / self.dt).round().max(0.0) as u64
    }

    fn params(&self, seed: u64) -> SimParams {
        let mut p =
            SimParams::new(self.sigma, self.dt, self.horizon, seed, &self.trunc, self.kernel.eps);
        p.record_boundary_events = false;
        p
    }

    /// Run the large-M mean-field proxy once, keeping its law at every step.
    pub fn run_proxy(&self) -> Result<ProxyTrajectory, ChaosError> {
        let rng = CounterRng::new(self.seed).stream(u64::MAX);
        let initial = self.initial.sample(self.proxy_samples, &rng);
        let params = self.params(self.seed ^ 0x70c0_ffee);
        Ok(nonlinear_sde_proxy(
            &initial,
            &params,
            &self.trunc,
            &self.kernel,
            self.proxy_refresh,
            &[],
            true,
        )?)
    }
}

/// One coupled replica: identical initial data and Brownian increments, the
/// interacting drift on one side and the frozen mean-field law on the other.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoupledOutcome {
    /// `(1/N) sum_i (|X_i - Y_i| + |V_i - W_i|)` at the horizon.
    pub coupling_error: f64,
    /// W1 between the mean-field ensemble and a matched-size resample of the
    /// proxy law (sum ground metric on phase space).
    pub sampling_error: f64,
    /// W1 to the kinetic grid solution, when that target is configured.
    pub w1_to_grid: Option<f64>,
}

/// Advance the interacting system and the mean-field twin from shared
/// initial data with shared increments; the twin's drift comes from the
/// per-step frozen laws.
#[allow(clippy::too_many_arguments)]
pub fn run_synchronized(
    initial: &ParticleEnsemble,
    kernel: &MollifiedKernel,
    trunc: &DiffusionTruncation,
    sigma: f64,
    dt: f64,
    steps: u64,
    noise_seed: u64,
    laws: &[FrozenCloud1d],
) -> Result<(ParticleEnsemble, ParticleEnsemble), ChaosError> {
    if laws.len() < steps as usize {
        return Err(ChaosError::LawsTooShort { have: laws.len(), need: steps as usize });
    }
    let n = initial.n();
    let noise_rng = CounterRng::new(noise_seed);
    let amp = (2.0 * sigma).sqrt();
    let mut sys = initial.clone();
    let mut mf = initial.clone();
    let mut forces = vec![0.0; n];
    let mut noise = vec![0.0; n];
    let sd = dt.sqrt();
    for step in 0..steps {
        forces_into(&sys, kernel, None, &mut forces)?;
        let law = &laws[step as usize];
        for i in 0..n {
            noise[i] = sd * noise_rng.stream(sys.ids[i]).standard_normal(step);
        }
        for i in 0..n {
            let prof_sys = amp * trunc.profile(sys.velocities[i].abs());
            let prof_mf = amp * trunc.profile(mf.velocities[i].abs());
            let drift_mf = law.mean_force(mf.positions[i], mf.velocities[i]);
            sys.positions[i] += sys.velocities[i] * dt;
            sys.velocities[i] += forces[i] * dt + prof_sys * noise[i];
            mf.positions[i] += mf.velocities[i] * dt;
            mf.velocities[i] += drift_mf * dt + prof_mf * noise[i];
        }
    }
    if sys.velocities.iter().chain(&mf.velocities).any(|c| !c.is_finite()) {
        return Err(ChaosError::Sim(SimError::NonFiniteState { step: steps }));
    }
    sys.time = initial.time + steps as f64 * dt;
    mf.time = sys.time;
    Ok((sys, mf))
}

/// Mean pathwise coupling gap `(1/N) sum (|dx| + |dv|)`.
pub fn coupling_gap(sys: &ParticleEnsemble, mf: &ParticleEnsemble) -> f64 {
    let n = sys.n();
    (0..n)
        .map(|i| {
            (sys.positions[i] - mf.positions[i]).abs()
                + (sys.velocities[i] - mf.velocities[i]).abs()
        })
        .sum::<f64>()
        / n as f64
}

pub fn coupled_error(
    experiment: &ChaosExperiment,
    n: usize,
    replica: usize,
    laws: &[FrozenCloud1d],
    target_cloud: &EmpiricalMeasure,
    grid_target: Option<&crate::meanfield::PhaseDensity>,
) -> Result<CoupledOutcome, ChaosError> {
    let rng = CounterRng::new(experiment.seed).stream(replica as u64);
    let initial = experiment.initial.sample(n, &rng);
    let noise_seed = experiment.seed ^ (replica as u64).wrapping_mul(0x9e37_79b9);
    let (sys, mf) = run_synchronized(
        &initial,
        &experiment.kernel,
        &experiment.trunc,
        experiment.sigma,
        experiment.dt,
        experiment.steps(),
        noise_seed,
        laws,
    )?;
    let coupling_error = coupling_gap(&sys, &mf);
    // Sampling term: the mean-field ensemble against a matched-size resample
    // of the proxy law, keeping the fitted exponent free of the target's own
    // sampling floor.
    let mf_cloud = mf.empirical();
    let target_n = resample(target_cloud, n, noise_seed ^ 0xabcd_1234)?;
    let sampling_error =
        w1_assignment(&mf_cloud, &target_n, GroundMetric::SumSplit { split: 1 })?;
    let w1_to_grid = match grid_target {
        None => None,
        Some(density) => {
            // the grid lives on a torus centered at L/2; re-center and wrap
            let l = density.grid.length;
            let shift = l / 2.0 - experiment.initial.x_center;
            let mut flat = Vec::with_capacity(2 * n);
            for i in 0..n {
                flat.push((mf.positions[i] + shift).rem_euclid(l));
                flat.push(mf.velocities[i]);
            }
            let cloud = EmpiricalMeasure::uniform(flat, 2)?;
            let grid_cloud = density.sample_cloud(n, noise_seed ^ 0x6172);
            Some(w1_assignment(&cloud, &grid_cloud, GroundMetric::SumSplit { split: 1 })?)
        }
    };
    Ok(CoupledOutcome { coupling_error, sampling_error, w1_to_grid })
}

#[derive(Debug, Clone, Serialize)]
pub struct PerLevelStats {
    pub n: usize,
    pub mean_total: f64,
    pub sem_total: f64,
    pub mean_coupling: f64,
    pub sem_coupling: f64,
    pub mean_sampling: f64,
    /// Mean W1 to the kinetic grid target, when configured.
    pub mean_w1_to_grid: Option<f64>,
    pub fg_prediction_n1: f64,
    pub fg_prediction_n2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChaosSweep {
    pub levels: Vec<PerLevelStats>,
    pub fit_total: RateFit,
    pub fit_coupling: RateFit,
    /// Proxy self-distance: W1 between two independent matched-size resamples
    /// of the target at the largest ladder size, reported as an error bar.
    pub target_self_distance: f64,
    pub q: f64,
}

pub fn chaos_rate_sweep(experiment: &ChaosExperiment) -> Result<ChaosSweep, ChaosError> {
    use rayon::prelude::*;
    experiment.validate()?;
    let proxy = experiment.run_proxy()?;
    let target_cloud = proxy.final_ensemble.empirical();
    let laws = &proxy.per_step_laws;
    // the optional second target: kinetic solution with matching initial law
    let grid_target = match &experiment.kinetic_target {
        None => None,
        Some(spec) => {
            let grid = crate::meanfield::PhaseGrid {
                nx: spec.nx,
                nv: spec.nv,
                length: spec.length,
                v_box: spec.v_box_factor * experiment.trunc.v_m,
            };
            let law = experiment.initial;
            let d0 = crate::meanfield::PhaseDensity::from_fn(grid, 1e-3, |x, v| {
                let ux = (x - spec.length / 2.0) / law.x_width;
                let uv = v / law.v_width;
                if ux.abs() < 1.0 && uv.abs() < 1.0 {
                    (1.0 - ux * ux).powi(3) * (1.0 - uv * uv).powi(3)
                } else {
                    0.0
                }
            });
            let sol = crate::meanfield::solve_kinetic(
                &d0,
                &experiment.kernel,
                experiment.sigma,
                &experiment.trunc,
                experiment.horizon,
                &[experiment.horizon],
                experiment.q,
            )
            .map_err(|e| ChaosError::Invalid(format!("kinetic target failed: {e}")))?;
            Some(sol.snapshots.last().expect("final snapshot").1.clone())
        }
    };
    let mut levels = Vec::new();
    for &n in &experiment.n_ladder {
        // replicas are independent; aggregate in fixed order
        let outcomes: Result<Vec<CoupledOutcome>, ChaosError> = (0..experiment.replicas)
            .into_par_iter()
            .map(|r| coupled_error(experiment, n, r + 1, laws, &target_cloud, grid_target.as_ref()))
            .collect();
        let outcomes = outcomes?;
        let totals: Vec<f64> =
            outcomes.iter().map(|o| o.coupling_error + o.sampling_error).collect();
        let couplings: Vec<f64> = outcomes.iter().map(|o| o.coupling_error).collect();
        let samplings: Vec<f64> = outcomes.iter().map(|o| o.sampling_error).collect();
        let (mean_total, sem_total) = mean_sem(&totals);
        let (mean_coupling, sem_coupling) = mean_sem(&couplings);
        let (mean_sampling, _) = mean_sem(&samplings);
        let mean_w1_to_grid = grid_target.as_ref().map(|_| {
            let vals: Vec<f64> = outcomes.iter().filter_map(|o| o.w1_to_grid).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        });
        let model1 = RateModel::new(1.0, 1, experiment.q, 1.0)?;
        let model2 = RateModel::new(1.0, 2, experiment.q, 1.0)?;
        levels.push(PerLevelStats {
            n,
            mean_total,
            sem_total,
            mean_coupling,
            sem_coupling,
            mean_sampling,
            mean_w1_to_grid,
            fg_prediction_n1: fg_rate(&model1, n as u64)?,
            fg_prediction_n2: fg_rate(&model2, n as u64)?,
        });
    }
    let ns: Vec<f64> = levels.iter().map(|l| l.n as f64).collect();
    let totals: Vec<f64> = levels.iter().map(|l| l.mean_total).collect();
    let couplings: Vec<f64> = levels.iter().map(|l| l.mean_coupling.max(1e-300)).collect();
    let (s, i, e) = log_log_fit(&ns, &totals);
    let fit_total = RateFit { slope: s, intercept: i, stderr: e };
    let (s, i, e) = log_log_fit(&ns, &couplings);
    let fit_coupling = RateFit { slope: s, intercept: i, stderr: e };
    let n_top = *experiment.n_ladder.last().unwrap();
    let a = resample(&target_cloud, n_top, experiment.seed ^ 0x5151)?;
    let b = resample(&target_cloud, n_top, experiment.seed ^ 0x2626)?;
    let target_self_distance = w1_assignment(&a, &b, GroundMetric::SumSplit { split: 1 })?;
    Ok(ChaosSweep { levels, fit_total, fit_coupling, target_self_distance, q: experiment.q })
}

fn mean_sem(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

// ---------------------------------------------------------------------------
// Appendix-style law-of-large-numbers checks.

/// Empirical boundary-layer discrepancy: for probe phase points `(Y, W)` from
/// the reference, the sup over enlargement radii of the difference between
/// the N-sample and reference masses of `{y : y - Y in Theta(W)^{u,+}}`.
#[derive(Debug, Clone, Serialize)]
pub struct DiscrepancyStat {
    pub mean_sup: f64,
    pub max_sup: f64,
    pub probes: usize,
}

pub fn boundary_discrepancy_sup(
    f_samples: &EmpiricalMeasure,
    reference: &EmpiricalMeasure,
    theta: &ThetaFamily,
    u_grid: &[f64],
    probes: usize,
    seed: u64,
) -> Result<DiscrepancyStat, ChaosError> {
    if u_grid.is_empty() || u_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ChaosError::Invalid("u_grid must be nonempty and increasing".into()));
    }
    let dim = reference.dim() / 2;
    if f_samples.dim() != reference.dim() {
        return Err(ChaosError::Invalid("sample/reference dimension mismatch".into()));
    }
    let rng = CounterRng::new(seed);
    let mut sups = Vec::with_capacity(probes);
    let mut delta = vec![0.0; dim];
    for p in 0..probes {
        // probe drawn from the reference cloud
        let idx = (rng.raw(p as u64) % reference.len() as u64) as usize;
        let probe = reference.point(idx);
        let (py, pw) = (&probe[..dim], &probe[dim..]);
        let mut count_n = vec![0usize; u_grid.len()];
        let mut count_ref = vec![0usize; u_grid.len()];
        let mut tally = |m: &EmpiricalMeasure, counts: &mut [usize]| {
            for i in 0..m.len() {
                let pt = m.point(i);
                for (c, d) in delta.iter_mut().zip(&pt[..dim]) {
                    // d runs over the position block
                    *c = *d;
                }
                for (c, y) in delta.iter_mut().zip(py) {
                    *c -= y;
                }
                let dist = theta.distance(pw, &delta);
                // first grid radius covering this distance
                let k0 = u_grid.partition_point(|u| *u < dist);
                for c in counts.iter_mut().skip(k0) {
                    *c += 1;
                }
            }
        };
        tally(f_samples, &mut count_n);
        tally(reference, &mut count_ref);
        let sup = (0..u_grid.len())
            .map(|k| {
                (count_n[k] as f64 / f_samples.len() as f64
                    - count_ref[k] as f64 / reference.len() as f64)
                    .abs()
            })
            .fold(0.0, f64::max);
        sups.push(sup);
    }
    let mean_sup = sups.iter().sum::<f64>() / probes as f64;
    let max_sup = sups.iter().cloned().fold(0.0, f64::max);
    Ok(DiscrepancyStat { mean_sup, max_sup, probes })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub levels: Vec<(usize, f64, f64)>,
    pub slope: f64,
    pub stderr: f64,
}

/// Ladder of boundary discrepancies with `mu_N` resampled from the reference;
/// fits the decay exponent (expected -1/2).
#[allow(clippy::too_many_arguments)]
pub fn discrepancy_ladder(
    reference: &EmpiricalMeasure,
    theta: &ThetaFamily,
    u_grid: &[f64],
    ladder: &[usize],
    replicas: usize,
    probes: usize,
    seed: u64,
) -> Result<DecayFit, ChaosError> {
    let mut levels = Vec::new();
    for (li, &n) in ladder.iter().enumerate() {
        let stats: Result<Vec<f64>, ChaosError> = (0..replicas)
            .map(|r| {
                let s = seed ^ ((li * 1000 + r + 1) as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                let mu_n = resample(reference, n, s)?;
                Ok(boundary_discrepancy_sup(&mu_n, reference, theta, u_grid, probes, s ^ 0xfeed)?
                    .mean_sup)
            })
            .collect();
        let stats = stats?;
        let (mean, sem) = mean_sem(&stats);
        levels.push((n, mean, sem));
    }
    let ns: Vec<f64> = levels.iter().map(|l| l.0 as f64).collect();
    let ms: Vec<f64> = levels.iter().map(|l| l.1).collect();
    let (slope, _, stderr) = log_log_fit(&ns, &ms);
    Ok(DecayFit { levels, slope, stderr })
}

/// Bounded interaction kernels for the law-of-large-numbers scaling check
/// (all vanish at zero offset, so the self term drops).
#[derive(Debug, Clone)]
pub enum LlnKernel {
    Zero,
    /// `h(probe; y, w) = -1_{K(W_probe)}(Y_probe - y) (W_probe - w)`, the
    /// alignment-force integrand.
    AlignmentIndicator(crate::geometry::SensitivityRegion),
    /// Smooth comparison kernel `tanh(Y_probe - y)`.
    Tanh,
}

impl LlnKernel {
    fn eval(&self, probe: &[f64], sample: &[f64]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Tanh => {
                if probe[0] == sample[0] && probe[1] == sample[1] {
                    return 0.0;
                }
                (probe[0] - sample[0]).tanh()
            }
            Self::AlignmentIndicator(region) => {
                let delta = [sample[0] - probe[0]];
                let w = [probe[1]];
                if region.contains(&w, &delta) {
                    -(probe[1] - sample[1])
                } else {
                    0.0
                }
            }
        }
    }
}

/// Estimate `E | (1/N) sum_j h(probe, sample_j) - E_ref h |` on a ladder of
/// sample counts and fit the decay exponent.
pub fn kernel_lln_check(
    kernel: &LlnKernel,
    law: &InitialLaw,
    ladder: &[usize],
    replicas: usize,
    reference_size: usize,
    seed: u64,
) -> Result<DecayFit, ChaosError> {
    let root = CounterRng::new(seed);
    let reference = law.sample(reference_size, &root.stream(0));
    let mut levels = Vec::new();
    for (li, &n) in ladder.iter().enumerate() {
        let mut stats = Vec::with_capacity(replicas);
        for r in 0..replicas {
            let stream = root.stream((li * 10_000 + r + 1) as u64);
            let cloud = law.sample(n, &stream);
            let probe = [cloud.positions[0], cloud.velocities[0]];
            let emp: f64 = (0..n)
                .map(|j| kernel.eval(&probe, &[cloud.positions[j], cloud.velocities[j]]))
                .sum::<f64>()
                / n as f64;
            let truth: f64 = (0..reference.n())
                .map(|j| kernel.eval(&probe, &[reference.positions[j], reference.velocities[j]]))
                .sum::<f64>()
                / reference.n() as f64;
            stats.push((emp - truth).abs());
        }
        let (mean, sem) = mean_sem(&stats);
        levels.push((n, mean, sem));
    }
    if matches!(kernel, LlnKernel::Zero) {
        // degenerate: the statistic is identically zero, no slope to fit
        return Ok(DecayFit { levels, slope: 0.0, stderr: 0.0 });
    }
    let ns: Vec<f64> = levels.iter().map(|l| l.0 as f64).collect();
    let ms: Vec<f64> = levels.iter().map(|l| l.1.max(1e-300)).collect();
    let (slope, _, stderr) = log_log_fit(&ns, &ms);
    Ok(DecayFit { levels, slope, stderr })
}
