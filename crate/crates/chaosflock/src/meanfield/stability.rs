//! Weak-strong stability experiment: evolve two initial densities with the
//! same kernel and compare their Wasserstein distance against the
//! exponential envelope `W1(0) * exp(int ||f_s|| ds)` built from the norm
//! ledger of the first run.

use super::grid::PhaseDensity;
use super::solver::{solve_kinetic, GridError, KineticSolution};
use crate::geometry::MollifiedKernel;
use crate::sde::DiffusionTruncation;
use crate::transport::{w1_assignment, GroundMetric};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub times: Vec<f64>,
    pub w1: Vec<f64>,
    pub envelope: Vec<f64>,
    /// Effective exponential rate fitted from the norm ledger,
    /// `(1/T) int max(1, ||f_s||_inf) ds`.
    pub c_fit: f64,
    pub violations: usize,
    pub samples: usize,
}

pub struct StabilityOutput {
    pub report: StabilityReport,
    pub run_a: KineticSolution,
    pub run_b: KineticSolution,
}

pub fn stability_experiment(
    f0_a: &PhaseDensity,
    f0_b: &PhaseDensity,
    kernel: &MollifiedKernel,
    sigma: f64,
    trunc: &DiffusionTruncation,
    horizon: f64,
    checkpoints: usize,
    samples: usize,
    seed: u64,
) -> Result<StabilityOutput, GridError> {
    let times: Vec<f64> =
        (0..=checkpoints).map(|k| horizon * k as f64 / checkpoints as f64).collect();
    let run_a = solve_kinetic(f0_a, kernel, sigma, trunc, horizon, &times, 4.0)?;
    let run_b = solve_kinetic(f0_b, kernel, sigma, trunc, horizon, &times, 4.0)?;
    if run_a.snapshots.len() != times.len() || run_b.snapshots.len() != times.len() {
        return Err(GridError::Invalid("snapshot bookkeeping mismatch".into()));
    }
    // Checkpoint clouds share a seed per time, so identical densities give
    // identical samples and W1 exactly zero.
    let mut w1 = Vec::with_capacity(times.len());
    for (k, _) in times.iter().enumerate() {
        let ca = run_a.snapshots[k].1.sample_cloud(samples, seed.wrapping_add(k as u64));
        let cb = run_b.snapshots[k].1.sample_cloud(samples, seed.wrapping_add(k as u64));
        w1.push(w1_assignment(&ca, &cb, GroundMetric::SumSplit { split: 1 })?);
    }
    // cumulative trapezoid of max(1, linf_a) over the checkpoint ledger
    let ledger = &run_a.ledger.entries;
    let mut envelope = Vec::with_capacity(times.len());
    let mut integral = 0.0;
    envelope.push(w1[0]);
    for k in 1..times.len() {
        let (t0, t1) = (ledger[k - 1].t, ledger[k].t);
        let (g0, g1) = (ledger[k - 1].linf.max(1.0), ledger[k].linf.max(1.0));
        integral += 0.5 * (g0 + g1) * (t1 - t0);
        envelope.push(w1[0] * integral.exp());
    }
    let c_fit = if horizon > 0.0 { integral / horizon } else { 0.0 };
    let violations = (1..times.len()).filter(|&k| w1[k] > envelope[k] * (1.0 + 1e-9)).count();
    Ok(StabilityOutput {
        report: StabilityReport { times, w1, envelope, c_fit, violations, samples },
        run_a,
        run_b,
    })
}
