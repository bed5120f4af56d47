//! Subcommand driver: wires the modules into reproducible experiments and
//! writes all tables and figure data to disk. Every run echoes its fully
//! materialized config; replays are byte-identical. The process exits
//! nonzero iff a declared threshold in the config is violated.

use crate::chaos::{
    chaos_rate_sweep, discrepancy_ladder, kernel_lln_check, ChaosExperiment, InitialLaw,
    LlnKernel,
};
use crate::config::{ExperimentKind, MeanfieldMode, RunConfig};
use crate::geometry::{
    mollified::bump_quantile_1d, rope_bound_check, verify_h2, SensitivityRegion, ThetaFamily,
};
use crate::meanfield::{nonlinear_sde_proxy, solve_kinetic, PhaseDensity, PhaseGrid};
use crate::rng::CounterRng;
use crate::sde::{simulate, DiffusionTruncation, ParticleEnsemble, SimParams};
use crate::transport::{
    w1_assignment, w1_exhaustive, w1_sorted_1d, EmpiricalMeasure, GroundMetric,
};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "chaosflock", version, about = "Stochastic flocking laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the interacting particle system and write trajectories.
    Simulate(CommonArgs),
    /// Run the kinetic solver or the sampled mean-field proxy.
    Meanfield(CommonArgs),
    /// Propagation-of-chaos rate sweep over a ladder of particle counts.
    Chaos(CommonArgs),
    /// Geometry and transport verification report.
    Verify(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default ./out; env CHAOSFLOCK_OUT wins).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's top-level seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    threads: Option<usize>,
}

pub fn run() -> Result<()> {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Simulate(a) => (ExperimentKind::Simulate, a),
        Command::Meanfield(a) => (ExperimentKind::Meanfield, a),
        Command::Chaos(a) => (ExperimentKind::Chaos, a),
        Command::Verify(a) => (ExperimentKind::Verify, a),
    };
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            RunConfig::from_json(&text).map_err(|e| anyhow::anyhow!("config error: {e}"))?
        }
        None => RunConfig::defaults(kind),
    };
    if cfg.experiment != kind {
        bail!(
            "config declares experiment {:?} but the {:?} subcommand was invoked",
            cfg.experiment,
            kind
        );
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = args.threads {
        cfg.threads = Some(threads);
    }
    let out_dir = std::env::var_os("CHAOSFLOCK_OUT")
        .map(PathBuf::from)
        .or_else(|| args.out.clone())
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    if let Some(threads) = cfg.threads {
        // Ignore the error if a global pool already exists (e.g. repeat runs
        // inside one process).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let checks = execute(&cfg, &out_dir)?;
    let mut failed = 0;
    for c in &checks {
        let status = if c.passed { "ok" } else { "FAIL" };
        eprintln!("check {:<28} {} ({})", c.name, status, c.detail);
        if !c.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        bail!("{failed} declared threshold(s) violated; see summary.json");
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name: name.to_string(), passed, detail }
}

/// Run the configured experiment into `out_dir`, returning threshold checks.
pub fn execute(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<CheckOutcome>> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output dir {}", out_dir.display()))?;
    write_text(out_dir, "config.echo.json", &cfg.echo_json())?;
    let checks = match cfg.experiment {
        ExperimentKind::Simulate => cmd_simulate(cfg, out_dir)?,
        ExperimentKind::Meanfield => cmd_meanfield(cfg, out_dir)?,
        ExperimentKind::Chaos => cmd_chaos(cfg, out_dir)?,
        ExperimentKind::Verify => cmd_verify(cfg, out_dir)?,
    };
    Ok(checks)
}

fn write_text(dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, content).with_context(|| format!("cannot write {}", path.display()))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    write_text(dir, name, &serde_json::to_string_pretty(value)?)
}

/// Product-bump initial data in `dim` dimensions with speeds below `v_width`.
pub fn sample_initial_ensemble(
    n: usize,
    dim: usize,
    x_width: f64,
    v_width: f64,
    seed: u64,
) -> ParticleEnsemble {
    let rng = CounterRng::new(seed).stream(0x1217);
    let mut pos = Vec::with_capacity(n * dim);
    let mut vel = Vec::with_capacity(n * dim);
    let comp_scale = v_width / (dim as f64).sqrt();
    for i in 0..n {
        let s = rng.stream(i as u64);
        for c in 0..dim {
            pos.push(x_width * bump_quantile_1d(s.uniform(2 * c as u64)));
            vel.push(comp_scale * bump_quantile_1d(s.uniform(2 * c as u64 + 1)));
        }
    }
    ParticleEnsemble::new(pos, vel, dim).expect("bump samples are finite")
}

fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<CheckOutcome>> {
    let sim = &cfg.sim;
    let kernel = cfg.kernel().map_err(|e| anyhow::anyhow!(e))?;
    if sim.v_width > sim.v_m {
        bail!("initial speed scale v_width={} exceeds v_m={}", sim.v_width, sim.v_m);
    }
    let trunc = DiffusionTruncation::new(sim.v_m);
    let mut params = SimParams::new(sim.sigma, sim.dt, sim.t_end, cfg.seed, &trunc, kernel.eps);
    params.record_boundary_events = sim.record_boundary_events;
    params.x_period = sim.x_period;
    let initial = sample_initial_ensemble(sim.n, sim.dim, sim.x_width, sim.v_width, cfg.seed);
    let summary = simulate(&initial, &params, &trunc, &kernel, &sim.snapshot_times)?;

    let mut csv = String::from("t,particle_id");
    for c in 0..sim.dim {
        write!(csv, ",x_{}", c + 1)?;
    }
    for c in 0..sim.dim {
        write!(csv, ",v_{}", c + 1)?;
    }
    csv.push('\n');
    for (t, snap) in &summary.snapshots {
        for i in 0..snap.n() {
            write!(csv, "{t},{i}")?;
            for c in snap.position(i) {
                write!(csv, ",{c}")?;
            }
            for c in snap.velocity(i) {
                write!(csv, ",{c}")?;
            }
            csv.push('\n');
        }
    }
    write_text(out, "trajectory.csv", &csv)?;

    let mut ev = String::from("t,i,j,dist_to_theta\n");
    for (t, e) in &summary.boundary_log {
        writeln!(ev, "{t},{},{},{}", e.i, e.j, e.dist)?;
    }
    write_text(out, "boundary_events.csv", &ev)?;

    let mut checks = Vec::new();
    if let Some(limit) = cfg.thresholds.max_speed {
        checks.push(check(
            "max_speed",
            summary.max_speed_seen <= limit,
            format!("{} <= {limit}", summary.max_speed_seen),
        ));
    }
    #[derive(Serialize)]
    struct SimSummary<'a> {
        n: usize,
        dim: usize,
        steps: u64,
        max_speed: f64,
        final_time: f64,
        boundary_events: usize,
        checks: &'a [CheckOutcome],
    }
    write_json(
        out,
        "summary.json",
        &SimSummary {
            n: sim.n,
            dim: sim.dim,
            steps: summary.steps,
            max_speed: summary.max_speed_seen,
            final_time: summary.final_ensemble.time,
            boundary_events: summary.boundary_log.len(),
            checks: &checks,
        },
    )?;
    Ok(checks)
}

/// Centered product-bump density on the configured grid.
pub fn centered_density(block: &crate::config::MeanfieldBlock, v_m: f64) -> PhaseDensity {
    let grid = PhaseGrid {
        nx: block.nx,
        nv: block.nv,
        length: block.length,
        v_box: block.v_box_factor * v_m,
    };
    let (cx, wx, wv) = (block.length / 2.0, block.x_width, block.v_width);
    PhaseDensity::from_fn(grid, 1e-3, |x, v| {
        let ux = (x - cx) / wx;
        let uv = v / wv;
        if ux.abs() < 1.0 && uv.abs() < 1.0 {
            (1.0 - ux * ux).powi(3) * (1.0 - uv * uv).powi(3)
        } else {
            0.0
        }
    })
}

fn cmd_meanfield(cfg: &RunConfig, out: &Path) -> Result<Vec<CheckOutcome>> {
    let block = &cfg.meanfield;
    let kernel = cfg.kernel().map_err(|e| anyhow::anyhow!(e))?;
    if matches!(kernel.region, SensitivityRegion::VisionCone { .. }) {
        bail!("the d = 1 grid solver needs a ball region (cones degenerate in 1d)");
    }
    let trunc = DiffusionTruncation::new(cfg.sim.v_m);
    let mut checks = Vec::new();
    match block.mode {
        MeanfieldMode::Kinetic => {
            let d0 = centered_density(block, cfg.sim.v_m);
            let sol = solve_kinetic(
                &d0,
                &kernel,
                block.sigma,
                &trunc,
                block.t_end,
                &block.snapshot_times,
                block.moment_q,
            )?;
            for (idx, (t, d)) in sol.snapshots.iter().enumerate() {
                let mut csv = String::from("x_index,v_index,value\n");
                for m in 0..d.grid.nv {
                    for j in 0..d.grid.nx {
                        writeln!(csv, "{j},{m},{}", d.value(j, m))?;
                    }
                }
                write_text(out, &format!("density_{idx:03}_t{t:.4}.csv"), &csv)?;
            }
            write_json(out, "ledger.json", &sol.ledger)?;
            let mass_drift = sol
                .ledger
                .entries
                .iter()
                .map(|e| (e.mass - 1.0).abs())
                .fold(0.0, f64::max);
            let momentum_drift = {
                let p0 = sol.ledger.entries[0].momentum;
                sol.ledger.entries.iter().map(|e| (e.momentum - p0).abs()).fold(0.0, f64::max)
            };
            if let Some(tol) = cfg.thresholds.mass_drift {
                checks.push(check("mass_drift", mass_drift <= tol, format!("{mass_drift} <= {tol}")));
            }
            if let Some(tol) = cfg.thresholds.momentum_drift {
                checks.push(check(
                    "momentum_drift",
                    momentum_drift <= tol,
                    format!("{momentum_drift} <= {tol}"),
                ));
            }
            #[derive(Serialize)]
            struct KineticSummary<'a> {
                steps: u64,
                envelope_constant: f64,
                mass_drift: f64,
                momentum_drift: f64,
                checks: &'a [CheckOutcome],
            }
            write_json(
                out,
                "summary.json",
                &KineticSummary {
                    steps: sol.steps,
                    envelope_constant: sol.envelope_constant,
                    mass_drift,
                    momentum_drift,
                    checks: &checks,
                },
            )?;
        }
        MeanfieldMode::Proxy => {
            let law = InitialLaw {
                x_center: block.length / 2.0,
                x_width: block.x_width,
                v_width: block.v_width,
            };
            let initial = law.sample(block.m_samples, &CounterRng::new(cfg.seed));
            let mut params =
                SimParams::new(block.sigma, block.dt_proxy, block.t_end, cfg.seed, &trunc, kernel.eps);
            params.x_period = Some(block.length);
            let traj = nonlinear_sde_proxy(
                &initial,
                &params,
                &trunc,
                &kernel,
                block.refresh_every,
                &block.snapshot_times,
                false,
            )?;
            let mut csv = String::from("t,sample_id,x,v\n");
            for (t, snap) in &traj.snapshots {
                for i in 0..snap.n() {
                    writeln!(csv, "{t},{i},{},{}", snap.positions[i], snap.velocities[i])?;
                }
            }
            write_text(out, "proxy_snapshots.csv", &csv)?;
            #[derive(Serialize)]
            struct ProxySummary<'a> {
                m_samples: usize,
                final_time: f64,
                max_speed: f64,
                checks: &'a [CheckOutcome],
            }
            write_json(
                out,
                "summary.json",
                &ProxySummary {
                    m_samples: block.m_samples,
                    final_time: traj.final_ensemble.time,
                    max_speed: traj.final_ensemble.max_speed(),
                    checks: &checks,
                },
            )?;
        }
    }
    Ok(checks)
}

fn cmd_chaos(cfg: &RunConfig, out: &Path) -> Result<Vec<CheckOutcome>> {
    let block = &cfg.chaos;
    let kernel = cfg.kernel().map_err(|e| anyhow::anyhow!(e))?;
    if !matches!(kernel.region, SensitivityRegion::FixedBall { .. }) {
        bail!("the chaos sweep runs the d = 1 system and needs a fixed-ball region");
    }
    let experiment = ChaosExperiment {
        n_ladder: block.n_ladder.clone(),
        replicas: block.replicas,
        horizon: block.horizon,
        dt: block.dt,
        sigma: block.sigma,
        seed: cfg.seed,
        proxy_samples: block.m_proxy,
        proxy_refresh: block.refresh_every,
        kernel,
        trunc: DiffusionTruncation::new(cfg.sim.v_m),
        q: block.q,
        initial: block.initial_law(),
        kinetic_target: block.kinetic_target,
    };
    let sweep = chaos_rate_sweep(&experiment)?;
    let mut csv =
        String::from("N,t,mean_coupling_error,stderr,w1_to_target,fg_prediction\n");
    for level in &sweep.levels {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            level.n,
            block.horizon,
            level.mean_coupling,
            level.sem_coupling,
            level.mean_sampling,
            level.fg_prediction_n2
        )?;
    }
    write_text(out, "rates.csv", &csv)?;
    let mut checks = Vec::new();
    if let Some((lo, hi)) = cfg.thresholds.slope_band {
        let s = sweep.fit_total.slope;
        checks.push(check("slope_band", s >= lo && s <= hi, format!("{s} in [{lo}, {hi}]")));
    }
    #[derive(Serialize)]
    struct FitSummary<'a> {
        slope: f64,
        stderr: f64,
        intercept: f64,
        coupling_slope: f64,
        q: f64,
        /// rate-case tags for both sampling-dimension readings
        case_n1: &'a str,
        case_n2: &'a str,
        target_self_distance: f64,
        levels: &'a [crate::chaos::PerLevelStats],
        checks: &'a [CheckOutcome],
    }
    write_json(
        out,
        "fit.json",
        &FitSummary {
            slope: sweep.fit_total.slope,
            stderr: sweep.fit_total.stderr,
            intercept: sweep.fit_total.intercept,
            coupling_slope: sweep.fit_coupling.slope,
            q: sweep.q,
            case_n1: "2p > n: N^{-1/2} + N^{-(q-1)/q}",
            case_n2: "2p = n: N^{-1/2} log(1+N) + N^{-(q-1)/q}",
            target_self_distance: sweep.target_self_distance,
            levels: &sweep.levels,
            checks: &checks,
        },
    )?;
    Ok(checks)
}

fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<Vec<CheckOutcome>> {
    let block = &cfg.verify;
    let theta = cfg.theta_family();
    let dim = match cfg.region.region {
        SensitivityRegion::VisionCone { dim, .. } => dim,
        _ => block.dim,
    };
    let report = verify_h2(&theta, dim, block.h2_samples, cfg.seed);
    // ablation: for cones, dropping the rear segment must be witnessed
    let ablated = matches!(cfg.region.region, SensitivityRegion::VisionCone { .. }).then(|| {
        let fam = ThetaFamily::without_segment(theta.region, theta.c);
        verify_h2(&fam, dim, block.h2_samples, cfg.seed)
    });

    // rope inequality sampling
    let rng = CounterRng::new(cfg.seed).stream(0x0709);
    let mut rope_failures = 0u64;
    for k in 0..block.rope_samples {
        let g = |j: u64| 3.0 * (rng.uniform(10 * k + j) - 0.5);
        let (x1, y1) = ([g(0), g(1)], [g(2), g(3)]);
        let (x2, y2) = ([g(4), g(5)], [g(6), g(7)]);
        let v = [g(8), g(9)];
        if !rope_bound_check(&cfg.region.region, &x1, &y1, &x2, &y2, &v) {
            rope_failures += 1;
        }
    }

    // W1 assignment vs factorial oracle and sorted-1d cross-checks
    let wrng = CounterRng::new(cfg.seed).stream(0x3731);
    let mut max_dev_bruteforce = 0.0f64;
    for t in 0..block.w1_instances {
        let s = wrng.stream(t as u64);
        let mk = |off: u64| {
            let flat: Vec<f64> = (0..12).map(|k| 4.0 * (s.uniform(off + k) - 0.5)).collect();
            EmpiricalMeasure::uniform(flat, 2).unwrap()
        };
        let (a, b) = (mk(0), mk(100));
        let fast = w1_assignment(&a, &b, GroundMetric::Euclidean)?;
        let brute = w1_exhaustive(&a, &b, GroundMetric::Euclidean)?;
        max_dev_bruteforce = max_dev_bruteforce.max((fast - brute).abs());
    }
    let mut max_dev_sorted = 0.0f64;
    for t in 0..200 {
        let s = wrng.stream(1000 + t as u64);
        let n = 2 + (s.raw(0) % 9) as usize;
        let mk = |off: u64| {
            let flat: Vec<f64> = (0..n).map(|k| 4.0 * (s.uniform(off + k as u64) - 0.5)).collect();
            EmpiricalMeasure::uniform(flat, 1).unwrap()
        };
        let (a, b) = (mk(1), mk(500));
        let fast = w1_assignment(&a, &b, GroundMetric::Euclidean)?;
        let sorted = w1_sorted_1d(&a, &b)?;
        max_dev_sorted = max_dev_sorted.max((fast - sorted).abs());
    }

    // LLN decay fits
    let law = InitialLaw { x_center: 0.0, x_width: 1.0, v_width: 0.8 };
    let lln_tanh = kernel_lln_check(
        &LlnKernel::Tanh,
        &law,
        &block.lln_ladder,
        block.lln_replicas,
        16_384,
        cfg.seed ^ 0x11,
    )?;
    let lln_align = kernel_lln_check(
        &LlnKernel::AlignmentIndicator(SensitivityRegion::FixedBall { r: 0.75 }),
        &law,
        &block.lln_ladder,
        block.lln_replicas,
        16_384,
        cfg.seed ^ 0x12,
    )?;
    // boundary discrepancy ladder against a smooth 2d reference
    let reference = gaussian_phase_cloud_2d(8192, cfg.seed ^ 0x13);
    let u_grid: Vec<f64> = (0..16).map(|k| 0.02 * 1.5f64.powi(k)).collect();
    let cone = SensitivityRegion::VisionCone {
        r: 1.0,
        theta: crate::geometry::ThetaProfile { theta_star: std::f64::consts::PI / 4.0, kappa: 1.0 },
        dim: 2,
    };
    let disc_theta = ThetaFamily::new(cone, ThetaFamily::default_constant(&cone));
    let disc = discrepancy_ladder(
        &reference,
        &disc_theta,
        &u_grid,
        &block.lln_ladder,
        block.lln_replicas,
        16,
        cfg.seed ^ 0x14,
    )?;

    let mut checks = Vec::new();
    if cfg.thresholds.require_h2_clean.unwrap_or(false) {
        checks.push(check(
            "h2_clean",
            report.violations.is_empty(),
            format!("{} violations", report.violations.len()),
        ));
        if let Some(ab) = &ablated {
            checks.push(check(
                "h2_ablation_witnessed",
                !ab.violations.is_empty(),
                format!("{} ablated violations", ab.violations.len()),
            ));
        }
    }
    checks.push(check("rope_inequality", rope_failures == 0, format!("{rope_failures} failures")));
    checks.push(check(
        "w1_oracle_agreement",
        max_dev_bruteforce <= 1e-10 && max_dev_sorted <= 1e-10,
        format!("brute {max_dev_bruteforce:.2e}, sorted {max_dev_sorted:.2e}"),
    ));

    #[derive(Serialize)]
    struct VerifyReport<'a> {
        h2_max_ratio_ii: f64,
        h2_worst_ratio_iii: f64,
        h2_worst_ratio_iv: f64,
        h2_violations: usize,
        h2_suggested_constant: f64,
        h2_configured_constant: f64,
        h2_ablated_violations: Option<usize>,
        rope_samples: u64,
        rope_failures: u64,
        w1_bruteforce_max_dev: f64,
        w1_sorted_max_dev: f64,
        lln_tanh_slope: f64,
        lln_alignment_slope: f64,
        discrepancy_slope: f64,
        checks: &'a [CheckOutcome],
    }
    write_json(
        out,
        "verification_report.json",
        &VerifyReport {
            h2_max_ratio_ii: report.max_ratio_ii,
            h2_worst_ratio_iii: report.worst_ratio_iii,
            h2_worst_ratio_iv: report.worst_ratio_iv,
            h2_violations: report.violations.len(),
            h2_suggested_constant: report.suggested_constant(),
            h2_configured_constant: report.configured_c,
            h2_ablated_violations: ablated.as_ref().map(|a| a.violations.len()),
            rope_samples: block.rope_samples,
            rope_failures,
            w1_bruteforce_max_dev: max_dev_bruteforce,
            w1_sorted_max_dev: max_dev_sorted,
            lln_tanh_slope: lln_tanh.slope,
            lln_alignment_slope: lln_align.slope,
            discrepancy_slope: disc.slope,
            checks: &checks,
        },
    )?;
    Ok(checks)
}

/// Smooth reference phase cloud in d = 2: Gaussian positions, velocities
/// uniform on a disk inside the speed cap.
pub fn gaussian_phase_cloud_2d(m: usize, seed: u64) -> EmpiricalMeasure {
    let rng = CounterRng::new(seed);
    let mut flat = Vec::with_capacity(4 * m);
    for k in 0..m {
        let s = rng.stream(k as u64);
        flat.push(1.2 * s.standard_normal(0));
        flat.push(1.2 * s.standard_normal(1));
        let r = 0.9 * s.uniform(2).sqrt();
        let a = 2.0 * std::f64::consts::PI * s.uniform(3);
        flat.push(r * a.cos());
        flat.push(r * a.sin());
    }
    EmpiricalMeasure::uniform(flat, 4).expect("finite cloud")
}
