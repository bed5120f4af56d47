//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! (run with `--nocapture` to see them). Tolerances are pinned here, not
//! configurable.

use chaosflock::chaos::{
    chaos_rate_sweep, discrepancy_ladder, ChaosExperiment, InitialLaw,
};
use chaosflock::cli::gaussian_phase_cloud_2d;
use chaosflock::geometry::{
    ball_l1_smoothing_error, verify_h2, MollifiedKernel, SensitivityRegion, ThetaFamily,
    ThetaProfile,
};
use chaosflock::meanfield::{solve_kinetic, stability_experiment, PhaseDensity, PhaseGrid};
use chaosflock::rng::CounterRng;
use chaosflock::sde::{simulate, DiffusionTruncation, ParticleEnsemble, SimParams};
use chaosflock::transport::{
    log_log_fit, w1_assignment, w1_exhaustive, w1_sorted_1d, EmpiricalMeasure, GroundMetric,
};
use std::f64::consts::PI;

const L: f64 = 2.0 * PI;

fn bump(u: f64) -> f64 {
    if u.abs() < 1.0 {
        (1.0 - u * u).powi(3)
    } else {
        0.0
    }
}

fn report(criterion: &str, passed: bool, detail: &str) {
    println!("criterion {criterion}: {} -- {detail}", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "criterion {criterion} failed: {detail}");
}

/// Criterion 1: almost-sure speed bound of the truncated-diffusion system.
/// 64 seeds, N = 32, d = 2, sigma = 0.1, V_m = 1, dt = 1e-3, 1e4 steps:
/// max recorded speed <= 1 + 2 V_m dt on every run.
#[test]
fn criterion_1_speed_bound() {
    let v_m = 1.0;
    let dt = 1e-3;
    let trunc = DiffusionTruncation::new(v_m);
    let kernel = MollifiedKernel::new(SensitivityRegion::FixedBall { r: 1.0 }, 0.05, 0.05).unwrap();
    let allowed = v_m + 2.0 * v_m * dt;
    let mut worst: f64 = 0.0;
    for seed in 0..64u64 {
        let initial = chaosflock::cli::sample_initial_ensemble(32, 2, 1.0, 0.9, 1000 + seed);
        let mut params = SimParams::new(0.1, dt, 10.0, seed, &trunc, kernel.eps);
        params.record_boundary_events = false;
        let summary = simulate(&initial, &params, &trunc, &kernel, &[]).unwrap();
        worst = worst.max(summary.max_speed_seen);
        assert!(
            summary.max_speed_seen <= allowed,
            "seed {seed}: {} > {allowed}",
            summary.max_speed_seen
        );
    }
    report(
        "1 (speed bound)",
        worst <= allowed,
        &format!("max speed over 64 seeds {worst:.6} <= {allowed:.6}"),
    );
}

/// Criterion 2: the assignment solver agrees with the factorial oracle on 50
/// random M = 6, k = 2 instances and with the sorted-1d path on 200 random 1d
/// instances, both to 1e-10.
#[test]
fn criterion_2_w1_oracles() {
    let rng = CounterRng::new(808);
    let mut max_dev_brute = 0.0f64;
    for t in 0..50u64 {
        let s = rng.stream(t);
        let mk = |off: u64| {
            let flat: Vec<f64> = (0..12).map(|k| 4.0 * (s.uniform(off + k) - 0.5)).collect();
            EmpiricalMeasure::uniform(flat, 2).unwrap()
        };
        let (a, b) = (mk(0), mk(100));
        let fast = w1_assignment(&a, &b, GroundMetric::Euclidean).unwrap();
        let brute = w1_exhaustive(&a, &b, GroundMetric::Euclidean).unwrap();
        max_dev_brute = max_dev_brute.max((fast - brute).abs());
    }
    let mut max_dev_sorted = 0.0f64;
    for t in 0..200u64 {
        let s = rng.stream(1000 + t);
        let n = 2 + (s.raw(0) % 9) as usize;
        let mk = |off: u64| {
            let flat: Vec<f64> =
                (0..n).map(|k| 4.0 * (s.uniform(off + k as u64) - 0.5)).collect();
            EmpiricalMeasure::uniform(flat, 1).unwrap()
        };
        let (a, b) = (mk(1), mk(500));
        let fast = w1_assignment(&a, &b, GroundMetric::Euclidean).unwrap();
        let sorted = w1_sorted_1d(&a, &b).unwrap();
        max_dev_sorted = max_dev_sorted.max((fast - sorted).abs());
    }
    report(
        "2 (W1 oracle equivalence)",
        max_dev_brute <= 1e-10 && max_dev_sorted <= 1e-10,
        &format!("factorial dev {max_dev_brute:.2e}, sorted dev {max_dev_sorted:.2e} <= 1e-10"),
    );
}

/// Criterion 3: L1 mollification bound for the unit ball in d = 2 at
/// eps in {0.02, 0.05, 0.1}: the quadrature gap stays under the 2eps-boundary
/// volume pi((1+2e)^2 - (1-2e)^2) plus 1e-3.
#[test]
fn criterion_3_mollifier_l1_bound() {
    let mut detail = String::new();
    let mut ok = true;
    for eps in [0.02, 0.05, 0.1] {
        let got = ball_l1_smoothing_error(1.0, eps, 2, 96);
        let bound = PI * ((1.0 + 2.0 * eps).powi(2) - (1.0 - 2.0 * eps).powi(2));
        ok &= got <= bound + 1e-3;
        detail.push_str(&format!("eps={eps}: {got:.6} <= {:.6}; ", bound + 1e-3));
    }
    report("3 (mollifier L1 bound)", ok, &detail);
}

/// Criterion 4: propagation-of-chaos rate. d = 1, q = 4, ladder
/// N in {64,...,1024}, 32 replicas, T = 1, proxy target M = 8192: fitted
/// log-log slope of the mean coupling+sampling error in [-0.65, -0.35].
#[test]
fn criterion_4_chaos_rate() {
    let kernel =
        MollifiedKernel::new(SensitivityRegion::FixedBall { r: 0.75 }, 0.05, 0.05).unwrap();
    let experiment = ChaosExperiment {
        n_ladder: vec![64, 128, 256, 512, 1024],
        replicas: 32,
        horizon: 1.0,
        dt: 1e-3,
        sigma: 0.05,
        seed: 20_240_601,
        proxy_samples: 8192,
        proxy_refresh: 1,
        kernel,
        trunc: DiffusionTruncation::new(1.0),
        q: 4.0,
        initial: InitialLaw { x_center: 0.0, x_width: 1.0, v_width: 0.8 },
        kinetic_target: None,
    };
    let sweep = chaos_rate_sweep(&experiment).unwrap();
    let slope = sweep.fit_total.slope;
    let detail = format!(
        "slope {slope:.3} (stderr {:.3}) in [-0.65, -0.35]; coupling slope {:.3} <= -0.35; levels {:?}",
        sweep.fit_total.stderr,
        sweep.fit_coupling.slope,
        sweep
            .levels
            .iter()
            .map(|l| (l.n, (1e4 * l.mean_total).round() / 1e4))
            .collect::<Vec<_>>()
    );
    let ok = (-0.65..=-0.35).contains(&slope) && sweep.fit_coupling.slope <= -0.35;
    report("4 (chaos rate)", ok, &detail);
}

/// Criterion 5: law-of-large-numbers decay of the boundary-layer discrepancy:
/// ladder N in {32,...,1024}, fitted exponent -0.5 +- 0.15.
#[test]
fn criterion_5_lln_decay() {
    let reference = gaussian_phase_cloud_2d(8192, 515);
    let cone = SensitivityRegion::VisionCone {
        r: 1.0,
        theta: ThetaProfile { theta_star: PI / 4.0, kappa: 1.0 },
        dim: 2,
    };
    let theta = ThetaFamily::new(cone, ThetaFamily::default_constant(&cone));
    let u_grid: Vec<f64> = (0..16).map(|k| 0.02 * 1.5f64.powi(k)).collect();
    let fit = discrepancy_ladder(
        &reference,
        &theta,
        &u_grid,
        &[32, 64, 128, 256, 512, 1024],
        32,
        16,
        99,
    )
    .unwrap();
    report(
        "5 (LLN sqrt-N decay)",
        (fit.slope + 0.5).abs() <= 0.15,
        &format!("fitted exponent {:.3} +- {:.3} within -0.5 +- 0.15", fit.slope, fit.stderr),
    );
}

fn kinetic_initial(grid: PhaseGrid) -> PhaseDensity {
    PhaseDensity::from_fn(grid, 1e-3, |x, v| bump((x - L / 2.0) / 1.2) * bump(v / 0.8))
}

/// Criterion 6: kinetic solver conservation on a 256 x 128 grid to T = 1:
/// mass drift <= 1e-8 relative per unit time, momentum drift <= 1e-8 under
/// full coverage, velocity support <= V_m + 2 dv.
#[test]
fn criterion_6_kinetic_conservation() {
    let grid = PhaseGrid { nx: 256, nv: 128, length: L, v_box: 1.25 };
    let d0 = kinetic_initial(grid);
    let trunc = DiffusionTruncation::new(1.0);
    // full coverage on the torus: r - eps exceeds every wrapped distance
    let kernel = MollifiedKernel::new(SensitivityRegion::FixedBall { r: 4.0 }, 0.05, 0.05).unwrap();
    let times: Vec<f64> = (1..=10).map(|k| 0.1 * k as f64).collect();
    let sol = solve_kinetic(&d0, &kernel, 0.1, &trunc, 1.0, &times, 4.0).unwrap();
    let mass_drift =
        sol.ledger.entries.iter().map(|e| (e.mass - 1.0).abs()).fold(0.0, f64::max);
    let momentum_drift =
        sol.ledger.entries.iter().map(|e| e.momentum.abs()).fold(0.0, f64::max);
    let support = sol.ledger.entries.iter().map(|e| e.vsupport).fold(0.0, f64::max);
    let support_cap = trunc.v_m + 2.0 * grid.dv();
    let ok = mass_drift <= 1e-8 && momentum_drift <= 1e-8 && support <= support_cap;
    report(
        "6 (kinetic conservation)",
        ok,
        &format!(
            "mass drift {mass_drift:.2e} <= 1e-8, momentum drift {momentum_drift:.2e} <= 1e-8, \
             support {support:.4} <= {support_cap:.4} over {} steps",
            sol.steps
        ),
    );
}

/// Criterion 7: particle/PDE consistency at T = 0.5, d = 1: W1 between the
/// N = 4096 interacting ensemble and the 256 x 128 kinetic solution stays
/// under 3 x (fitted N-rate at 4096 + one grid cell diameter).
#[test]
fn criterion_7_particle_pde_consistency() {
    let grid = PhaseGrid { nx: 256, nv: 128, length: L, v_box: 1.25 };
    let d0 = kinetic_initial(grid);
    let trunc = DiffusionTruncation::new(1.0);
    let kernel = MollifiedKernel::new(SensitivityRegion::FixedBall { r: 1.0 }, 0.05, 0.05).unwrap();
    let sigma = 0.05;
    let t_end = 0.5;
    let sol = solve_kinetic(&d0, &kernel, sigma, &trunc, t_end, &[t_end], 4.0).unwrap();
    let target = &sol.snapshots.last().unwrap().1;

    let run_particles = |n: usize, seed: u64| -> EmpiricalMeasure {
        let cloud0 = d0.sample_cloud(n, seed);
        let mut pos = Vec::with_capacity(n);
        let mut vel = Vec::with_capacity(n);
        for i in 0..cloud0.len() {
            pos.push(cloud0.point(i)[0]);
            vel.push(cloud0.point(i)[1]);
        }
        let initial = ParticleEnsemble::new(pos, vel, 1).unwrap();
        let mut params = SimParams::new(sigma, 1e-3, t_end, seed ^ 0xbeef, &trunc, kernel.eps);
        params.x_period = Some(L);
        let summary = simulate(&initial, &params, &trunc, &kernel, &[]).unwrap();
        let f = summary.final_ensemble;
        let mut flat = Vec::with_capacity(2 * n);
        for i in 0..n {
            flat.push(f.positions[i].rem_euclid(L));
            flat.push(f.velocities[i]);
        }
        EmpiricalMeasure::uniform(flat, 2).unwrap()
    };
    let w1_to_grid = |cloud: &EmpiricalMeasure, seed: u64| -> f64 {
        let grid_cloud = target.sample_cloud(cloud.len(), seed);
        w1_assignment(cloud, &grid_cloud, GroundMetric::SumSplit { split: 1 }).unwrap()
    };
    // fit the N-rate on smaller ladders, then check N = 4096
    let ladder = [256usize, 512, 1024, 2048];
    let mut dists = Vec::new();
    for (i, &n) in ladder.iter().enumerate() {
        let cloud = run_particles(n, 7000 + i as u64);
        dists.push(w1_to_grid(&cloud, 100 + i as u64));
    }
    let ns: Vec<f64> = ladder.iter().map(|&n| n as f64).collect();
    let (slope, intercept, _) = log_log_fit(&ns, &dists);
    let fitted_at_4096 = (intercept + slope * (4096f64).ln()).exp();
    let cell_diameter = grid.dx() + grid.dv();
    let threshold = 3.0 * (fitted_at_4096 + cell_diameter);
    let cloud = run_particles(4096, 4096);
    let w1 = w1_to_grid(&cloud, 14);
    report(
        "7 (particle/PDE consistency)",
        w1 <= threshold,
        &format!(
            "W1 {w1:.4} <= 3 x (rate {fitted_at_4096:.4} + cell {cell_diameter:.4}) = {threshold:.4} \
             (ladder {dists:?}, slope {slope:.3})"
        ),
    );
}

/// Criterion 8: stability envelope. Five random initial pairs never exceed
/// `W1(0) exp(int max(1, ||f||_inf))`, and for the translated pair the W1
/// series stays within 5% of its initial value.
#[test]
fn criterion_8_stability_envelope() {
    let grid = PhaseGrid { nx: 128, nv: 96, length: L, v_box: 1.25 };
    let trunc = DiffusionTruncation::new(1.0);
    let kernel = MollifiedKernel::new(SensitivityRegion::FixedBall { r: 1.0 }, 0.05, 0.05).unwrap();
    let rng = CounterRng::new(888);
    let mut detail = String::new();
    let mut ok = true;
    for pair in 0..5u64 {
        let s = rng.stream(pair);
        let (cx, wx) = (L / 2.0 + 0.6 * (s.uniform(0) - 0.5), 0.9 + 0.4 * s.uniform(1));
        let (cv, wv) = (0.3 * (s.uniform(2) - 0.5), 0.6 + 0.2 * s.uniform(3));
        let (cx2, wx2) = (L / 2.0 + 0.6 * (s.uniform(4) - 0.5), 0.9 + 0.4 * s.uniform(5));
        let (cv2, wv2) = (0.3 * (s.uniform(6) - 0.5), 0.6 + 0.2 * s.uniform(7));
        let fa = PhaseDensity::from_fn(grid, 1e-3, |x, v| {
            bump((x - cx) / wx) * bump((v - cv) / wv)
        });
        let fb = PhaseDensity::from_fn(grid, 1e-3, |x, v| {
            bump((x - cx2) / wx2) * bump((v - cv2) / wv2)
        });
        let out =
            stability_experiment(&fa, &fb, &kernel, 0.05, &trunc, 1.0, 3, 4096, 30 + pair)
                .unwrap();
        ok &= out.report.violations == 0;
        detail.push_str(&format!(
            "pair {pair}: W1(0) {:.4}, max W1 {:.4}, violations {}; ",
            out.report.w1[0],
            out.report.w1.iter().cloned().fold(0.0, f64::max),
            out.report.violations
        ));
    }
    // translated pair under full coverage: the series stays flat
    let full = MollifiedKernel::new(SensitivityRegion::FixedBall { r: 4.0 }, 0.05, 0.05).unwrap();
    let fa = kinetic_initial(grid);
    let shift = 12usize;
    let fb = fa.translated_cells(shift);
    let delta = shift as f64 * grid.dx();
    let out = stability_experiment(&fa, &fb, &full, 0.05, &trunc, 1.0, 3, 4096, 77).unwrap();
    let max_rel_dev = out
        .report
        .w1
        .iter()
        .map(|w| (w - delta).abs() / delta)
        .fold(0.0, f64::max);
    ok &= max_rel_dev <= 0.05 && out.report.violations == 0;
    detail.push_str(&format!("translated: max deviation {:.2}% of {delta:.4}", 100.0 * max_rel_dev));
    report("8 (stability envelope)", ok, &detail);
}

/// Criterion 9: (H2) verification. The vision cone with the rear-segment
/// family passes at 1e5 samples with zero violations; the ablated family
/// (segment removed) is witnessed.
#[test]
fn criterion_9_h2_verification() {
    let cone = SensitivityRegion::VisionCone {
        r: 1.0,
        theta: ThetaProfile { theta_star: PI / 4.0, kappa: 1.0 },
        dim: 2,
    };
    let c = ThetaFamily::default_constant(&cone);
    let good = verify_h2(&ThetaFamily::new(cone, c), 2, 100_000, 909);
    let ablated = verify_h2(&ThetaFamily::without_segment(cone, c), 2, 100_000, 909);
    let ok = good.violations.is_empty() && !ablated.violations.is_empty();
    report(
        "9 (H2 verification)",
        ok,
        &format!(
            "intact family: {} violations (ratio_ii {:.2}, worst iii {:.2}, worst iv {:.2}, C={c}); \
             ablated family: {} violations",
            good.violations.len(),
            good.max_ratio_ii,
            good.worst_ratio_iii,
            good.worst_ratio_iv,
            ablated.violations.len()
        ),
    );
}
