use super::*;
use crate::geometry::SensitivityRegion;
use crate::rng::CounterRng;

fn ball_kernel(r: f64, eta: f64, eps: f64) -> MollifiedKernel {
    MollifiedKernel::new(SensitivityRegion::FixedBall { r }, eta, eps).unwrap()
}

fn params(sigma: f64, dt: f64, t_end: f64, seed: u64, trunc: &DiffusionTruncation) -> SimParams {
    SimParams::new(sigma, dt, t_end, seed, trunc, 0.05)
}

#[test]
fn single_particle_feels_no_force() {
    let e = ParticleEnsemble::new(vec![0.3, 0.4], vec![0.5, -0.2], 2).unwrap();
    let k = ball_kernel(1.0, 0.05, 0.05);
    let f = force(&e, &k, 0, None).unwrap();
    assert_eq!(f, vec![0.0, 0.0]);
}

#[test]
fn two_body_force_is_half_velocity_gap() {
    // both deep inside each other's ball: weight exactly 1
    let e = ParticleEnsemble::new(vec![0.0, 0.0, 0.1, 0.0], vec![0.0, 0.0, 0.6, -0.4], 2).unwrap();
    let k = ball_kernel(1.0, 0.05, 0.05);
    let f = force(&e, &k, 0, None).unwrap();
    assert!((f[0] - 0.3).abs() < 1e-15);
    assert!((f[1] + 0.2).abs() < 1e-15);
}

#[test]
fn forces_match_brute_force_resummation() {
    let rng = CounterRng::new(8).stream(0);
    for &(dim, n) in &[(2usize, 7usize), (1, 9), (1, 300), (2, 5)] {
        let pos: Vec<f64> = (0..n * dim).map(|k| 2.4 * (rng.uniform(k as u64) - 0.5)).collect();
        let vel: Vec<f64> =
            (0..n * dim).map(|k| 1.2 * (rng.uniform(1000 + k as u64) - 0.5)).collect();
        let e = ParticleEnsemble::new(pos, vel, dim).unwrap();
        let k = ball_kernel(0.8, 0.05, 0.05);
        let all = forces(&e, &k, None).unwrap();
        for i in 0..n {
            let mut oracle = vec![0.0; dim];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let delta: Vec<f64> = (0..dim)
                    .map(|c| e.positions[j * dim + c] - e.positions[i * dim + c])
                    .collect();
                let w = k.eval_fast(e.velocity(i), &delta).unwrap();
                for c in 0..dim {
                    oracle[c] += w * (e.velocities[j * dim + c] - e.velocities[i * dim + c]);
                }
            }
            for c in 0..dim {
                let got = all[i * dim + c];
                let want = oracle[c] / n as f64;
                assert!(
                    (got - want).abs() <= 1e-12 * (1.0 + want.abs()),
                    "dim={dim} n={n} i={i} c={c}: {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn periodic_fast_path_matches_generic() {
    let rng = CounterRng::new(9).stream(1);
    let n = 257; // above the parallel threshold for the generic path
    let l = 6.0;
    let pos: Vec<f64> = (0..n).map(|k| l * rng.uniform(k as u64)).collect();
    let vel: Vec<f64> = (0..n).map(|k| 0.9 * (rng.uniform(500 + k as u64) - 0.5)).collect();
    let e = ParticleEnsemble::new(pos, vel, 1).unwrap();
    let k = ball_kernel(0.8, 0.05, 0.05);
    let fast = forces(&e, &k, Some(l)).unwrap();
    // oracle: direct pairwise sum with wrapped distances
    for i in (0..n).step_by(17) {
        let mut acc = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let delta = wrap_diff(e.positions[j] - e.positions[i], Some(l));
            let w = k.eval_fast(&[e.velocities[i]], &[delta]).unwrap();
            acc += w * (e.velocities[j] - e.velocities[i]);
        }
        assert!(
            (fast[i] - acc / n as f64).abs() < 1e-12,
            "i={i}: {} vs {}",
            fast[i],
            acc / n as f64
        );
    }
}

#[test]
fn free_transport_when_no_interaction() {
    // particles far outside each other's region, sigma = 0
    let e = ParticleEnsemble::new(vec![0.0, 0.0, 10.0, 0.0], vec![0.5, 0.1, -0.3, 0.2], 2).unwrap();
    let trunc = DiffusionTruncation::new(1.0);
    let k = ball_kernel(1.0, 0.05, 0.05);
    let p = params(0.0, 0.01, 0.0, 1, &trunc);
    let noise = vec![0.0; 4];
    let (next, _) = em_step(&e, &p, &trunc, &k, &noise).unwrap();
    for i in 0..4 {
        assert_eq!(next.velocities[i], e.velocities[i]);
        assert!((next.positions[i] - (e.positions[i] + 0.01 * e.velocities[i])).abs() < 1e-16);
    }
}

#[test]
fn truncation_profile_is_c2_with_stored_lipschitz_bound() {
    let trunc = DiffusionTruncation::new(2.0);
    // value, first and second finite differences all vanish at the cap
    let h = 1e-5;
    let p = |s: f64| trunc.profile(s);
    assert_eq!(p(2.0), 0.0);
    assert!((p(2.0 - h) - p(2.0 + h)).abs() / (2.0 * h) < 1e-8, "first derivative");
    assert!((p(2.0 - h) - 2.0 * p(2.0) + p(2.0 + h)).abs() / (h * h) < 1e-3, "second derivative");
    // stored bound dominates the finite-difference slope everywhere
    let lip = trunc.lipschitz();
    let mut max_fd: f64 = 0.0;
    for k in 0..2000 {
        let s = 2.0 * k as f64 / 1999.0;
        max_fd = max_fd.max((p(s + h) - p(s)).abs() / h);
    }
    assert!(max_fd <= lip * (1.0 + 1e-3), "fd slope {max_fd} vs bound {lip}");
    assert!(max_fd >= 0.95 * lip, "bound should be tight, fd {max_fd} vs {lip}");
}

#[test]
fn diffusion_vanishes_at_speed_cap() {
    let trunc = DiffusionTruncation::new(1.0);
    assert_eq!(trunc.profile(1.0), 0.0);
    assert_eq!(trunc.profile(1.7), 0.0);
    let e = ParticleEnsemble::new(vec![0.0, 50.0], vec![1.0, 0.3], 1).unwrap();
    let k = ball_kernel(1.0, 0.05, 0.05);
    let p = params(5.0, 1e-3, 0.0, 3, &trunc);
    let noise = vec![9.0, 9.0]; // huge increments
    let (next, _) = em_step(&e, &p, &trunc, &k, &noise).unwrap();
    // particle 0 sits exactly at the cap: zero diffusion
    assert_eq!(next.velocities[0], 1.0);
    // particle 1 is interior: diffusion acts
    assert!(next.velocities[1] != 0.3);
}

#[test]
fn two_body_gap_decays_like_exp_minus_t() {
    // full mutual coverage, sigma = 0: d(v1 - v2)/dt = -(v1 - v2)
    let trunc = DiffusionTruncation::new(2.0);
    let k = ball_kernel(5.0, 0.05, 0.05);
    let run = |dt: f64| -> f64 {
        let e = ParticleEnsemble::new(vec![0.0, 0.3], vec![0.8, -0.6], 1).unwrap();
        let p = params(0.0, dt, 1.0, 1, &trunc);
        let summary = simulate(&e, &p, &trunc, &k, &[]).unwrap();
        let gap = summary.final_ensemble.velocities[0] - summary.final_ensemble.velocities[1];
        (gap - 1.4 * (-1.0f64).exp()).abs()
    };
    let coarse = run(2e-3);
    let fine = run(1e-3);
    assert!(coarse < 2e-3, "EM error too large: {coarse}");
    let ratio = coarse / fine;
    assert!((1.4..2.6).contains(&ratio), "first-order convergence, got ratio {ratio}");
}

#[test]
fn single_particle_travels_straight() {
    let e = ParticleEnsemble::new(vec![0.0, 0.0], vec![0.3, -0.1], 2).unwrap();
    let trunc = DiffusionTruncation::new(1.0);
    let k = ball_kernel(1.0, 0.05, 0.05);
    let p = params(0.0, 1e-2, 1.0, 7, &trunc);
    let s = simulate(&e, &p, &trunc, &k, &[0.5]).unwrap();
    let t = s.final_ensemble.time;
    assert!((t - 1.0).abs() < 1e-9);
    assert!((s.final_ensemble.positions[0] - 0.3 * t).abs() < 1e-12);
    assert!((s.final_ensemble.positions[1] + 0.1 * t).abs() < 1e-12);
    assert_eq!(s.snapshots.len(), 1);
}

#[test]
fn speed_stays_bounded_with_noise() {
    let rng = CounterRng::new(42).stream(7);
    let n = 16;
    let trunc = DiffusionTruncation::new(1.0);
    let pos: Vec<f64> = (0..2 * n).map(|k| rng.uniform(k as u64) - 0.5).collect();
    let vel: Vec<f64> = (0..2 * n).map(|k| 0.9 * (rng.uniform(100 + k as u64) - 0.5)).collect();
    let e = ParticleEnsemble::new(pos, vel, 2).unwrap();
    let k = ball_kernel(1.0, 0.05, 0.05);
    let p = params(0.5, 1e-3, 1.0, 11, &trunc);
    let s = simulate(&e, &p, &trunc, &k, &[]).unwrap();
    assert!(s.max_speed_seen <= 1.0 + p.c_slack * p.dt);
}

#[test]
fn max_speed_nonincreasing_without_noise() {
    // kernel weights in [0,1] make each velocity update a convex combination
    let rng = CounterRng::new(4).stream(2);
    let n = 12;
    let pos: Vec<f64> = (0..2 * n).map(|k| 1.5 * (rng.uniform(k as u64) - 0.5)).collect();
    let vel: Vec<f64> = (0..2 * n).map(|k| rng.uniform(200 + k as u64) - 0.5).collect();
    let mut e = ParticleEnsemble::new(pos, vel, 2).unwrap();
    let trunc = DiffusionTruncation::new(1.0);
    let k = ball_kernel(1.0, 0.05, 0.05);
    let p = params(0.0, 1e-2, 0.0, 1, &trunc);
    let noise = vec![0.0; 2 * n];
    let mut prev = e.max_speed();
    for _ in 0..50 {
        let (next, _) = em_step(&e, &p, &trunc, &k, &noise).unwrap();
        let ms = next.max_speed();
        assert!(ms <= prev + 1e-14, "max speed grew: {ms} > {prev}");
        prev = ms;
        e = next;
    }
}

#[test]
fn deterministic_across_thread_counts() {
    let rng = CounterRng::new(10).stream(0);
    let n = 24;
    let pos: Vec<f64> = (0..2 * n).map(|k| rng.uniform(k as u64) - 0.5).collect();
    let vel: Vec<f64> = (0..2 * n).map(|k| 0.8 * (rng.uniform(300 + k as u64) - 0.5)).collect();
    let e = ParticleEnsemble::new(pos, vel, 2).unwrap();
    let trunc = DiffusionTruncation::new(1.0);
    let k = ball_kernel(1.0, 0.05, 0.05);
    let p = params(0.2, 1e-3, 0.05, 5, &trunc);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate(&e, &p, &trunc, &k, &[]).unwrap())
    };
    let a = run(1);
    let b = run(2);
    assert_eq!(a.final_ensemble.positions, b.final_ensemble.positions);
    assert_eq!(a.final_ensemble.velocities, b.final_ensemble.velocities);
    // and reruns are bit-identical
    let c = run(2);
    assert_eq!(b.final_ensemble.velocities, c.final_ensemble.velocities);
}

#[test]
fn permuting_particles_and_streams_commutes() {
    let rng = CounterRng::new(12).stream(3);
    let n = 9;
    let pos: Vec<f64> = (0..2 * n).map(|k| rng.uniform(k as u64) - 0.5).collect();
    let vel: Vec<f64> = (0..2 * n).map(|k| 0.7 * (rng.uniform(50 + k as u64) - 0.5)).collect();
    let e = ParticleEnsemble::new(pos, vel, 2).unwrap();
    let trunc = DiffusionTruncation::new(1.0);
    let k = ball_kernel(1.0, 0.05, 0.05);
    let p = params(0.3, 1e-3, 0.02, 21, &trunc);
    let perm: Vec<usize> = (0..n).map(|i| (i + 3) % n).collect();
    let direct = simulate(&e.permuted(&perm), &p, &trunc, &k, &[]).unwrap();
    let permuted_after = simulate(&e, &p, &trunc, &k, &[]).unwrap().final_ensemble.permuted(&perm);
    for i in 0..n * 2 {
        assert_eq!(direct.final_ensemble.positions[i], permuted_after.positions[i]);
        assert_eq!(direct.final_ensemble.velocities[i], permuted_after.velocities[i]);
    }
}

#[test]
fn translation_equivariance() {
    let rng = CounterRng::new(13).stream(4);
    let n = 8;
    let pos: Vec<f64> = (0..2 * n).map(|k| rng.uniform(k as u64) - 0.5).collect();
    let vel: Vec<f64> = (0..2 * n).map(|k| 0.8 * (rng.uniform(70 + k as u64) - 0.5)).collect();
    let e = ParticleEnsemble::new(pos.clone(), vel.clone(), 2).unwrap();
    let shifted_pos: Vec<f64> = pos.iter().map(|x| x + 2.0).collect();
    let e2 = ParticleEnsemble::new(shifted_pos, vel, 2).unwrap();
    let trunc = DiffusionTruncation::new(1.0);
    let k = ball_kernel(1.0, 0.05, 0.05);
    let p = params(0.2, 1e-3, 0.05, 31, &trunc);
    let a = simulate(&e, &p, &trunc, &k, &[]).unwrap();
    let b = simulate(&e2, &p, &trunc, &k, &[]).unwrap();
    for i in 0..2 * n {
        assert!((b.final_ensemble.positions[i] - a.final_ensemble.positions[i] - 2.0).abs() < 1e-10);
        assert!((b.final_ensemble.velocities[i] - a.final_ensemble.velocities[i]).abs() < 1e-10);
    }
}

#[test]
fn zero_noise_first_order_against_fine_reference() {
    let rng = CounterRng::new(14).stream(5);
    let n = 6;
    let pos: Vec<f64> = (0..n).map(|k| 1.2 * (rng.uniform(k as u64) - 0.5)).collect();
    let vel: Vec<f64> = (0..n).map(|k| 0.9 * (rng.uniform(40 + k as u64) - 0.5)).collect();
    let trunc = DiffusionTruncation::new(1.0);
    let k = ball_kernel(0.8, 0.05, 0.05);
    let run = |dt: f64| {
        let e = ParticleEnsemble::new(pos.clone(), vel.clone(), 1).unwrap();
        let p = params(0.0, dt, 0.5, 1, &trunc);
        simulate(&e, &p, &trunc, &k, &[]).unwrap().final_ensemble
    };
    let reference = run(1.25e-4);
    let err = |dt: f64| {
        let f = run(dt);
        f.velocities
            .iter()
            .zip(&reference.velocities)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
    };
    let e1 = err(4e-3);
    let e2 = err(2e-3);
    assert!(e1 > 0.0 && e2 > 0.0);
    let ratio = e1 / e2;
    assert!((1.5..3.0).contains(&ratio), "expected ~2x error reduction, got {ratio}");
}

#[test]
fn coupled_step_with_matching_drift_is_identical() {
    let rng = CounterRng::new(15).stream(6);
    let n = 10;
    let pos: Vec<f64> = (0..n).map(|k| rng.uniform(k as u64) - 0.5).collect();
    let vel: Vec<f64> = (0..n).map(|k| 0.8 * (rng.uniform(60 + k as u64) - 0.5)).collect();
    let e = ParticleEnsemble::new(pos, vel, 1).unwrap();
    let trunc = DiffusionTruncation::new(1.0);
    let k = ball_kernel(0.8, 0.05, 0.05);
    let p = params(0.4, 1e-3, 0.0, 8, &trunc);
    let rngs = CounterRng::new(p.seed);
    let mut noise = Vec::new();
    let mut sys = e.clone();
    let mut mf = e.clone();
    for step in 0..40 {
        step_noise(&rngs, &sys, step, p.dt, &mut noise);
        // frozen drift = the interacting force of the same (current) ensemble
        let cloud = FrozenCloud1d::build(&mf.positions, &mf.velocities, &k, None).unwrap();
        let (s2, m2) = coupled_pair_step(
            &sys,
            &mf,
            &p,
            &trunc,
            &k,
            |x, v, out| out[0] = cloud.mean_force(x[0], v[0]),
            &noise,
        )
        .unwrap();
        sys = s2;
        mf = m2;
        for i in 0..n {
            assert!(
                (sys.velocities[i] - mf.velocities[i]).abs() < 1e-13,
                "step {step}: trajectories diverged"
            );
        }
    }
}

#[test]
fn coupled_gap_respects_gronwall_growth() {
    // sigma = 0, partial coverage, mean-field drift frozen at the initial
    // law: the pathwise gap stays under a Gronwall envelope. (Full coverage
    // would make both flows coincide: the frozen force then equals
    // mean(v0) - v, which the live system reproduces exactly.)
    let e = ParticleEnsemble::new(
        vec![0.0, 0.7, -0.6, 1.4, 0.3, -1.1],
        vec![0.5, -0.4, 0.3, 0.2, -0.5, 0.1],
        1,
    )
    .unwrap();
    let trunc = DiffusionTruncation::new(1.0);
    let k = ball_kernel(0.8, 0.05, 0.05);
    let p = params(0.0, 1e-3, 0.0, 2, &trunc);
    let frozen = FrozenCloud1d::build(&e.positions, &e.velocities, &k, None).unwrap();
    let n = e.n();
    let mut sys = e.clone();
    let mut mf = e.clone();
    let noise = vec![0.0; n];
    let mut gap_final = 0.0;
    for step in 1..=500 {
        let (s2, m2) = coupled_pair_step(
            &sys,
            &mf,
            &p,
            &trunc,
            &k,
            |x, v, out| out[0] = frozen.mean_force(x[0], v[0]),
            &noise,
        )
        .unwrap();
        sys = s2;
        mf = m2;
        let gap: f64 = (0..n)
            .map(|i| {
                (sys.positions[i] - mf.positions[i]).abs()
                    + (sys.velocities[i] - mf.velocities[i]).abs()
            })
            .sum::<f64>()
            / n as f64;
        let t = step as f64 * p.dt;
        // the drift mismatch is bounded by 2 V_m = 2; Gronwall with C = 4
        let envelope = 2.0 * t * (4.0 * t).exp();
        assert!(gap <= envelope, "step {step}: gap {gap} exceeds envelope {envelope}");
        gap_final = gap;
    }
    assert!(gap_final > 1e-6, "frozen vs live drift must produce a visible gap");
}

#[test]
fn boundary_events_are_recorded() {
    // pair sitting exactly on the sensitivity boundary
    let e = ParticleEnsemble::new(vec![0.0, 0.0, 1.0, 0.0], vec![0.1, 0.0, 0.0, 0.1], 2).unwrap();
    let trunc = DiffusionTruncation::new(1.0);
    let k = ball_kernel(1.0, 0.05, 0.05);
    let mut p = params(0.0, 1e-3, 0.0, 1, &trunc);
    p.record_boundary_events = true;
    p.record_pair_weights = true;
    let noise = vec![0.0; 4];
    let (_, rec) = em_step(&e, &p, &trunc, &k, &noise).unwrap();
    assert!(
        rec.boundary_events.iter().any(|ev| ev.i == 0 && ev.j == 1 && ev.dist < 1e-9),
        "events: {:?}",
        rec.boundary_events
    );
    assert!(rec.pair_weights.iter().all(|&(_, _, w)| (0.0..=1.0).contains(&w)));
}

#[test]
fn initial_speed_above_cap_is_rejected() {
    let e = ParticleEnsemble::new(vec![0.0], vec![1.5], 1).unwrap();
    let trunc = DiffusionTruncation::new(1.0);
    let k = ball_kernel(1.0, 0.05, 0.05);
    let p = params(0.1, 1e-3, 0.1, 1, &trunc);
    assert!(matches!(
        simulate(&e, &p, &trunc, &k, &[]),
        Err(SimError::InitialSpeedTooLarge { .. })
    ));
}
