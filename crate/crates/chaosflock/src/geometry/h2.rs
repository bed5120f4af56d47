//! Monte Carlo verification of the boundary-family hypotheses (H1)-(H2).
//!
//! (ii) estimates the enlargement-volume constant `|Theta(v)^{eps,+}|/eps` by
//! hit-or-miss sampling; (iii) checks that sampled points of the symmetric
//! difference `K(v) Delta K(w)` land in `Theta(v)^{C|v-w|,+}`; (iv) does the
//! same for `Theta(w)` itself. Pairs straddling the speed threshold 1 get
//! extra probes along the rear axis, where the cone notch opens and the
//! rope segment has to carry the bound.

use super::region::{norm, SensitivityRegion};
use super::theta::ThetaFamily;
use super::GeometryError;
use crate::rng::CounterRng;

#[derive(Debug, Clone)]
pub struct H2Witness {
    pub part: &'static str,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub distance: f64,
    pub allowed: f64,
}

#[derive(Debug, Clone)]
pub struct H2Report {
    /// Empirical sup of `|Theta(v)^{eps,+}| / eps` over sampled `(v, eps)`.
    pub max_ratio_ii: f64,
    /// Worst observed `dist(x, Theta(v)) / |v-w|` over symmetric-difference samples.
    pub worst_ratio_iii: f64,
    pub worst_pair_iii: Option<H2Witness>,
    /// Worst observed `dist(x, Theta(v)) / |v-w|` over points of `Theta(w)`.
    pub worst_ratio_iv: f64,
    pub worst_pair_iv: Option<H2Witness>,
    /// Samples of `K(v)` that escaped the master ball (should be none).
    pub h1_escapes: u64,
    pub violations: Vec<H2Witness>,
    pub samples: u64,
    pub configured_c: f64,
}

impl H2Report {
    pub fn into_result(self) -> Result<H2Report, GeometryError> {
        match self.violations.first() {
            Some(wit) => Err(GeometryError::H2Violation {
                part: wit.part,
                distance: wit.distance,
                allowed: wit.allowed,
                witness: wit.x.clone(),
            }),
            None => Ok(self),
        }
    }

    /// Constant that would make (iii)-(iv) pass with a small margin.
    pub fn suggested_constant(&self) -> f64 {
        1.1 * self.worst_ratio_iii.max(self.worst_ratio_iv).max(1.0)
    }
}

pub fn verify_h2(theta: &ThetaFamily, dim: usize, samples: u64, seed: u64) -> H2Report {
    assert!(samples >= 1, "samples must be at least 1");
    let region = &theta.region;
    let c = theta.c;
    let rng = CounterRng::new(seed);
    let r_master = region.master_radius();
    let mut report = H2Report {
        max_ratio_ii: 0.0,
        worst_ratio_iii: 0.0,
        worst_pair_iii: None,
        worst_ratio_iv: 0.0,
        worst_pair_iv: None,
        h1_escapes: 0,
        violations: Vec::new(),
        samples,
        configured_c: c,
    };

    // --- (H1): K(v) inside the master ball.
    let h1 = rng.stream(1);
    let n_h1 = (samples / 20).clamp(64, 4096);
    for k in 0..n_h1 {
        let v = box_point(&h1, 3 * k, dim, 2.5);
        let x = box_point(&h1, 3 * k + 1, dim, r_master * 1.5);
        if region.contains(&v, &x) && norm(&x) > r_master + 1e-12 {
            report.h1_escapes += 1;
        }
    }

    // --- (ii): enlargement volume by hit-or-miss.
    let s2 = rng.stream(2);
    let pairs_ii = 24u64;
    let per_ii = (samples / 4 / pairs_ii).max(64);
    let half_box = r_master + 1.05;
    let box_vol = (2.0 * half_box).powi(dim as i32);
    for p in 0..pairs_ii {
        let v = box_point(&s2, 1000 * p, dim, 2.5);
        // log-uniform in (0.02, 1)
        let eps = 0.02 * (50.0f64).powf(s2.uniform(1000 * p + 1));
        let mut hits = 0u64;
        for k in 0..per_ii {
            let x = box_point(&s2, 1000 * p + 2 + k * 2, dim, half_box);
            if theta.distance(&v, &x) <= eps {
                hits += 1;
            }
        }
        let vol = box_vol * hits as f64 / per_ii as f64;
        report.max_ratio_ii = report.max_ratio_ii.max(vol / eps);
    }

    // --- (iii): symmetric difference coverage.
    let s3 = rng.stream(3);
    let pairs_iii = 48u64;
    let per_iii = (samples / 2 / pairs_iii).max(64);
    for p in 0..pairs_iii {
        let (v, w) = velocity_pair(&s3, p, dim);
        let gap = sub(&v, &w);
        let vw = norm(&gap);
        if vw < 1e-12 {
            continue;
        }
        let check = |x: Vec<f64>, report: &mut H2Report| {
            for (a, b) in [(&v, &w), (&w, &v)] {
                let inside_a = region.contains(a, &x);
                let inside_b = region.contains(b, &x);
                if inside_a != inside_b {
                    let d = theta.distance(a, &x);
                    let ratio = d / vw;
                    if ratio > report.worst_ratio_iii {
                        report.worst_ratio_iii = ratio;
                        report.worst_pair_iii = Some(H2Witness {
                            part: "iii",
                            v: a.clone(),
                            w: b.clone(),
                            x: x.clone(),
                            distance: d,
                            allowed: c * vw,
                        });
                    }
                    if d > c * vw + 1e-12 && report.violations.len() < 32 {
                        report.violations.push(H2Witness {
                            part: "iii",
                            v: a.clone(),
                            w: b.clone(),
                            x: x.clone(),
                            distance: d,
                            allowed: c * vw,
                        });
                    }
                }
            }
        };
        for k in 0..per_iii {
            let x = box_point(&s3, 10_000 * p + 17 + 2 * k, dim, r_master * 1.1);
            check(x, &mut report);
        }
        // Rear-axis probes where the notch opens past speed 1.
        let fast = if norm(&v) > norm(&w) { &v } else { &w };
        let speed = norm(fast);
        if speed > 1.0 {
            for j in 0..24 {
                let t = r_master * 0.01 * (100.0f64).powf(j as f64 / 23.0);
                let x: Vec<f64> = fast.iter().map(|c| -c / speed * t).collect();
                check(x, &mut report);
            }
        }
    }

    // --- (iv): family stability.
    let s4 = rng.stream(4);
    let pairs_iv = 24u64;
    let per_iv = (samples / 4 / pairs_iv).max(64);
    for p in 0..pairs_iv {
        let (v, w) = velocity_pair(&s4, p, dim);
        let vw = norm(&sub(&v, &w));
        if vw < 1e-12 {
            continue;
        }
        for k in 0..per_iv {
            let x = sample_theta_point(theta, &w, dim, &s4, 10_000 * p + 3 * k);
            let d = theta.distance(&v, &x);
            let ratio = d / vw;
            if ratio > report.worst_ratio_iv {
                report.worst_ratio_iv = ratio;
                report.worst_pair_iv = Some(H2Witness {
                    part: "iv",
                    v: v.clone(),
                    w: w.clone(),
                    x: x.clone(),
                    distance: d,
                    allowed: c * vw,
                });
            }
            if d > c * vw + 1e-12 && report.violations.len() < 32 {
                report.violations.push(H2Witness {
                    part: "iv",
                    v: v.clone(),
                    w: w.clone(),
                    x,
                    distance: d,
                    allowed: c * vw,
                });
            }
        }
    }

    report
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn box_point(rng: &CounterRng, ctr: u64, dim: usize, half: f64) -> Vec<f64> {
    (0..dim).map(|i| half * (2.0 * rng.uniform(ctr * 8 + i as u64) - 1.0)).collect()
}

fn unit_vector(rng: &CounterRng, ctr: u64, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|i| rng.standard_normal(ctr * 8 + 4 + i as u64)).collect();
    let n = norm(&v).max(1e-300);
    v.iter().map(|c| c / n).collect()
}

/// Velocity pairs stratified over the interaction scales: generic small
/// perturbations, pairs straddling speed 1, and fast co-moving pairs.
fn velocity_pair(rng: &CounterRng, p: u64, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let base = p * 100;
    match p % 3 {
        0 => {
            let v = box_point(rng, base, dim, 2.5);
            let delta = 0.01 * (100.0f64).powf(rng.uniform(base + 1));
            let dir = unit_vector(rng, base + 2, dim);
            let w = v.iter().zip(&dir).map(|(a, d)| a + delta * d).collect();
            (v, w)
        }
        1 => {
            // straddle the speed threshold along a common direction
            let dir = unit_vector(rng, base + 3, dim);
            let s = 0.5 + 0.5 * rng.uniform(base + 4);
            let s2 = 1.0 + 0.5 * rng.uniform(base + 5);
            (dir.iter().map(|d| d * s).collect(), dir.iter().map(|d| d * s2).collect())
        }
        _ => {
            let dir = unit_vector(rng, base + 6, dim);
            let s = 1.0 + 1.5 * rng.uniform(base + 7);
            let v: Vec<f64> = dir.iter().map(|d| d * s).collect();
            let delta = 0.02 * (25.0f64).powf(rng.uniform(base + 8));
            let dir2 = unit_vector(rng, base + 9, dim);
            let w = v.iter().zip(&dir2).map(|(a, d)| a + delta * d).collect();
            (v, w)
        }
    }
}

/// Draw a point on `Theta(w)`, stratified over its components.
fn sample_theta_point(
    theta: &ThetaFamily,
    w: &[f64],
    dim: usize,
    rng: &CounterRng,
    ctr: u64,
) -> Vec<f64> {
    let speed = norm(w);
    match &theta.region {
        SensitivityRegion::FixedBall { r } => {
            let dir = unit_vector(rng, ctr, dim);
            dir.iter().map(|d| d * r).collect()
        }
        SensitivityRegion::VariableBall { r } => {
            let dir = unit_vector(rng, ctr, dim);
            let rad = r.radius(speed);
            dir.iter().map(|d| d * rad).collect()
        }
        SensitivityRegion::VisionCone { r, theta: prof, .. } => {
            let has_segment = theta.include_segment && speed > 0.5 && speed < 1.0;
            if has_segment && rng.uniform(ctr + 1) < 0.25 {
                // radial segment from 2r(1-|w|) to r along -w
                let lo = 2.0 * r * (1.0 - speed);
                let t = lo + (r - lo) * rng.uniform(ctr + 2);
                return w.iter().map(|c| -c / speed * t).collect();
            }
            let ang = prof.angle(speed);
            if ang >= std::f64::consts::PI || speed == 0.0 {
                let dir = unit_vector(rng, ctr + 3, dim);
                return dir.iter().map(|d| d * r).collect();
            }
            // choose cap vs lateral by surface measure
            let (w_cap, w_lat) = if dim == 2 {
                (2.0 * ang * r, 2.0 * r)
            } else {
                (
                    2.0 * std::f64::consts::PI * r * r * (1.0 - ang.cos()),
                    std::f64::consts::PI * r * r * ang.sin(),
                )
            };
            let pick_cap = rng.uniform(ctr + 4) < w_cap / (w_cap + w_lat);
            let (rho, alpha) = if pick_cap {
                let u = rng.uniform(ctr + 5);
                let a = if dim == 2 {
                    ang * u
                } else {
                    // uniform on the spherical cap: cos alpha uniform
                    (1.0 - u * (1.0 - ang.cos())).acos()
                };
                (*r, a)
            } else {
                let u = rng.uniform(ctr + 6);
                let rho = if dim == 2 { r * u } else { r * u.sqrt() };
                (rho, ang)
            };
            cone_surface_point(w, speed, rho, alpha, dim, rng, ctr + 7)
        }
    }
}

/// Point at polar radius `rho`, angle `alpha` from the axis `w`, random
/// azimuth (and random flank sign in d = 2).
fn cone_surface_point(
    w: &[f64],
    speed: f64,
    rho: f64,
    alpha: f64,
    dim: usize,
    rng: &CounterRng,
    ctr: u64,
) -> Vec<f64> {
    let axis: Vec<f64> = w.iter().map(|c| c / speed).collect();
    if dim == 2 {
        let perp = [-axis[1], axis[0]];
        let sgn = if rng.uniform(ctr) < 0.5 { -1.0 } else { 1.0 };
        (0..2)
            .map(|i| rho * (alpha.cos() * axis[i] + sgn * alpha.sin() * perp[i]))
            .collect()
    } else {
        // orthonormal frame around the axis
        let pick = if axis[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let mut e1 = [
            pick[1] * axis[2] - pick[2] * axis[1],
            pick[2] * axis[0] - pick[0] * axis[2],
            pick[0] * axis[1] - pick[1] * axis[0],
        ];
        let n1 = norm(&e1);
        e1.iter_mut().for_each(|c| *c /= n1);
        let e2 = [
            axis[1] * e1[2] - axis[2] * e1[1],
            axis[2] * e1[0] - axis[0] * e1[2],
            axis[0] * e1[1] - axis[1] * e1[0],
        ];
        let phi = 2.0 * std::f64::consts::PI * rng.uniform(ctr);
        (0..3)
            .map(|i| {
                rho * (alpha.cos() * axis[i]
                    + alpha.sin() * (phi.cos() * e1[i] + phi.sin() * e2[i]))
            })
            .collect()
    }
}
