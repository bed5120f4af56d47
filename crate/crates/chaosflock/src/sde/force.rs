//! Alignment force evaluation: the generic pairwise path and a sorted
//! prefix-sum fast path for 1d fixed-ball kernels, where the smoothed
//! indicator is exactly 1 inside `R - eps`, exactly 0 outside `R + eps`, and
//! only the thin transition band needs per-pair kernel evaluations.

use super::{wrap_diff, ParticleEnsemble, SimError};
use crate::geometry::{smoothed_ball_indicator, MollifiedKernel, SensitivityRegion};
use rayon::prelude::*;

/// Forces on every particle, flattened `n x d`.
pub fn forces(
    ensemble: &ParticleEnsemble,
    kernel: &MollifiedKernel,
    x_period: Option<f64>,
) -> Result<Vec<f64>, SimError> {
    let mut out = vec![0.0; ensemble.positions.len()];
    forces_into(ensemble, kernel, x_period, &mut out)?;
    Ok(out)
}

pub fn forces_into(
    ensemble: &ParticleEnsemble,
    kernel: &MollifiedKernel,
    x_period: Option<f64>,
    out: &mut [f64],
) -> Result<(), SimError> {
    let n = ensemble.n();
    let d = ensemble.dim;
    assert_eq!(out.len(), n * d);
    if n == 0 {
        return Ok(());
    }
    if d == 1 {
        if let Some(cloud) =
            FrozenCloud1d::build(&ensemble.positions, &ensemble.velocities, kernel, x_period)
        {
            for i in 0..n {
                out[i] = cloud.mean_force(ensemble.positions[i], ensemble.velocities[i]);
            }
            return Ok(());
        }
    }
    // generic pairwise path
    let reject = reject_radius(kernel);
    let compute_row = |i: usize, row: &mut [f64]| -> Result<(), SimError> {
        let vi = ensemble.velocity(i);
        let xi = ensemble.position(i);
        let mut delta = vec![0.0; d];
        let mut acc = vec![0.0; d];
        for j in 0..n {
            if j == i {
                continue;
            }
            let xj = ensemble.position(j);
            let mut dist2 = 0.0;
            for c in 0..d {
                delta[c] = wrap_diff(xj[c] - xi[c], x_period);
                dist2 += delta[c] * delta[c];
            }
            if dist2 > reject * reject {
                continue;
            }
            let w = kernel.eval_fast(vi, &delta)?;
            if w > 0.0 {
                let vj = ensemble.velocity(j);
                for c in 0..d {
                    acc[c] += w * (vj[c] - vi[c]);
                }
            }
        }
        for c in 0..d {
            row[c] = acc[c] / n as f64;
        }
        Ok(())
    };
    if n >= 192 {
        out.par_chunks_mut(d)
            .enumerate()
            .try_for_each(|(i, row)| compute_row(i, row))?;
    } else {
        for (i, row) in out.chunks_mut(d).enumerate() {
            compute_row(i, row)?;
        }
    }
    Ok(())
}

fn reject_radius(kernel: &MollifiedKernel) -> f64 {
    let extra = match &kernel.region {
        SensitivityRegion::VariableBall { r } => r.lipschitz_bound() * kernel.eta,
        _ => 0.0,
    };
    kernel.region.master_radius() + kernel.eps + extra + 1e-12
}

/// Sorted snapshot of a 1d cloud under a fixed-ball kernel, supporting
/// `O(log M + band)` mean-force queries. Also serves as the frozen mean-field
/// law in coupled runs.
#[derive(Debug, Clone)]
pub struct FrozenCloud1d {
    pos: Vec<f64>,
    vel: Vec<f64>,
    pref_vel: Vec<f64>,
    period: Option<f64>,
    r_in: f64,
    r_out: f64,
    radius: f64,
    eps: f64,
    inv_m: f64,
    mean_vel: f64,
}

impl FrozenCloud1d {
    /// Returns `None` when the fast path does not apply (d > 1, non-ball
    /// region, or a torus too small for the interaction radius).
    pub fn build(
        positions: &[f64],
        velocities: &[f64],
        kernel: &MollifiedKernel,
        period: Option<f64>,
    ) -> Option<Self> {
        let radius = match kernel.region {
            SensitivityRegion::FixedBall { r } => r,
            _ => return None,
        };
        if positions.len() != velocities.len() {
            return None;
        }
        let r_in = radius - kernel.eps;
        let r_out = radius + kernel.eps;
        if r_in <= 0.0 {
            return None;
        }
        let full_coverage = period.map(|l| 2.0 * r_in >= l).unwrap_or(false);
        if let Some(l) = period {
            if 2.0 * r_out >= l && !full_coverage {
                return None; // band wraps onto itself; use the generic path
            }
        }
        let m = positions.len();
        let mut order: Vec<usize> = (0..m).collect();
        let wrapped: Vec<f64> = match period {
            Some(l) => positions.iter().map(|x| x.rem_euclid(l)).collect(),
            None => positions.to_vec(),
        };
        order.sort_by(|&a, &b| wrapped[a].total_cmp(&wrapped[b]));
        let pos: Vec<f64> = order.iter().map(|&i| wrapped[i]).collect();
        let vel: Vec<f64> = order.iter().map(|&i| velocities[i]).collect();
        let mut pref_vel = Vec::with_capacity(m + 1);
        pref_vel.push(0.0);
        let mut acc = 0.0;
        for v in &vel {
            acc += v;
            pref_vel.push(acc);
        }
        Some(Self {
            pos,
            vel,
            pref_vel,
            period,
            r_in,
            r_out,
            radius,
            eps: kernel.eps,
            inv_m: 1.0 / m as f64,
            mean_vel: acc / m as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.vel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vel.is_empty()
    }

    /// `(1/M) sum_j w(|y_j - x|) (v_j - v)`.
    pub fn mean_force(&self, x: f64, v: f64) -> f64 {
        if let Some(l) = self.period {
            if 2.0 * self.r_in >= l {
                return self.mean_vel - v;
            }
        }
        let x = match self.period {
            Some(l) => x.rem_euclid(l),
            None => x,
        };
        let (core_count, core_sum) = self.range_sum(x - self.r_in, x + self.r_in);
        let mut acc = core_sum - core_count as f64 * v;
        // transition bands on both sides
        acc += self.band_sum(x - self.r_out, x - self.r_in, x, v);
        acc += self.band_sum(x + self.r_in, x + self.r_out, x, v);
        acc * self.inv_m
    }

    /// Count and velocity sum over positions in `[a, b]`, periodic-aware.
    fn range_sum(&self, a: f64, b: f64) -> (usize, f64) {
        match self.period {
            None => self.segment_sum(a, b),
            Some(l) => {
                let (mut count, mut sum) = (0usize, 0.0f64);
                for (sa, sb) in split_periodic(a, b, l) {
                    let (c, s) = self.segment_sum(sa, sb);
                    count += c;
                    sum += s;
                }
                (count, sum)
            }
        }
    }

    fn segment_sum(&self, a: f64, b: f64) -> (usize, f64) {
        let lo = self.pos.partition_point(|p| *p < a);
        let hi = self.pos.partition_point(|p| *p <= b);
        (hi - lo, self.pref_vel[hi] - self.pref_vel[lo])
    }

    /// Kernel-weighted contribution from positions in the open band `(a, b)`.
    fn band_sum(&self, a: f64, b: f64, x: f64, v: f64) -> f64 {
        let mut acc = 0.0;
        let mut visit = |lo: usize, hi: usize| {
            for k in lo..hi {
                let mut delta = (self.pos[k] - x).abs();
                if let Some(l) = self.period {
                    delta = delta.min(l - delta);
                }
                if delta > self.r_in && delta < self.r_out {
                    let w = smoothed_ball_indicator(delta, self.radius, self.eps, 1, 32);
                    acc += w * (self.vel[k] - v);
                }
            }
        };
        match self.period {
            None => {
                let lo = self.pos.partition_point(|p| *p <= a);
                let hi = self.pos.partition_point(|p| *p < b);
                visit(lo, hi);
            }
            Some(l) => {
                for (sa, sb) in split_periodic(a, b, l) {
                    let lo = self.pos.partition_point(|p| *p < sa - 1e-15);
                    let hi = self.pos.partition_point(|p| *p <= sb + 1e-15);
                    visit(lo, hi);
                }
            }
        }
        acc
    }
}

/// Split `[a, b]` into segments inside `[0, l)` under wrapping; assumes
/// `b - a < l`.
fn split_periodic(a: f64, b: f64, l: f64) -> Vec<(f64, f64)> {
    let a0 = a.rem_euclid(l);
    let len = b - a;
    if a0 + len <= l {
        vec![(a0, a0 + len)]
    } else {
        vec![(a0, l), (0.0, a0 + len - l)]
    }
}
