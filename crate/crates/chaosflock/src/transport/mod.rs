//! Exact Wasserstein-1 machinery for weighted point clouds, the smoothed
//! `W1^gamma` functional, moment bookkeeping, and sampling-rate models.

pub mod assignment;

use crate::rng::CounterRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ASSIGNMENT_SIZE_LIMIT: usize = 4096;
pub const W1_GAMMA_EXACT_LIMIT: usize = 64;

#[derive(Debug, Clone, Error)]
pub enum TransportError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("assignment size {0} exceeds limit {ASSIGNMENT_SIZE_LIMIT}")]
    SizeLimitExceeded(usize),
    #[error("weights are not commensurate; cannot split atoms exactly")]
    UnsupportedWeights,
    #[error("rate case excluded: {0}")]
    CaseExcluded(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Weighted point cloud on `R^k`; weights are normalized to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<f64>,
    weights: Vec<f64>,
    dim: usize,
}

impl EmpiricalMeasure {
    pub fn uniform(points: Vec<f64>, dim: usize) -> Result<Self, TransportError> {
        let m = points.len() / dim.max(1);
        Self::weighted(points, vec![1.0 / m as f64; m], dim)
    }

    pub fn weighted(points: Vec<f64>, weights: Vec<f64>, dim: usize) -> Result<Self, TransportError> {
        if dim == 0 || points.len() % dim != 0 {
            return Err(TransportError::InvalidInput(format!(
                "flat point buffer of length {} is not a multiple of dim {dim}",
                points.len()
            )));
        }
        let m = points.len() / dim;
        if weights.len() != m {
            return Err(TransportError::InvalidInput(format!(
                "{m} points but {} weights",
                weights.len()
            )));
        }
        if points.iter().any(|c| !c.is_finite()) {
            return Err(TransportError::InvalidInput("non-finite coordinate".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(TransportError::InvalidInput("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(TransportError::InvalidInput("weights sum to zero".into()));
        }
        let weights = weights.iter().map(|w| w / sum).collect();
        Ok(Self { points, weights, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TransportError> {
        let dim = rows.first().map_or(1, Vec::len);
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::uniform(flat, dim)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn is_uniform(&self) -> bool {
        let w0 = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - w0).abs() <= 1e-12)
    }

    /// `int |x|^q` over the first `pos_dims` coordinates (the position block).
    pub fn position_moment(&self, q: f64, pos_dims: usize) -> f64 {
        assert!(q >= 1.0, "moment order must be >= 1");
        let k = pos_dims.min(self.dim);
        (0..self.len())
            .map(|i| {
                let p = self.point(i);
                let r: f64 = p[..k].iter().map(|c| c * c).sum::<f64>().sqrt();
                self.weights[i] * r.powf(q)
            })
            .sum()
    }
}

/// Ground metric on the sample space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundMetric {
    /// Euclidean norm on the full vector.
    Euclidean,
    /// `|dx| + |dv|`: Euclidean on the first `split` coordinates plus
    /// Euclidean on the rest, the coupling metric of phase space.
    SumSplit { split: usize },
}

impl GroundMetric {
    #[inline]
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Self::Euclidean => {
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            }
            Self::SumSplit { split } => {
                let s = (*split).min(a.len());
                let dx: f64 = a[..s].iter().zip(&b[..s]).map(|(x, y)| (x - y) * (x - y)).sum();
                let dv: f64 =
                    a[s..].iter().zip(&b[s..]).map(|(x, y)| (x - y) * (x - y)).sum();
                dx.sqrt() + dv.sqrt()
            }
        }
    }
}

/// Exact W1 between 1d weighted samples via the quantile coupling.
pub fn w1_sorted_1d(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<f64, TransportError> {
    if a.dim != 1 || b.dim != 1 {
        return Err(TransportError::DimensionMismatch(a.dim, b.dim));
    }
    let order = |m: &EmpiricalMeasure| {
        let mut idx: Vec<usize> = (0..m.len()).collect();
        idx.sort_by(|&i, &j| m.points[i].total_cmp(&m.points[j]));
        idx
    };
    let (ia, ib) = (order(a), order(b));
    let mut cost = 0.0;
    let (mut ka, mut kb) = (0usize, 0usize);
    let (mut ra, mut rb) = (a.weights[ia[0]], b.weights[ib[0]]);
    loop {
        let step = ra.min(rb);
        cost += step * (a.points[ia[ka]] - b.points[ib[kb]]).abs();
        ra -= step;
        rb -= step;
        if ra <= 1e-15 {
            ka += 1;
            if ka >= ia.len() {
                break;
            }
            ra = a.weights[ia[ka]];
        }
        if rb <= 1e-15 {
            kb += 1;
            if kb >= ib.len() {
                break;
            }
            rb = b.weights[ib[kb]];
        }
    }
    Ok(cost)
}

/// Exact W1 by optimal assignment. Requires matched uniform clouds (general
/// weights are split to a common refinement first).
pub fn w1_assignment(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    metric: GroundMetric,
) -> Result<f64, TransportError> {
    Ok(w1_assignment_with_plan(a, b, metric)?.1)
}

/// As [`w1_assignment`], also returning the optimal pairing on the (possibly
/// atom-split) clouds.
pub fn w1_assignment_with_plan(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    metric: GroundMetric,
) -> Result<(Vec<usize>, f64), TransportError> {
    if a.dim != b.dim {
        return Err(TransportError::DimensionMismatch(a.dim, b.dim));
    }
    if a.len() == b.len() && a.is_uniform() && b.is_uniform() {
        return assignment_cost(a, b, metric);
    }
    let (ra, rb) = common_refinement(a, b)?;
    assignment_cost(&ra, &rb, metric)
}

fn assignment_cost(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    metric: GroundMetric,
) -> Result<(Vec<usize>, f64), TransportError> {
    let n = a.len();
    if n != b.len() {
        return Err(TransportError::InvalidInput(format!(
            "matched clouds required: {n} vs {}",
            b.len()
        )));
    }
    if n > ASSIGNMENT_SIZE_LIMIT {
        return Err(TransportError::SizeLimitExceeded(n));
    }
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let mut cost = vec![0.0f64; n * n];
    for i in 0..n {
        let p = a.point(i);
        for j in 0..n {
            cost[i * n + j] = metric.dist(p, b.point(j));
        }
    }
    let (perm, total) = assignment::lapjv(n, &cost);
    Ok((perm, total / n as f64))
}

/// Split both clouds into atoms of a common weight quantum `1/l`.
fn common_refinement(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
) -> Result<(EmpiricalMeasure, EmpiricalMeasure), TransportError> {
    let quantum_of = |m: &EmpiricalMeasure| -> Option<usize> {
        (m.len()..=ASSIGNMENT_SIZE_LIMIT).find(|&l| {
            m.weights.iter().all(|w| {
                let k = w * l as f64;
                (k - k.round()).abs() < 1e-9
            })
        })
    };
    let la = quantum_of(a).ok_or(TransportError::UnsupportedWeights)?;
    let lb = quantum_of(b).ok_or(TransportError::UnsupportedWeights)?;
    let l = lcm(la, lb);
    if l > ASSIGNMENT_SIZE_LIMIT {
        return Err(TransportError::SizeLimitExceeded(l));
    }
    let split = |m: &EmpiricalMeasure| -> EmpiricalMeasure {
        let mut pts = Vec::with_capacity(l * m.dim);
        for i in 0..m.len() {
            let copies = (m.weights[i] * l as f64).round() as usize;
            for _ in 0..copies {
                pts.extend_from_slice(m.point(i));
            }
        }
        EmpiricalMeasure::uniform(pts, m.dim).expect("split preserves validity")
    };
    Ok((split(a), split(b)))
}

fn lcm(a: usize, b: usize) -> usize {
    let gcd = |mut a: usize, mut b: usize| {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    };
    a / gcd(a, b) * b
}

/// The smoothed coupling functional `E[sqrt(gamma^2 + |X-Y|^2)]`.
///
/// Evaluated on the supplied pairing, or on the optimal-W1 assignment when
/// none is given. Not a metric; see [`w1_gamma_exact`] for the exact
/// minimizer on small clouds.
pub fn w1_gamma(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    gamma: f64,
    coupling: Option<&[usize]>,
    metric: GroundMetric,
) -> Result<f64, TransportError> {
    if gamma < 0.0 {
        return Err(TransportError::InvalidInput(format!("gamma must be >= 0, got {gamma}")));
    }
    let (perm, _) = match coupling {
        Some(p) => (p.to_vec(), 0.0),
        None => w1_assignment_with_plan(a, b, metric)?,
    };
    if perm.len() != a.len() || a.len() != b.len() {
        return Err(TransportError::InvalidInput("coupling length mismatch".into()));
    }
    let n = perm.len();
    let mean = (0..n)
        .map(|i| {
            let d = metric.dist(a.point(i), b.point(perm[i]));
            (gamma * gamma + d * d).sqrt()
        })
        .sum::<f64>()
        / n as f64;
    Ok(mean)
}

/// Exact minimization of the `W1^gamma` functional over assignments
/// (small clouds only).
pub fn w1_gamma_exact(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    gamma: f64,
    metric: GroundMetric,
) -> Result<f64, TransportError> {
    let n = a.len();
    if n != b.len() {
        return Err(TransportError::InvalidInput("matched clouds required".into()));
    }
    if n > W1_GAMMA_EXACT_LIMIT {
        return Err(TransportError::SizeLimitExceeded(n));
    }
    let mut cost = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let d = metric.dist(a.point(i), b.point(j));
            cost[i * n + j] = (gamma * gamma + d * d).sqrt();
        }
    }
    let (_, total) = assignment::lapjv(n, &cost);
    Ok(total / n as f64)
}

/// Moment-dependent empirical-measure convergence rate (constant-free).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    /// Wasserstein order (1 throughout this crate).
    pub p: f64,
    /// Ambient sampling dimension.
    pub n: usize,
    /// Moment order, must exceed `p`.
    pub q: f64,
    /// The q-th moment of the sampled law.
    pub m_q: f64,
}

impl RateModel {
    pub fn new(p: f64, n: usize, q: f64, m_q: f64) -> Result<Self, TransportError> {
        if q <= p {
            return Err(TransportError::InvalidInput(format!("need q > p, got q={q} p={p}")));
        }
        if m_q < 0.0 {
            return Err(TransportError::InvalidInput("moment must be nonnegative".into()));
        }
        Ok(Self { p, n, q, m_q })
    }
}

/// Case-selected sampling rate `E[W_p^p(mu^N, mu)]` up to its constant:
/// `m_q^{p/q} * { N^{-1/2} + N^{-(q-p)/q} , ... }` by the sign of `2p - n`.
pub fn fg_rate(model: &RateModel, n_samples: u64) -> Result<f64, TransportError> {
    let RateModel { p, n, q, m_q } = *model;
    let nf = n_samples as f64;
    let dim = n as f64;
    let tail = nf.powf(-(q - p) / q);
    let bracket = if 2.0 * p > dim {
        if (q - 2.0 * p).abs() < 1e-12 {
            return Err(TransportError::CaseExcluded(format!("q = 2p = {q} excluded when 2p > n")));
        }
        nf.powf(-0.5) + tail
    } else if 2.0 * p == dim {
        if (q - 2.0 * p).abs() < 1e-12 {
            return Err(TransportError::CaseExcluded(format!("q = 2p = {q} excluded when 2p = n")));
        }
        nf.powf(-0.5) * (1.0 + nf).ln() + tail
    } else {
        if dim > p && (q - dim / (dim - p)).abs() < 1e-12 {
            return Err(TransportError::CaseExcluded(format!(
                "q = n/(n-p) = {q} excluded when 2p < n"
            )));
        }
        nf.powf(-p / dim) + tail
    };
    Ok(m_q.powf(p / q) * bracket)
}

/// Factorial-enumeration assignment oracle for cross-checks (n <= 9).
pub fn w1_exhaustive(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    metric: GroundMetric,
) -> Result<f64, TransportError> {
    let n = a.len();
    if n != b.len() || a.dim() != b.dim() {
        return Err(TransportError::InvalidInput("matched clouds required".into()));
    }
    if n > 9 {
        return Err(TransportError::SizeLimitExceeded(n));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let eval = |p: &[usize]| -> f64 {
        p.iter().enumerate().map(|(i, &j)| metric.dist(a.point(i), b.point(j))).sum::<f64>()
            / n as f64
    };
    let mut best = eval(&perm);
    // Heap's algorithm over all permutations
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(eval(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}

/// Ordinary least squares of `ln y` on `ln x`: `(slope, intercept, slope se)`.
pub fn log_log_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2);
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let dof = (n - 2.0).max(1.0);
    let resid: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let se = (resid / dof / sxx).sqrt();
    (slope, intercept, se)
}

/// Draw `count` points i.i.d. (with replacement) from a weighted cloud.
pub fn resample(
    m: &EmpiricalMeasure,
    count: usize,
    seed: u64,
) -> Result<EmpiricalMeasure, TransportError> {
    let rng = CounterRng::new(seed);
    let mut cdf = Vec::with_capacity(m.len());
    let mut acc = 0.0;
    for w in &m.weights {
        acc += w;
        cdf.push(acc);
    }
    let mut pts = Vec::with_capacity(count * m.dim);
    for k in 0..count {
        let u = rng.uniform(k as u64);
        let idx = cdf.partition_point(|c| *c < u).min(m.len() - 1);
        pts.extend_from_slice(m.point(idx));
    }
    EmpiricalMeasure::uniform(pts, m.dim)
}
