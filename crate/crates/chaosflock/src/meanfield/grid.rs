//! Gridded phase density for the d = 1 kinetic solver: periodic in `x`,
//! no-flux walls at `v = +-v_box`, cell-average values.

use crate::rng::CounterRng;
use crate::transport::EmpiricalMeasure;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub nx: usize,
    pub nv: usize,
    /// Torus length in `x`.
    pub length: f64,
    /// Velocity wall; must exceed the speed cap so the support never reaches it.
    pub v_box: f64,
}

impl PhaseGrid {
    pub fn dx(&self) -> f64 {
        self.length / self.nx as f64
    }

    pub fn dv(&self) -> f64 {
        2.0 * self.v_box / self.nv as f64
    }

    pub fn x_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dx()
    }

    pub fn v_center(&self, m: usize) -> f64 {
        -self.v_box + (m as f64 + 0.5) * self.dv()
    }

    /// Face velocity between rows `m-1` and `m` (so `m` runs 0..=nv).
    pub fn v_face(&self, m: usize) -> f64 {
        -self.v_box + m as f64 * self.dv()
    }

    pub fn cells(&self) -> usize {
        self.nx * self.nv
    }
}

/// Nonnegative cell averages, row-major by velocity: `values[m * nx + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDensity {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
    /// Timestep used by a bare `vfp_step`; the self-consistent driver picks
    /// its own CFL-limited step.
    pub dt_pde: f64,
}

impl PhaseDensity {
    /// Cell-center sampled density, normalized to unit mass.
    pub fn from_fn(grid: PhaseGrid, dt_pde: f64, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = vec![0.0; grid.cells()];
        for m in 0..grid.nv {
            for j in 0..grid.nx {
                values[m * grid.nx + j] = f(grid.x_center(j), grid.v_center(m)).max(0.0);
            }
        }
        let mut d = Self { grid, values, dt_pde };
        d.normalize();
        d
    }

    pub fn value(&self, j: usize, m: usize) -> f64 {
        self.values[m * self.grid.nx + j]
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx() * self.grid.dv()
    }

    pub fn momentum(&self) -> f64 {
        let nx = self.grid.nx;
        let mut acc = 0.0;
        for m in 0..self.grid.nv {
            let row_sum: f64 = self.values[m * nx..(m + 1) * nx].iter().sum();
            acc += self.grid.v_center(m) * row_sum;
        }
        acc * self.grid.dx() * self.grid.dv()
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Outer edge of the farthest row carrying mass above `1e-12 * linf`.
    pub fn velocity_support(&self) -> f64 {
        let tol = 1e-12 * self.linf();
        let nx = self.grid.nx;
        let mut sup: f64 = 0.0;
        for m in 0..self.grid.nv {
            if self.values[m * nx..(m + 1) * nx].iter().any(|&v| v > tol) {
                let edge = self.grid.v_center(m).abs() + 0.5 * self.grid.dv();
                sup = sup.max(edge);
            }
        }
        sup
    }

    /// `int |x - L/2|^q f`; positions are measured from the domain center so
    /// the moment is wrap-agnostic while mass stays away from the seam.
    pub fn position_moment(&self, q: f64) -> f64 {
        let nx = self.grid.nx;
        let c = 0.5 * self.grid.length;
        let mut acc = 0.0;
        for j in 0..nx {
            let w = (self.grid.x_center(j) - c).abs().powf(q);
            let mut col = 0.0;
            for m in 0..self.grid.nv {
                col += self.values[m * nx + j];
            }
            acc += w * col;
        }
        acc * self.grid.dx() * self.grid.dv()
    }

    pub fn x_marginal(&self) -> Vec<f64> {
        let nx = self.grid.nx;
        let mut out = vec![0.0; nx];
        for m in 0..self.grid.nv {
            for j in 0..nx {
                out[j] += self.values[m * nx + j];
            }
        }
        let dv = self.grid.dv();
        out.iter_mut().for_each(|c| *c *= dv);
        out
    }

    /// Column velocity moments `(m0_j, m1_j)`: mass and momentum density per
    /// unit x.
    pub fn column_moments(&self) -> (Vec<f64>, Vec<f64>) {
        let nx = self.grid.nx;
        let mut m0 = vec![0.0; nx];
        let mut m1 = vec![0.0; nx];
        for m in 0..self.grid.nv {
            let v = self.grid.v_center(m);
            for j in 0..nx {
                let f = self.values[m * nx + j];
                m0[j] += f;
                m1[j] += v * f;
            }
        }
        let dv = self.grid.dv();
        m0.iter_mut().for_each(|c| *c *= dv);
        m1.iter_mut().for_each(|c| *c *= dv);
        (m0, m1)
    }

    pub fn normalize(&mut self) {
        let m = self.mass();
        assert!(m > 0.0, "cannot normalize an empty density");
        self.values.iter_mut().for_each(|v| *v /= m);
    }

    /// Translate by a whole number of cells in x (periodic).
    pub fn translated_cells(&self, shift: usize) -> Self {
        let nx = self.grid.nx;
        let mut out = self.clone();
        for m in 0..self.grid.nv {
            for j in 0..nx {
                out.values[m * nx + (j + shift) % nx] = self.values[m * nx + j];
            }
        }
        out
    }

    /// Draw `count` phase points by inverse CDF: column from the x-marginal,
    /// then velocity from that column's conditional, linear within cells.
    pub fn sample_cloud(&self, count: usize, seed: u64) -> EmpiricalMeasure {
        let nx = self.grid.nx;
        let nv = self.grid.nv;
        let col_mass: Vec<f64> = {
            let mut out = vec![0.0; nx];
            for m in 0..nv {
                for j in 0..nx {
                    out[j] += self.values[m * nx + j];
                }
            }
            out
        };
        let mut col_cdf = Vec::with_capacity(nx);
        let mut acc = 0.0;
        for c in &col_mass {
            acc += c;
            col_cdf.push(acc);
        }
        let total = acc;
        let rng = CounterRng::new(seed);
        let mut pts = Vec::with_capacity(2 * count);
        for k in 0..count {
            let u1 = rng.uniform(2 * k as u64) * total;
            let j = col_cdf.partition_point(|c| *c < u1).min(nx - 1);
            let below = if j == 0 { 0.0 } else { col_cdf[j - 1] };
            let frac_x = if col_mass[j] > 0.0 { (u1 - below) / col_mass[j] } else { 0.5 };
            let x = (j as f64 + frac_x.clamp(0.0, 1.0)) * self.grid.dx();
            // conditional on column j
            let u2 = rng.uniform(2 * k as u64 + 1) * col_mass[j];
            let mut cum = 0.0;
            let mut m_pick = nv - 1;
            let mut frac_v = 0.5;
            for m in 0..nv {
                let f = self.values[m * nx + j];
                if cum + f >= u2 && f > 0.0 {
                    m_pick = m;
                    frac_v = ((u2 - cum) / f).clamp(0.0, 1.0);
                    break;
                }
                cum += f;
            }
            let v = self.grid.v_face(m_pick) + frac_v * self.grid.dv();
            pts.push(x);
            pts.push(v);
        }
        EmpiricalMeasure::uniform(pts, 2).expect("grid samples are finite")
    }
}
