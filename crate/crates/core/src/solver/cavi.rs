use crate::error::{finite, Error, Result};
use crate::numerics::norm_cdf;
use crate::potentials::{find_mode, Potential};
use crate::transport::{MCQuadrature, QuantileGrid, Scheme, TransportMap};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Settings of the coordinate-ascent baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaviConfig {
    /// Points of each uniform x-grid.
    pub grid_points: usize,
    /// Half-width of each x-grid in units of 1/√α around the mode.
    pub half_width: f64,
    /// Points used for the expectation over the other coordinates.
    pub mc_samples: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Stop once every coordinate's L¹ density change in a sweep is at most `tol`.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Node count of the returned quantile-grid map.
    pub grid_m: usize,
    /// The expected energy is evaluated on every `energy_stride`-th grid point (plus
    /// the last) and filled in by local cubic interpolation; 1 evaluates every point.
    pub energy_stride: usize,
}

impl Default for CaviConfig {
    fn default() -> Self {
        Self {
            grid_points: 513,
            half_width: 8.0,
            mc_samples: 4096,
            seed: 0,
            scheme: Scheme::Halton,
            tol: 1e-9,
            max_sweeps: 500,
            grid_m: 64,
            energy_stride: 1,
        }
    }
}

/// A density tabulated on a uniform grid, normalized by the trapezoid rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub lo: f64,
    pub hi: f64,
    pub values: Vec<f64>,
}

impl GridDensity {
    /// Normalizes exp(−e) on the grid (e is shifted by its minimum first).
    pub fn from_log_weights(lo: f64, hi: f64, neg_log: &[f64]) -> Result<Self> {
        let min = neg_log.iter().copied().fold(f64::INFINITY, f64::min);
        finite(min, "log density")?;
        let values = neg_log.iter().map(|e| (min - e).exp()).collect();
        let mut g = Self { lo, hi, values };
        let z = g.mass();
        g.values.iter_mut().for_each(|v| *v /= z);
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.len() - 1) as f64
    }

    pub fn x(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.step()
    }

    fn trapz(&self, f: impl Fn(usize, f64) -> f64) -> f64 {
        let n = self.len();
        let s: f64 = (0..n)
            .map(|k| {
                let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                w * f(k, self.x(k))
            })
            .sum();
        s * self.step()
    }

    pub fn mass(&self) -> f64 {
        self.trapz(|k, _| self.values[k])
    }

    pub fn mean(&self) -> f64 {
        self.trapz(|k, x| x * self.values[k])
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.trapz(|k, x| (x - m).powi(2) * self.values[k])
    }

    /// ∫|f − g| for densities on the same grid.
    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.trapz(|k, _| (self.values[k] - other.values[k]).abs())
    }

    /// Cumulative trapezoid CDF at the grid points.
    pub fn cdf_table(&self) -> Vec<f64> {
        let h = self.step();
        let mut c = Vec::with_capacity(self.len());
        c.push(0.0);
        for k in 1..self.len() {
            let prev = c[k - 1];
            c.push(prev + 0.5 * h * (self.values[k - 1] + self.values[k]));
        }
        c
    }

    /// Quantile of the piecewise-linear density, inverting the trapezoid CDF exactly.
    pub fn quantile_with(&self, cdf: &[f64], p: f64) -> f64 {
        let n = self.len();
        let total = cdf[n - 1];
        let target = p.clamp(0.0, 1.0) * total;
        let k = cdf.partition_point(|&c| c <= target).clamp(1, n - 1) - 1;
        let h = self.step();
        let (f0, f1) = (self.values[k], self.values[k + 1]);
        let r = (target - cdf[k]).max(0.0);
        let a = (f1 - f0) / (2.0 * h);
        let disc = (f0 * f0 + 4.0 * a * r).max(0.0).sqrt();
        let s = if f0 + disc > 0.0 { 2.0 * r / (f0 + disc) } else { 0.5 * h };
        self.x(k) + s.clamp(0.0, h)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.quantile_with(&self.cdf_table(), p)
    }
}

/// Output of [`cavi_solve`].
#[derive(Debug, Clone)]
pub struct CaviResult {
    pub densities: Vec<GridDensity>,
    pub map: TransportMap,
    pub sweeps: usize,
    pub last_change: f64,
}

/// Coordinate ascent log νⱼ(xⱼ) ← −Ê[V(xⱼ, X₋ⱼ)] with X₋ⱼ drawn by inverse CDF from the
/// current marginals at frozen quadrature points.
pub fn cavi_solve(p: &dyn Potential, cfg: &CaviConfig) -> Result<CaviResult> {
    let d = p.dim();
    if cfg.grid_points < 3 || !(cfg.half_width > 0.0) || !(cfg.tol > 0.0) || cfg.energy_stride == 0 {
        return Err(Error::Param(
            "CAVI needs grid_points >= 3, half_width > 0, tol > 0, energy_stride >= 1".into(),
        ));
    }
    let q = MCQuadrature::with_scheme(cfg.seed, cfg.mc_samples, d, cfg.scheme)?;
    let probs: Vec<f64> = q.points().as_slice().iter().map(|&u| norm_cdf(u)).collect();
    let n = q.len();
    let mode = find_mode(p, &vec![0.0; d])?;
    let hess = p.hessian(&mode.x_star);
    let half = cfg.half_width / p.alpha().sqrt();
    let g = cfg.grid_points;

    let mut dens: Vec<GridDensity> = (0..d)
        .map(|j| {
            let (lo, hi) = (mode.x_star[j] - half, mode.x_star[j] + half);
            let prec = hess[(j, j)];
            let step = (hi - lo) / (g - 1) as f64;
            let e: Vec<f64> = (0..g)
                .map(|k| 0.5 * prec * (lo + k as f64 * step - mode.x_star[j]).powi(2))
                .collect();
            GridDensity::from_log_weights(lo, hi, &e)
        })
        .collect::<Result<_>>()?;

    let mut xs = vec![0.0; n * d];
    for j in 0..d {
        fill_column(&dens[j], &probs, j, d, &mut xs);
    }

    let coarse = coarse_indices(g, cfg.energy_stride);
    let mut row = vec![0.0; d];
    let mut coarse_energy = vec![0.0; coarse.len()];
    let mut energy = vec![0.0; g];
    let mut last_change = f64::INFINITY;
    for sweep in 1..=cfg.max_sweeps {
        let mut change: f64 = 0.0;
        for j in 0..d {
            let grid_x: Vec<f64> = coarse.iter().map(|&k| dens[j].x(k)).collect();
            coarse_energy.iter_mut().for_each(|e| *e = 0.0);
            for k in 0..n {
                row.copy_from_slice(&xs[k * d..(k + 1) * d]);
                for (e, &x) in coarse_energy.iter_mut().zip(&grid_x) {
                    row[j] = x;
                    *e += p.value(&row);
                }
            }
            coarse_energy.iter_mut().for_each(|e| *e /= n as f64);
            interpolate_energy(&coarse, &coarse_energy, &mut energy);
            let next = GridDensity::from_log_weights(dens[j].lo, dens[j].hi, &energy)?;
            change = change.max(next.l1_distance(&dens[j]));
            dens[j] = next;
            fill_column(&dens[j], &probs, j, d, &mut xs);
        }
        last_change = change;
        if change <= cfg.tol {
            let grid = Arc::new(QuantileGrid::new(cfg.grid_m)?);
            let map = quantile_map(&dens, grid)?;
            return Ok(CaviResult { densities: dens, map, sweeps: sweep, last_change });
        }
    }
    Err(Error::Convergence { method: "cavi_solve", iterations: cfg.max_sweeps, residual: last_change })
}

/// Multiples of `stride` below `g`, plus the last index.
fn coarse_indices(g: usize, stride: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..g).step_by(stride).collect();
    if *idx.last().unwrap_or(&0) != g - 1 {
        idx.push(g - 1);
    }
    idx
}

/// Fills `out[k]` by cubic Lagrange interpolation through the four coarse nodes
/// nearest to k (exact for cubic energies, and a copy where k is a node).
fn interpolate_energy(nodes: &[usize], values: &[f64], out: &mut [f64]) {
    if nodes.len() == out.len() {
        out.copy_from_slice(values);
        return;
    }
    let m = nodes.len();
    let mut seg = 0;
    for (k, o) in out.iter_mut().enumerate() {
        while seg + 2 < m && nodes[seg + 1] <= k {
            seg += 1;
        }
        if nodes[seg] == k {
            *o = values[seg];
            continue;
        }
        let start = seg.saturating_sub(1).min(m.saturating_sub(4));
        let end = (start + 4).min(m);
        let x = k as f64;
        let mut acc = 0.0;
        for a in start..end {
            let mut w = 1.0;
            for b in start..end {
                if a != b {
                    w *= (x - nodes[b] as f64) / (nodes[a] as f64 - nodes[b] as f64);
                }
            }
            acc += w * values[a];
        }
        *o = acc;
    }
}

fn fill_column(dens: &GridDensity, probs: &[f64], j: usize, d: usize, xs: &mut [f64]) {
    let cdf = dens.cdf_table();
    for k in 0..probs.len() / d {
        xs[k * d + j] = dens.quantile_with(&cdf, probs[k * d + j]);
    }
}

/// Quantile-grid map of a product of tabulated marginals.
pub fn quantile_map(dens: &[GridDensity], grid: Arc<QuantileGrid>) -> Result<TransportMap> {
    let mut values = Vec::with_capacity(dens.len() * grid.len());
    for g in dens {
        let cdf = g.cdf_table();
        values.extend(grid.nodes().iter().map(|&u| g.quantile_with(&cdf, norm_cdf(u))));
    }
    TransportMap::new(grid, dens.len(), values)
}
