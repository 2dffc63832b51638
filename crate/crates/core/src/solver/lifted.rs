use super::functional::{elbo_offset, potential_mean, Plan};
use crate::error::{Error, Result};
use crate::potentials::{find_mode, Potential};
use crate::transport::{MCQuadrature, QuantileGrid, Scheme, TransportMap};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Settings of the lifted solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub grid_m: usize,
    pub mc_samples: usize,
    pub seed: u64,
    /// Stopping threshold on the L²(ρ)-normalized projected first variation.
    pub tol: f64,
    pub max_iters: usize,
    pub scheme: Scheme,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { grid_m: 64, mc_samples: 20_000, seed: 0, tol: 1e-8, max_iters: 200, scheme: Scheme::Halton }
    }
}

impl SolverConfig {
    pub fn quadrature(&self, d: usize) -> Result<MCQuadrature> {
        MCQuadrature::with_scheme(self.seed, self.mc_samples, d, self.scheme)
    }

    pub fn grid(&self) -> Result<Arc<QuantileGrid>> {
        QuantileGrid::new(self.grid_m).map(Arc::new)
    }
}

/// Starting point of the descent.
#[derive(Debug, Clone, Default)]
pub enum Init {
    /// Affine map with slope 1/√β through the mode.
    #[default]
    Auto,
    /// A user map, resampled onto the solver grid and projected onto the band.
    Map(TransportMap),
}

/// Minimizer of the lifted functional with diagnostics.
#[derive(Debug, Clone)]
pub struct LiftedSolution {
    pub map: TransportMap,
    pub elbo: f64,
    pub functional_value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub config_hash: String,
    /// Functional value after every accepted step, starting from the initial map.
    pub trace: Vec<f64>,
}

/// Solves the lifted problem with quadrature points generated from `cfg`.
pub fn solve_lifted(p: &dyn Potential, cfg: &SolverConfig) -> Result<LiftedSolution> {
    let q = cfg.quadrature(p.dim())?;
    solve_lifted_with(p, cfg, &q, Init::Auto)
}

/// Solves the lifted problem on the supplied quadrature points (common random numbers).
pub fn solve_lifted_with(
    p: &dyn Potential,
    cfg: &SolverConfig,
    q: &MCQuadrature,
    init: Init,
) -> Result<LiftedSolution> {
    let d = p.dim();
    if q.dim() != d {
        return Err(Error::shape(d, q.dim()));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::Param(format!("tol must be positive, got {}", cfg.tol)));
    }
    let (alpha, beta) = (p.alpha(), p.beta());
    let grid = cfg.grid()?;
    let start = match init {
        Init::Auto => {
            let mode = find_mode(p, &vec![0.0; d])?;
            let std = vec![1.0 / beta.sqrt(); d];
            TransportMap::affine(grid.clone(), &mode.x_star, &std)?
        }
        Init::Map(t) => {
            if t.dim() != d {
                return Err(Error::shape(d, t.dim()));
            }
            if t.grid() == &grid { t } else { t.resample(grid.clone())? }
        }
    };
    let start = start.project_band(alpha, beta)?;
    let solver = Lifted::new(p, grid.clone(), q, alpha, beta);
    let mut z = solver.to_z(&start);
    let mut f = solver.functional(&z)?;
    let mut trace = vec![f];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..=cfg.max_iters {
        iterations = it;
        let t = solver.to_map(&z)?;
        let (gz, hz) = solver.derivatives(&t, &z, it < cfg.max_iters)?;
        residual = solver.residual(&z, &gz);
        if residual <= cfg.tol {
            let functional_value = f;
            return Ok(LiftedSolution {
                map: t.with_band(alpha, beta),
                elbo: elbo_offset(d) - functional_value,
                functional_value,
                residual,
                iterations: it,
                config_hash: crate::config_hash(cfg, &p.label()),
                trace,
            });
        }
        if it == cfg.max_iters {
            break;
        }
        let hz = hz.expect("hessian requested");
        let dir = solver.newton_direction(&z, &gz, &hz);
        match solver.line_search(&z, f, &gz, &dir)? {
            Some((zn, fnew)) => {
                z = zn;
                f = fnew;
                trace.push(f);
            }
            None => {
                let diag: Vec<f64> = (0..z.len()).map(|r| -gz[r] / hz[(r, r)].max(1e-300)).collect();
                match solver.line_search(&z, f, &gz, &diag)? {
                    Some((zn, fnew)) => {
                        z = zn;
                        f = fnew;
                        trace.push(f);
                    }
                    None => break,
                }
            }
        }
    }
    Err(Error::Convergence { method: "solve_lifted", iterations, residual })
}

/// Descent state in per-coordinate variables z = (a, δ_0, …, δ_{m−2}): a is the median node
/// value and δ_l = t_{l+1} − t_l. The Caffarelli band is the box δ_l ∈ [h_l/√β, h_l/√α].
struct Lifted<'a> {
    p: &'a dyn Potential,
    grid: Arc<QuantileGrid>,
    plan: Plan,
    d: usize,
    m: usize,
    c: usize,
    h: Vec<f64>,
    w: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    full_hessian: bool,
}

impl<'a> Lifted<'a> {
    fn new(p: &'a dyn Potential, grid: Arc<QuantileGrid>, q: &MCQuadrature, alpha: f64, beta: f64) -> Self {
        let d = p.dim();
        let m = grid.len();
        let h = grid.spacings();
        let lo = h.iter().map(|h| h / beta.sqrt()).collect();
        let hi = h.iter().map(|h| h / alpha.sqrt()).collect();
        Self {
            p,
            plan: Plan::new(&grid, q),
            c: grid.median_index(),
            w: grid.slope_mass(),
            grid,
            d,
            m,
            h,
            lo,
            hi,
            full_hessian: d * m <= 2048,
        }
    }

    fn to_z(&self, t: &TransportMap) -> Vec<f64> {
        let mut z = vec![0.0; self.d * self.m];
        for i in 0..self.d {
            let row = t.coord(i);
            let b = &mut z[i * self.m..(i + 1) * self.m];
            b[0] = row[self.c];
            for l in 0..self.m - 1 {
                b[1 + l] = row[l + 1] - row[l];
            }
        }
        z
    }

    fn to_map(&self, z: &[f64]) -> Result<TransportMap> {
        let mut v = vec![0.0; self.d * self.m];
        for i in 0..self.d {
            let b = &z[i * self.m..(i + 1) * self.m];
            let t = &mut v[i * self.m..(i + 1) * self.m];
            t[self.c] = b[0];
            for j in self.c + 1..self.m {
                t[j] = t[j - 1] + b[j];
            }
            for j in (0..self.c).rev() {
                t[j] = t[j + 1] - b[1 + j];
            }
        }
        TransportMap::new_unchecked(self.grid.clone(), self.d, v)
    }

    /// y = Aᵀg for one coordinate block, where t = A z.
    fn apply_at(&self, g: &[f64], y: &mut [f64]) {
        let m = self.m;
        y[0] = g.iter().sum();
        let mut acc = 0.0;
        for l in (self.c..m - 1).rev() {
            acc += g[l + 1];
            y[1 + l] = acc;
        }
        acc = 0.0;
        for l in 0..self.c {
            acc += g[l];
            y[1 + l] = -acc;
        }
    }

    /// Solves Aᵀg = y for one coordinate block.
    fn solve_at(&self, y: &[f64], g: &mut [f64]) {
        let (m, c) = (self.m, self.c);
        for j in c + 1..m {
            let next = if j <= m - 2 { y[1 + j] } else { 0.0 };
            g[j] = y[j] - next;
        }
        let mut prev = 0.0;
        for j in 0..c {
            let pj = -y[1 + j];
            g[j] = pj - prev;
            prev = pj;
        }
        let right = if c <= m - 2 { y[1 + c] } else { 0.0 };
        g[c] = y[0] - prev - right;
    }

    fn entropy(&self, z: &[f64]) -> f64 {
        let mut e = 0.0;
        for i in 0..self.d {
            for l in 0..self.m - 1 {
                e -= self.w[l] * (z[i * self.m + 1 + l] / self.h[l]).ln();
            }
        }
        e
    }

    fn functional(&self, z: &[f64]) -> Result<f64> {
        let t = self.to_map(z)?;
        Ok(self.entropy(z) + potential_mean(&t, self.p, &self.plan)?)
    }

    /// z-gradient and (optionally) z-Hessian of the discretized functional.
    fn derivatives(&self, t: &TransportMap, z: &[f64], hess: bool) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
        let (d, m, n) = (self.d, self.m, self.plan.n);
        let dm = d * m;
        let mut gt = vec![0.0; dm];
        let mut ht = if hess { Some(DMatrix::<f64>::zeros(dm, dm)) } else { None };
        let mut x = vec![0.0; d];
        let mut gx = vec![0.0; d];
        let mut hx = vec![0.0; d * d];
        let inv_n = 1.0 / n as f64;
        for k in 0..n {
            self.plan.point(t, k, &mut x);
            self.p.grad_into(&x, &mut gx);
            let li = &self.plan.interval[k * d..(k + 1) * d];
            let lam = &self.plan.lambda[k * d..(k + 1) * d];
            for i in 0..d {
                let r = i * m + li[i] as usize;
                gt[r] += (1.0 - lam[i]) * gx[i] * inv_n;
                gt[r + 1] += lam[i] * gx[i] * inv_n;
            }
            if let Some(h) = ht.as_mut() {
                self.p.hessian_into(&x, &mut hx);
                for i in 0..d {
                    let r = i * m + li[i] as usize;
                    let wr = [(1.0 - lam[i]) * inv_n, lam[i] * inv_n];
                    let cols = if self.full_hessian { 0..d } else { i..i + 1 };
                    for j in cols {
                        let c = j * m + li[j] as usize;
                        let wc = [1.0 - lam[j], lam[j]];
                        let v = hx[i * d + j];
                        for (a, wa) in wr.iter().enumerate() {
                            for (b, wb) in wc.iter().enumerate() {
                                h[(r + a, c + b)] += v * wa * wb;
                            }
                        }
                    }
                }
            }
        }
        if gt.iter().any(|v| !v.is_finite()) {
            return Err(Error::Eval(format!("{} gradient is not finite", self.p.label())));
        }
        let mut gz = vec![0.0; dm];
        for i in 0..d {
            self.apply_at(&gt[i * m..(i + 1) * m], &mut gz[i * m..(i + 1) * m]);
            for l in 0..m - 1 {
                gz[i * m + 1 + l] -= self.w[l] / z[i * m + 1 + l];
            }
        }
        let hz = ht.map(|h| {
            let mut h = self.congruence(h);
            for i in 0..d {
                for l in 0..m - 1 {
                    let r = i * m + 1 + l;
                    h[(r, r)] += self.w[l] / z[r].powi(2);
                }
            }
            h
        });
        if let Some(h) = &hz {
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::Eval(format!("{} hessian is not finite", self.p.label())));
            }
        }
        Ok((gz, hz))
    }

    /// Aᵀ H A for block-diagonal A.
    fn congruence(&self, mut h: DMatrix<f64>) -> DMatrix<f64> {
        let (d, m) = (self.d, self.m);
        let mut buf = vec![0.0; m];
        for _ in 0..2 {
            for col in 0..d * m {
                let mut column = h.column_mut(col);
                let s = column.as_mut_slice();
                for i in 0..d {
                    self.apply_at(&s[i * m..(i + 1) * m], &mut buf);
                    s[i * m..(i + 1) * m].copy_from_slice(&buf);
                }
            }
            h.transpose_mut();
        }
        h
    }

    fn is_delta(&self, r: usize) -> bool {
        !r.is_multiple_of(self.m)
    }

    fn bounds(&self, r: usize) -> (f64, f64) {
        if self.is_delta(r) {
            let l = r % self.m - 1;
            (self.lo[l], self.hi[l])
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        }
    }

    fn project(&self, z: &mut [f64]) {
        for (r, v) in z.iter_mut().enumerate() {
            let (lo, hi) = self.bounds(r);
            *v = v.clamp(lo, hi);
        }
    }

    /// Gradient components that can still decrease F inside the box.
    fn projected_gradient(&self, z: &[f64], g: &[f64]) -> Vec<f64> {
        (0..z.len())
            .map(|r| {
                let (lo, hi) = self.bounds(r);
                let slack = 1e-12 * self.h.get(r % self.m).copied().unwrap_or(1.0);
                if (z[r] <= lo + slack && g[r] > 0.0) || (z[r] >= hi - slack && g[r] < 0.0) {
                    0.0
                } else {
                    g[r]
                }
            })
            .collect()
    }

    /// ‖first variation‖_{L²(ρ)} estimated from the projected node gradient.
    fn residual(&self, z: &[f64], g: &[f64]) -> f64 {
        let pg = self.projected_gradient(z, g);
        let mut gt = vec![0.0; self.m];
        let mut ss = 0.0;
        for i in 0..self.d {
            self.solve_at(&pg[i * self.m..(i + 1) * self.m], &mut gt);
            ss += gt.iter().map(|v| v * v).sum::<f64>();
        }
        ((self.m + 1) as f64 * ss).sqrt()
    }

    /// Projected Newton direction with an ε-active set.
    fn newton_direction(&self, z: &[f64], g: &[f64], h: &DMatrix<f64>) -> Vec<f64> {
        let n = z.len();
        let mut trial = z.to_vec();
        for r in 0..n {
            trial[r] -= g[r];
        }
        self.project(&mut trial);
        let width = trial.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let active: Vec<bool> = (0..n)
            .map(|r| {
                let (lo, hi) = self.bounds(r);
                let eps = (0.01 * (hi - lo)).min(width);
                (z[r] <= lo + eps && g[r] > 0.0) || (z[r] >= hi - eps && g[r] < 0.0)
            })
            .collect();
        let free: Vec<usize> = (0..n).filter(|&r| !active[r]).collect();
        let mut dir: Vec<f64> = (0..n).map(|r| -g[r] / h[(r, r)].max(1e-300)).collect();
        if free.is_empty() {
            return dir;
        }
        let k = free.len();
        let hff = DMatrix::from_fn(k, k, |a, b| h[(free[a], free[b])]);
        let rhs = nalgebra::DVector::from_iterator(k, free.iter().map(|&r| -g[r]));
        let scale = (0..k).map(|a| hff[(a, a)].abs()).fold(0.0, f64::max).max(1e-300);
        let mut shift = 0.0;
        for _ in 0..12 {
            let mut hs = hff.clone();
            for a in 0..k {
                hs[(a, a)] += shift;
            }
            if let Some(ch) = hs.cholesky() {
                let sol = ch.solve(&rhs);
                if sol.iter().all(|v| v.is_finite()) {
                    for (a, &r) in free.iter().enumerate() {
                        dir[r] = sol[a];
                    }
                    return dir;
                }
            }
            shift = if shift == 0.0 { 1e-12 * scale } else { shift * 10.0 };
        }
        dir
    }

    /// Armijo backtracking along the projection arc z(t) = P(z + t·dir).
    fn line_search(&self, z: &[f64], f: f64, g: &[f64], dir: &[f64]) -> Result<Option<(Vec<f64>, f64)>> {
        let mut t = 1.0;
        let fscale = f.abs().max(1.0);
        for _ in 0..60 {
            let mut zn: Vec<f64> = z.iter().zip(dir).map(|(a, b)| a + t * b).collect();
            self.project(&mut zn);
            let decrease: f64 = g.iter().zip(zn.iter().zip(z)).map(|(g, (a, b))| g * (a - b)).sum();
            if decrease < 0.0 {
                let fnew = self.functional(&zn)?;
                if fnew <= f + 1e-4 * decrease {
                    return Ok(Some((zn, fnew)));
                }
                if t == 1.0 && -decrease < 1e-10 * fscale && fnew <= f + 1e-12 * fscale {
                    // F cannot resolve the decrease; accept if the residual drops.
                    let tn = self.to_map(&zn)?;
                    let (gn, _) = self.derivatives(&tn, &zn, false)?;
                    if self.residual(&zn, &gn) < self.residual(z, g) {
                        return Ok(Some((zn, fnew)));
                    }
                }
            } else if t == 1.0 {
                return Ok(None);
            }
            t *= 0.5;
        }
        Ok(None)
    }
}
