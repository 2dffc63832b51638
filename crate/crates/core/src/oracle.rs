//! Independent ground truth: the closed-form mean-field optimizer of a Gaussian
//! target, the W₂ distance between product Gaussians and a brute-force coordinate
//! ascent on a dense 2-d product grid. None of this code shares a path with the
//! lifted solver or the CAVI solver it is used to validate.

use crate::applications::GaussianProduct;
use crate::error::{Error, Result};
use crate::numerics::{gauss_hermite, norm_ppf};
use crate::potentials::{find_mode, Logistic, Potential};
use crate::transport::TransportMap;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Gaussian target N(mean, precision⁻¹).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTarget {
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
}

impl GaussianTarget {
    pub fn new(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if precision.nrows() != d || precision.ncols() != d {
            return Err(Error::shape(format!("{d}x{d}"), format!("{}x{}", precision.nrows(), precision.ncols())));
        }
        if (&precision - precision.transpose()).amax() > 1e-12 * precision.amax().max(1.0) {
            return Err(Error::Param("precision must be symmetric".into()));
        }
        if precision.clone().cholesky().is_none() {
            return Err(Error::Param("precision must be positive definite".into()));
        }
        Ok(Self { mean, precision })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// ½(x − m)ᵀP(x − m).
    pub fn potential(&self, x: &[f64]) -> f64 {
        let r = DVector::from_column_slice(x) - &self.mean;
        0.5 * r.dot(&(&self.precision * &r))
    }
}

/// Deterministic suite of Gaussian targets: dimensions cycle through `dims`, the
/// precision is QᵀΛQ with Q Haar-orthogonal and eigenvalues log-uniform in
/// [1, max_condition], and means are standard normal.
pub fn random_gaussian_suite(
    seed: u64,
    count: usize,
    dims: std::ops::RangeInclusive<usize>,
    max_condition: f64,
) -> Result<Vec<GaussianTarget>> {
    if dims.is_empty() || *dims.start() == 0 {
        return Err(Error::Param("dimension range must be nonempty and positive".into()));
    }
    if !(max_condition >= 1.0 && max_condition.is_finite()) {
        return Err(Error::Param(format!("max_condition must be >= 1, got {max_condition}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = dims.end() - dims.start() + 1;
    (0..count)
        .map(|k| {
            let d = dims.start() + k % span;
            let z = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let q = z.qr().q();
            let ev = DVector::from_fn(d, |i, _| {
                if i == 0 {
                    1.0
                } else if i == 1 {
                    max_condition
                } else {
                    max_condition.powf(rng.random::<f64>())
                }
            });
            let prec = &q * DMatrix::from_diagonal(&ev) * q.transpose();
            let prec = 0.5 * (&prec + prec.transpose());
            let mean = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            GaussianTarget::new(mean, prec)
        })
        .collect()
}

/// Mean-field optimizer of a Gaussian target: ⊗ᵢ N(mᵢ, 1/Pᵢᵢ).
pub fn gaussian_mfvi(t: &GaussianTarget) -> GaussianProduct {
    GaussianProduct {
        mean: t.mean.iter().copied().collect(),
        std: (0..t.dim()).map(|i| 1.0 / t.precision[(i, i)].sqrt()).collect(),
    }
}

/// √(Σᵢ (mᵢ − m̃ᵢ)² + (σᵢ − σ̃ᵢ)²).
pub fn gaussian_product_w2(a: &GaussianProduct, b: &GaussianProduct) -> Result<f64> {
    if a.mean.len() != b.mean.len() {
        return Err(Error::shape(a.mean.len(), b.mean.len()));
    }
    let mut s = 0.0;
    for i in 0..a.mean.len() {
        let dm = a.mean[i] - b.mean[i];
        let ds = a.std[i] - b.std[i];
        s += dm * dm + ds * ds;
    }
    Ok(s.sqrt())
}

/// Largest violation of the mean-field fixed-point equation
/// log νᵢ(x) = −E_{ν₋ᵢ}[V(x, X₋ᵢ)] + const for a product Gaussian, checked on a grid of
/// `points` nodes over ±6 standard deviations per coordinate. The inner expectation
/// uses a tensor Gauss–Hermite rule, exact for quadratic V.
pub fn gaussian_fixed_point_residual(t: &GaussianTarget, nu: &GaussianProduct, points: usize) -> Result<f64> {
    let d = t.dim();
    if nu.mean.len() != d {
        return Err(Error::shape(d, nu.mean.len()));
    }
    if d > 6 {
        return Err(Error::Param("fixed-point residual check supports d <= 6".into()));
    }
    let (gx, gw) = gauss_hermite(3);
    let others = d - 1;
    let combos = 3usize.pow(others as u32);
    let mut worst = 0.0f64;
    let mut x = vec![0.0; d];
    for i in 0..d {
        let (m, s) = (nu.mean[i], nu.std[i]);
        let mut resid = Vec::with_capacity(points);
        for k in 0..points {
            let xi = m + s * (-6.0 + 12.0 * k as f64 / (points - 1) as f64);
            let mut ev = 0.0;
            for c in 0..combos {
                let (mut idx, mut w) = (c, 1.0);
                let mut slot = 0;
                for j in 0..d {
                    if j == i {
                        x[j] = xi;
                        continue;
                    }
                    let q = idx % 3;
                    idx /= 3;
                    x[j] = nu.mean[j] + nu.std[j] * gx[q];
                    w *= gw[q];
                    slot += 1;
                }
                debug_assert_eq!(slot, others);
                ev += w * t.potential(&x);
            }
            let log_nu = -0.5 * ((xi - m) / s).powi(2);
            resid.push(log_nu + ev);
        }
        let mean = resid.iter().sum::<f64>() / points as f64;
        worst = worst.max(resid.iter().map(|r| (r - mean).abs()).fold(0.0, f64::max));
    }
    Ok(worst)
}

/// Product grid for the brute-force oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub points: usize,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl GridSpec {
    /// 1025 points per axis on [lo, hi], stopping at an L¹ change of 1e−10.
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Self { lo, hi, points: 1025, tol: 1e-10, max_sweeps: 100_000 }
    }

    /// Boxes of half-width `width`/√α centred at the mode of `p`.
    pub fn around_mode(p: &dyn Potential, width: f64) -> Result<Self> {
        if p.dim() != 2 {
            return Err(Error::shape(2, p.dim()));
        }
        let mode = find_mode(p, &[0.0, 0.0])?;
        let h = width / p.alpha().sqrt();
        let x = &mode.x_star;
        Ok(Self::new([x[0] - h, x[1] - h], [x[0] + h, x[1] + h]))
    }

    fn validate(&self) -> Result<()> {
        if self.points < 3 {
            return Err(Error::Param("grid needs at least 3 points".into()));
        }
        for j in 0..2 {
            if !(self.hi[j] > self.lo[j]) || !self.lo[j].is_finite() || !self.hi[j].is_finite() {
                return Err(Error::Param(format!("grid axis {j} has an empty range")));
            }
        }
        if !(self.tol > 0.0) {
            return Err(Error::Param("grid tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Discrete marginal on an equispaced grid; `mass` sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMarginal {
    pub lo: f64,
    pub step: f64,
    pub mass: Vec<f64>,
}

impl GridMarginal {
    pub fn x(&self, k: usize) -> f64 {
        self.lo + self.step * k as f64
    }

    pub fn mean(&self) -> f64 {
        self.mass.iter().enumerate().map(|(k, m)| m * self.x(k)).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.mass.iter().enumerate().map(|(k, m)| m * (self.x(k) - mu).powi(2)).sum()
    }

    /// CDF at the nodes with half of each node's own mass, so that linear
    /// interpolation between nodes is second-order accurate.
    fn node_cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.mass
            .iter()
            .map(|m| {
                let c = acc + 0.5 * m;
                acc += m;
                c
            })
            .collect()
    }

    fn quantile_with(&self, cdf: &[f64], p: f64) -> f64 {
        let n = cdf.len();
        if p <= cdf[0] {
            return self.x(0);
        }
        if p >= cdf[n - 1] {
            return self.x(n - 1);
        }
        let k = cdf.partition_point(|c| *c <= p);
        let (c0, c1) = (cdf[k - 1], cdf[k]);
        let f = if c1 > c0 { (p - c0) / (c1 - c0) } else { 0.0 };
        self.x(k - 1) + f * self.step
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.quantile_with(&self.node_cdf(), p)
    }

    /// One-dimensional W₂ between this marginal and coordinate `i` of T♯N(0, I),
    /// ∫₀¹ (F⁻¹(p) − Tᵢ(Φ⁻¹(p)))² dp by the midpoint rule on 10⁵ cells.
    pub fn w2_to_map(&self, t: &TransportMap, i: usize) -> Result<f64> {
        if i >= t.dim() {
            return Err(Error::shape(t.dim(), i + 1));
        }
        let cdf = self.node_cdf();
        let n = 100_000;
        let mut s = 0.0;
        for k in 0..n {
            let p = (k as f64 + 0.5) / n as f64;
            let diff = self.quantile_with(&cdf, p) - t.eval_coord(i, norm_ppf(p));
            s += diff * diff;
        }
        Ok((s / n as f64).sqrt())
    }

    /// One-dimensional W₂ between two grid marginals.
    pub fn w2(&self, other: &Self) -> f64 {
        let (ca, cb) = (self.node_cdf(), other.node_cdf());
        let n = 100_000;
        let mut s = 0.0;
        for k in 0..n {
            let p = (k as f64 + 0.5) / n as f64;
            let diff = self.quantile_with(&ca, p) - other.quantile_with(&cb, p);
            s += diff * diff;
        }
        (s / n as f64).sqrt()
    }
}

/// Output of the brute-force coordinate ascent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForce {
    pub marginals: Vec<GridMarginal>,
    pub sweeps: usize,
    pub l1_change: f64,
}

fn gibbs_update(neg_log: &[f64]) -> Vec<f64> {
    let min = neg_log.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = neg_log.iter().map(|v| (min - v).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

/// Alternating exact updates νⱼ ∝ exp(−E_{ν₋ⱼ}V) on a dense product grid, repeated
/// until the L¹ change of both marginals in one sweep is at most `spec.tol`.
pub fn brute_force_mfvi_2d(p: &dyn Potential, spec: &GridSpec) -> Result<BruteForce> {
    if p.dim() != 2 {
        return Err(Error::shape(2, p.dim()));
    }
    spec.validate()?;
    let n = spec.points;
    let step = [0, 1].map(|j| (spec.hi[j] - spec.lo[j]) / (n - 1) as f64);
    let axis = |j: usize, k: usize| spec.lo[j] + step[j] * k as f64;
    let mut v = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let val = p.value(&[axis(0, a), axis(1, b)]);
            if !val.is_finite() {
                return Err(Error::Eval(format!("{} at grid node ({a}, {b})", p.label())));
            }
            v[a * n + b] = val;
        }
    }
    let mut nu = [vec![1.0 / n as f64; n], vec![1.0 / n as f64; n]];
    let mut change = f64::INFINITY;
    for sweep in 1..=spec.max_sweeps {
        let e0: Vec<f64> = (0..n)
            .map(|a| v[a * n..(a + 1) * n].iter().zip(&nu[1]).map(|(x, w)| x * w).sum())
            .collect();
        let new0 = gibbs_update(&e0);
        let e1: Vec<f64> = (0..n).map(|b| (0..n).map(|a| v[a * n + b] * new0[a]).sum()).collect();
        let new1 = gibbs_update(&e1);
        change = new0.iter().zip(&nu[0]).map(|(x, y)| (x - y).abs()).sum::<f64>()
            + new1.iter().zip(&nu[1]).map(|(x, y)| (x - y).abs()).sum::<f64>();
        nu = [new0, new1];
        if change <= spec.tol {
            let marginals = (0..2)
                .map(|j| GridMarginal { lo: spec.lo[j], step: step[j], mass: nu[j].clone() })
                .collect();
            return Ok(BruteForce { marginals, sweeps: sweep, l1_change: change });
        }
    }
    Err(Error::Convergence { method: "brute_force_mfvi_2d", iterations: spec.max_sweeps, residual: change })
}

/// Inputs of the committed 2-d logistic fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticInputs {
    /// Row-major n×2 feature matrix.
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
    pub ridge: f64,
    pub scale: f64,
    pub grid: GridSpec,
}

impl LogisticInputs {
    /// Deterministic 24-point synthetic data set with labels from a fixed direction
    /// and a few flipped points.
    pub fn standard() -> Result<Self> {
        let n = 24;
        let mut features = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(n);
        for k in 0..n {
            let t = k as f64 * 2.399_963_229_728_653;
            let r = 0.4 + 1.6 * ((k as f64 + 0.5) / n as f64).sqrt();
            let (x0, x1) = (r * t.cos(), r * t.sin());
            features.extend([x0, x1]);
            let score = 1.2 * x0 - 0.7 * x1 + 0.3;
            let flip = k % 7 == 3;
            labels.push(if (score > 0.0) != flip { 1.0 } else { -1.0 });
        }
        let mut out = Self { features, labels, ridge: 1.0, scale: 1.0, grid: GridSpec::new([0.0; 2], [1.0; 2]) };
        let mut grid = GridSpec::around_mode(&out.potential()?, 9.0)?;
        // Rounded so the fixture does not depend on the last bits of the mode.
        for v in grid.lo.iter_mut().chain(grid.hi.iter_mut()) {
            *v = (*v * 1e3).round() / 1e3;
        }
        out.grid = grid;
        Ok(out)
    }

    pub fn potential(&self) -> Result<Logistic> {
        let n = self.labels.len();
        if self.features.len() != 2 * n {
            return Err(Error::shape(2 * n, self.features.len()));
        }
        Logistic::new(DMatrix::from_row_slice(n, 2, &self.features), self.labels.clone(), self.ridge, self.scale)
    }

    pub fn hash(&self) -> String {
        crate::config_hash(self, "logistic-2d-fixture")
    }
}

/// Committed reference marginals of the 2-d logistic posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFixture {
    pub inputs: LogisticInputs,
    pub input_hash: String,
    pub result: BruteForce,
}

impl LogisticFixture {
    pub fn generate(inputs: LogisticInputs) -> Result<Self> {
        let result = brute_force_mfvi_2d(&inputs.potential()?, &inputs.grid)?;
        Ok(Self { input_hash: inputs.hash(), inputs, result })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let fx: Self = serde_json::from_str(&text).map_err(|e| Error::Io(e.to_string()))?;
        fx.verify()?;
        Ok(fx)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    /// Checks the stored input hash and that both marginals are probability vectors.
    pub fn verify(&self) -> Result<()> {
        let h = self.inputs.hash();
        if h != self.input_hash {
            return Err(Error::Input(format!("fixture input hash mismatch: stored {}, computed {h}", self.input_hash)));
        }
        if self.result.marginals.len() != 2 {
            return Err(Error::Input("fixture must hold two marginals".into()));
        }
        for (j, m) in self.result.marginals.iter().enumerate() {
            let total: f64 = m.mass.iter().sum();
            if m.mass.len() != self.inputs.grid.points
                || m.mass.iter().any(|v| !(*v >= 0.0))
                || (total - 1.0).abs() > 1e-9
            {
                return Err(Error::Input(format!("fixture marginal {j} is not a probability vector")));
            }
        }
        Ok(())
    }
}
