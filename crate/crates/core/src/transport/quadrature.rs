use crate::error::{Error, Result};
use crate::numerics::{norm_ppf, pairwise_sum, primes};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// N points in ℝ^d stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl PointSet {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * d, "point set storage does not match n*d");
        Self { n, d, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.d..(k + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d.max(1)).take(self.n)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Pairwise-summed mean of f over the rows.
    pub fn mean_of(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let v: Vec<f64> = self.rows().map(f).collect();
        pairwise_sum(&v) / self.n as f64
    }

    pub fn column_mean(&self, j: usize) -> f64 {
        self.mean_of(|r| r[j])
    }

    pub fn column_var(&self, j: usize) -> f64 {
        let m = self.column_mean(j);
        self.mean_of(|r| (r[j] - m).powi(2))
    }

    pub(crate) fn require_nonempty(&self, what: &str) -> Result<()> {
        if self.n == 0 {
            Err(Error::Input(format!("{what}: empty sample set")))
        } else {
            Ok(())
        }
    }
}

/// How the standard-normal points are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Digit-scrambled Halton sequence mapped through Φ⁻¹ (randomized QMC).
    #[default]
    Halton,
    /// Independent N(0, 1) draws from a ChaCha8 stream.
    Iid,
}

/// Frozen standard-normal quadrature points; the same seed reproduces them bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct MCQuadrature {
    seed: u64,
    scheme: Scheme,
    points: PointSet,
}

impl MCQuadrature {
    /// Default scheme (scrambled Halton).
    pub fn new(seed: u64, n: usize, d: usize) -> Result<Self> {
        Self::with_scheme(seed, n, d, Scheme::default())
    }

    pub fn with_scheme(seed: u64, n: usize, d: usize, scheme: Scheme) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Param(format!("need n > 0 and d > 0, got n={n}, d={d}")));
        }
        let data = match scheme {
            Scheme::Iid => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
            }
            Scheme::Halton => scrambled_halton(seed, n, d),
        };
        Ok(Self { seed, scheme, points: PointSet::new(n, d, data) })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    /// Pairwise-summed mean of f over the points.
    pub fn mean_of(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points.mean_of(f)
    }
}

/// Halton points with an independent random digit permutation per (dimension, digit
/// position), followed by Φ⁻¹. Index 0 is skipped.
fn scrambled_halton(seed: u64, n: usize, d: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let bases = primes(d);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    for &b in &bases {
        let digits = (53.0 / (b as f64).log2()).ceil() as usize;
        let perms: Vec<Vec<u64>> = (0..digits)
            .map(|_| {
                let mut p: Vec<u64> = (0..b).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        let inv = 1.0 / b as f64;
        let col = (1..=n as u64)
            .map(|k| {
                let (mut idx, mut f, mut r) = (k, inv, 0.0);
                for p in &perms {
                    r += f * p[(idx % b) as usize] as f64;
                    idx /= b;
                    f *= inv;
                }
                norm_ppf(r.clamp(1e-300, 1.0 - f64::EPSILON / 2.0))
            })
            .collect();
        cols.push(col);
    }
    let mut data = vec![0.0; n * d];
    for k in 0..n {
        for j in 0..d {
            data[k * d + j] = cols[j][k];
        }
    }
    data
}
