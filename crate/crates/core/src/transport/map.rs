use super::grid::QuantileGrid;
use crate::error::{Error, Result};
use std::sync::Arc;

/// Coordinatewise increasing piecewise-linear map on a shared grid, with affine tails
/// that continue the first and last interior slope.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMap {
    grid: Arc<QuantileGrid>,
    d: usize,
    /// Row-major d×m node values t_{i,j}.
    values: Vec<f64>,
    band: Option<(f64, f64)>,
}

impl TransportMap {
    /// Builds a map from row-major node values, checking strict monotonicity.
    pub fn new(grid: Arc<QuantileGrid>, d: usize, values: Vec<f64>) -> Result<Self> {
        let t = Self::new_unchecked(grid, d, values)?;
        t.check_monotone()?;
        Ok(t)
    }

    /// Builds a map without the monotonicity check (shapes and finiteness still checked).
    pub fn new_unchecked(grid: Arc<QuantileGrid>, d: usize, values: Vec<f64>) -> Result<Self> {
        if d == 0 || values.len() != d * grid.len() {
            return Err(Error::shape(format!("{d}x{}", grid.len()), values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Eval("map node values must be finite".into()));
        }
        Ok(Self { grid, d, values, band: None })
    }

    pub fn from_fn(grid: Arc<QuantileGrid>, d: usize, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let values = (0..d)
            .flat_map(|i| grid.nodes().iter().map(move |&u| (i, u)))
            .map(|(i, u)| f(i, u))
            .collect();
        Self::new(grid, d, values)
    }

    pub fn identity(grid: Arc<QuantileGrid>, d: usize) -> Self {
        Self::from_fn(grid, d, |_, u| u).expect("identity map is valid")
    }

    /// Map of the product Gaussian ⊗ N(meanᵢ, stdᵢ²).
    pub fn affine(grid: Arc<QuantileGrid>, mean: &[f64], std: &[f64]) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::shape(mean.len(), std.len()));
        }
        if std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Param("standard deviations must be positive".into()));
        }
        Self::from_fn(grid, mean.len(), |i, u| mean[i] + std[i] * u)
    }

    pub fn check_monotone(&self) -> Result<()> {
        let m = self.grid.len();
        for i in 0..self.d {
            let row = self.coord(i);
            if let Some(j) = (0..m - 1).find(|&j| !(row[j + 1] > row[j])) {
                return Err(Error::Monotonicity { coordinate: i, node: j });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn grid(&self) -> &Arc<QuantileGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Node values of coordinate i.
    pub fn coord(&self, i: usize) -> &[f64] {
        let m = self.grid.len();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn band(&self) -> Option<(f64, f64)> {
        self.band
    }

    pub fn with_band(mut self, alpha: f64, beta: f64) -> Self {
        self.band = Some((alpha, beta));
        self
    }

    /// Slope of coordinate i on interval [u_l, u_{l+1}].
    #[inline]
    pub fn slope(&self, i: usize, l: usize) -> f64 {
        let u = self.grid.nodes();
        let t = self.coord(i);
        (t[l + 1] - t[l]) / (u[l + 1] - u[l])
    }

    /// All interior slopes of coordinate i.
    pub fn slopes(&self, i: usize) -> Vec<f64> {
        (0..self.grid.len() - 1).map(|l| self.slope(i, l)).collect()
    }

    #[inline]
    pub fn eval_coord(&self, i: usize, u: f64) -> f64 {
        let (l, lam) = self.grid.locate(u);
        let t = self.coord(i);
        t[l] + lam * (t[l + 1] - t[l])
    }

    pub fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        for i in 0..self.d {
            out[i] = self.eval_coord(i, u[i]);
        }
    }

    pub fn eval_map(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.d {
            return Err(Error::shape(self.d, u.len()));
        }
        Ok((0..self.d).map(|i| self.eval_coord(i, u[i])).collect())
    }

    pub fn eval_slope(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.d {
            return Err(Error::shape(self.d, u.len()));
        }
        Ok((0..self.d).map(|i| self.slope(i, self.grid.locate(u[i]).0)).collect())
    }

    /// Clamps every increment into [h_l/√β, h_l/√α] and re-anchors each coordinate at its
    /// median node. Accepts arbitrary (even non-monotone) node values.
    pub fn project_band(&self, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta >= alpha) {
            return Err(Error::Param(format!("need 0 < alpha <= beta, got {alpha}, {beta}")));
        }
        let (lo, hi) = (1.0 / beta.sqrt(), 1.0 / alpha.sqrt());
        let h = self.grid.spacings();
        let m = self.grid.len();
        let c = self.grid.median_index();
        let mut values = self.values.clone();
        for i in 0..self.d {
            let src = self.coord(i);
            let row = &mut values[i * m..(i + 1) * m];
            row[c] = src[c];
            for l in c..m - 1 {
                row[l + 1] = row[l] + (src[l + 1] - src[l]).clamp(h[l] * lo, h[l] * hi);
            }
            for l in (0..c).rev() {
                row[l] = row[l + 1] - (src[l + 1] - src[l]).clamp(h[l] * lo, h[l] * hi);
            }
        }
        Ok(Self { grid: self.grid.clone(), d: self.d, values, band: Some((alpha, beta)) })
    }

    /// Largest relative violation of the Caffarelli band [1/√β, 1/√α].
    pub fn band_violation(&self, alpha: f64, beta: f64) -> f64 {
        let (lo, hi) = (1.0 / beta.sqrt(), 1.0 / alpha.sqrt());
        (0..self.d)
            .flat_map(|i| self.slopes(i))
            .map(|s| ((lo - s) / lo).max((s - hi) / hi).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Re-evaluates the map at the nodes of another grid.
    pub fn resample(&self, grid: Arc<QuantileGrid>) -> Result<Self> {
        let values = (0..self.d)
            .flat_map(|i| grid.nodes().iter().map(move |&u| (i, u)))
            .map(|(i, u)| self.eval_coord(i, u))
            .collect();
        let mut t = Self::new(grid, self.d, values)?;
        t.band = self.band;
        Ok(t)
    }

    /// Node-wise combination a·self + b·other on a shared grid.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.grid != other.grid || self.d != other.d {
            return Err(Error::shape("maps on a shared grid", "different grids or dims"));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Self::new(self.grid.clone(), self.d, values)
    }

    /// Mean and variance of each marginal of T♯ρ, computed exactly per segment.
    pub fn marginal_moments(&self) -> Vec<(f64, f64)> {
        let mom = self.grid.segment_moments(2);
        let u = self.grid.nodes();
        (0..self.d)
            .map(|i| {
                let t = self.coord(i);
                let (mut m1, mut m2) = (0.0, 0.0);
                for (s, mk) in mom.iter().enumerate() {
                    let l = self.grid.slope_index(s);
                    let b = (t[l + 1] - t[l]) / (u[l + 1] - u[l]);
                    let a = t[l] - b * u[l];
                    m1 += a * mk[0] + b * mk[1];
                    m2 += a * a * mk[0] + 2.0 * a * b * mk[1] + b * b * mk[2];
                }
                (m1, m2 - m1 * m1)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> Arc<QuantileGrid> {
        Arc::new(QuantileGrid::from_nodes(vec![-1.0, 0.0, 1.0]).unwrap())
    }

    #[test]
    fn evaluation_examples() {
        let g = Arc::new(QuantileGrid::new(16).unwrap());
        let id = TransportMap::identity(g.clone(), 2);
        assert_eq!(id.eval_map(&[0.3, -1.2]).unwrap(), vec![0.3, -1.2]);
        let t = TransportMap::affine(g, &[1.5], &[0.5]).unwrap();
        assert!((t.eval_map(&[0.0]).unwrap()[0] - 1.5).abs() < 1e-15);
        assert!((t.eval_slope(&[3.7]).unwrap()[0] - 0.5).abs() < 1e-12);
        let s = TransportMap::new(three(), 1, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(s.eval_map(&[0.5]).unwrap()[0], 1.0);
        assert_eq!(s.eval_slope(&[0.5]).unwrap()[0], 2.0);
        assert_eq!(s.eval_map(&[3.0]).unwrap()[0], 6.0);
    }

    #[test]
    fn rejects_non_monotone() {
        let r = TransportMap::new(three(), 1, vec![0.0, 0.0, 1.0]);
        assert_eq!(r, Err(Error::Monotonicity { coordinate: 0, node: 0 }));
    }

    #[test]
    fn projection_examples() {
        let g = Arc::new(QuantileGrid::new(9).unwrap());
        let id = TransportMap::identity(g.clone(), 1);
        assert_eq!(id.project_band(1.0, 1.0).unwrap().values(), id.values());
        let steep = TransportMap::affine(g.clone(), &[0.7], &[3.0]).unwrap();
        let p = steep.project_band(1.0, 1.0).unwrap();
        let want = TransportMap::affine(g, &[0.7], &[1.0]).unwrap();
        for (a, b) in p.values().iter().zip(want.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_moments_are_exact() {
        let g = Arc::new(QuantileGrid::new(8).unwrap());
        let t = TransportMap::affine(g, &[2.0, -1.0], &[0.5, 3.0]).unwrap();
        let mm = t.marginal_moments();
        assert!((mm[0].0 - 2.0).abs() < 1e-13 && (mm[0].1 - 0.25).abs() < 1e-13);
        assert!((mm[1].0 + 1.0).abs() < 1e-13 && (mm[1].1 - 9.0).abs() < 1e-12);
    }
}
