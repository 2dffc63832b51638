use crate::error::{Error, Result};
use crate::numerics::{gaussian_partial_moments, norm_cdf, norm_ppf};

/// Increasing nodes u_0 < … < u_{m−1} on the real line, with the standard-normal mass of
/// each of the m+1 segments (−∞,u_0], [u_0,u_1], …, [u_{m−1},∞).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileGrid {
    nodes: Vec<f64>,
    mass: Vec<f64>,
}

impl QuantileGrid {
    /// Gaussian quantile grid u_j = Φ⁻¹(j/(m+1)), j = 1..m; every segment has mass 1/(m+1).
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Param(format!("grid needs at least 2 nodes, got {m}")));
        }
        let h = 1.0 / (m + 1) as f64;
        let mut nodes: Vec<f64> = (1..=m).map(|j| norm_ppf(j as f64 * h)).collect();
        for j in 0..m / 2 {
            let v = 0.5 * (nodes[m - 1 - j] - nodes[j]);
            nodes[j] = -v;
            nodes[m - 1 - j] = v;
        }
        if m % 2 == 1 {
            nodes[m / 2] = 0.0;
        }
        Ok(Self { nodes, mass: vec![h; m + 1] })
    }

    /// Grid on arbitrary strictly increasing nodes.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        let m = nodes.len();
        if m < 2 {
            return Err(Error::Param(format!("grid needs at least 2 nodes, got {m}")));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) || nodes.iter().any(|u| !u.is_finite()) {
            return Err(Error::Param("grid nodes must be finite and strictly increasing".into()));
        }
        if let Ok(q) = Self::new(m) {
            if q.nodes.iter().zip(&nodes).all(|(a, b)| (a - b).abs() <= 1e-12) {
                return Ok(q);
            }
        }
        let mut mass = Vec::with_capacity(m + 1);
        mass.push(norm_cdf(nodes[0]));
        for w in nodes.windows(2) {
            mass.push(gaussian_partial_moments(w[0], w[1], 0)[0]);
        }
        mass.push(norm_cdf(-nodes[m - 1]));
        Ok(Self { nodes, mass })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Standard-normal mass of the m+1 segments.
    pub fn segment_mass(&self) -> &[f64] {
        &self.mass
    }

    /// Segment endpoints (a, b) for s = 0..=m.
    pub fn segment(&self, s: usize) -> (f64, f64) {
        let m = self.len();
        let a = if s == 0 { f64::NEG_INFINITY } else { self.nodes[s - 1] };
        let b = if s == m { f64::INFINITY } else { self.nodes[s] };
        (a, b)
    }

    /// Index of the slope interval [u_l, u_{l+1}] that governs segment s.
    pub fn slope_index(&self, s: usize) -> usize {
        s.saturating_sub(1).min(self.len() - 2)
    }

    /// Mass carried by each of the m−1 slopes: the two tail segments are merged into the
    /// first and last interior interval.
    pub fn slope_mass(&self) -> Vec<f64> {
        let m = self.len();
        let mut w: Vec<f64> = self.mass[1..m].to_vec();
        w[0] += self.mass[0];
        w[m - 2] += self.mass[m];
        w
    }

    /// Node spacings h_l = u_{l+1} − u_l.
    pub fn spacings(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Slope interval l and interpolation weight λ with T(u) = (1−λ)t_l + λt_{l+1};
    /// λ falls outside [0, 1] on the affine tails.
    #[inline]
    pub fn locate(&self, u: f64) -> (usize, f64) {
        let m = self.nodes.len();
        let l = self.nodes.partition_point(|&x| x <= u).saturating_sub(1).min(m - 2);
        let (a, b) = (self.nodes[l], self.nodes[l + 1]);
        (l, (u - a) / (b - a))
    }

    /// Index of the median node t_{⌈m/2⌉} (0-based).
    pub fn median_index(&self) -> usize {
        self.len().div_ceil(2) - 1
    }

    /// Partial moments ∫ u^k φ(u) du over every segment, k = 0..=kmax.
    pub fn segment_moments(&self, kmax: usize) -> Vec<Vec<f64>> {
        (0..=self.len())
            .map(|s| {
                let (a, b) = self.segment(s);
                gaussian_partial_moments(a, b, kmax)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_grid_is_symmetric_with_unit_mass() {
        for m in [2, 3, 16, 64, 65, 256] {
            let g = QuantileGrid::new(m).unwrap();
            let u = g.nodes();
            assert!(u.windows(2).all(|w| w[1] > w[0]));
            for j in 0..m {
                assert_eq!(u[j], -u[m - 1 - j]);
            }
            let total: f64 = g.segment_mass().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn general_grid_masses_sum_to_one() {
        let g = QuantileGrid::from_nodes(vec![-1.0, 0.0, 1.0]).unwrap();
        let total: f64 = g.segment_mass().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!((g.segment_mass()[0] - norm_cdf(-1.0)).abs() < 1e-15);
    }

    #[test]
    fn locate_extrapolates_on_tails() {
        let g = QuantileGrid::from_nodes(vec![-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(g.locate(0.5), (1, 0.5));
        assert_eq!(g.locate(-3.0), (0, -2.0));
        assert_eq!(g.locate(3.0), (1, 3.0));
        assert_eq!(g.locate(0.0), (1, 0.0));
    }
}
