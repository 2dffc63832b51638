use crate::error::{finite, Error, Result};
use crate::numerics::pairwise_sum;
use crate::potentials::Potential;
use crate::transport::{MCQuadrature, QuantileGrid, TransportMap};
use std::f64::consts::PI;

/// ELBO = −F_V(T) + (d/2)(log 2π + 1).
pub fn elbo_offset(d: usize) -> f64 {
    0.5 * d as f64 * ((2.0 * PI).ln() + 1.0)
}

/// Interpolation interval and weight of every quadrature coordinate on a grid.
pub(crate) struct Plan {
    pub n: usize,
    pub d: usize,
    pub interval: Vec<u32>,
    pub lambda: Vec<f64>,
}

impl Plan {
    pub fn new(grid: &QuantileGrid, q: &MCQuadrature) -> Self {
        let (n, d) = (q.len(), q.dim());
        let mut interval = Vec::with_capacity(n * d);
        let mut lambda = Vec::with_capacity(n * d);
        for u in q.points().rows() {
            for &ui in u {
                let (l, lam) = grid.locate(ui);
                interval.push(l as u32);
                lambda.push(lam);
            }
        }
        Self { n, d, interval, lambda }
    }

    #[inline]
    pub fn point(&self, t: &TransportMap, k: usize, x: &mut [f64]) {
        let m = t.grid().len();
        let v = t.values();
        for i in 0..self.d {
            let l = self.interval[k * self.d + i] as usize;
            let lam = self.lambda[k * self.d + i];
            let a = v[i * m + l];
            x[i] = a + lam * (v[i * m + l + 1] - a);
        }
    }
}

/// −Σᵢ Σ_l W_l log(slope_{i,l}) with tail mass folded into the end slopes.
pub(crate) fn entropy_term(t: &TransportMap) -> Result<f64> {
    let w = t.grid().slope_mass();
    let mut total = 0.0;
    for i in 0..t.dim() {
        for (l, wl) in w.iter().enumerate() {
            let s = t.slope(i, l);
            if !(s > 0.0) {
                return Err(Error::Domain(format!(
                    "map is not increasing in coordinate {i} on interval {l}"
                )));
            }
            total -= wl * s.ln();
        }
    }
    Ok(total)
}

pub(crate) fn potential_mean(t: &TransportMap, p: &dyn Potential, plan: &Plan) -> Result<f64> {
    let mut x = vec![0.0; plan.d];
    let mut vals = Vec::with_capacity(plan.n);
    for k in 0..plan.n {
        plan.point(t, k, &mut x);
        vals.push(p.value(&x));
    }
    let mean = pairwise_sum(&vals) / plan.n as f64;
    finite(mean, &p.label())
}

fn check(t: &TransportMap, p: &dyn Potential, q: &MCQuadrature) -> Result<()> {
    if t.dim() != p.dim() || t.dim() != q.dim() {
        return Err(Error::shape(p.dim(), format!("map {} / points {}", t.dim(), q.dim())));
    }
    Ok(())
}

pub(crate) fn functional_with_plan(t: &TransportMap, p: &dyn Potential, plan: &Plan) -> Result<f64> {
    Ok(entropy_term(t)? + potential_mean(t, p, plan)?)
}

/// F_V(T) = −Σᵢ ∫ log Tᵢ′ dρ₁ + ∫ V∘T dρ on the grid representation.
pub fn eval_functional(t: &TransportMap, p: &dyn Potential, q: &MCQuadrature) -> Result<f64> {
    check(t, p, q)?;
    functional_with_plan(t, p, &Plan::new(t.grid(), q))
}

/// −F_V(T) + (d/2)(log 2π + 1).
pub fn elbo(t: &TransportMap, p: &dyn Potential, q: &MCQuadrature) -> Result<f64> {
    Ok(elbo_offset(t.dim()) - eval_functional(t, p, q)?)
}

/// Gradient of the discretized functional with respect to the node values, row-major d×m.
pub(crate) fn node_gradient(t: &TransportMap, p: &dyn Potential, plan: &Plan) -> Result<Vec<f64>> {
    let (d, m) = (t.dim(), t.grid().len());
    let mut g = vec![0.0; d * m];
    let mut x = vec![0.0; d];
    let mut gx = vec![0.0; d];
    let inv_n = 1.0 / plan.n as f64;
    for k in 0..plan.n {
        plan.point(t, k, &mut x);
        p.grad_into(&x, &mut gx);
        for i in 0..d {
            let l = plan.interval[k * d + i] as usize;
            let lam = plan.lambda[k * d + i];
            let gi = gx[i] * inv_n;
            g[i * m + l] += (1.0 - lam) * gi;
            g[i * m + l + 1] += lam * gi;
        }
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eval(format!("{} gradient is not finite", p.label())));
    }
    let w = t.grid().slope_mass();
    for i in 0..d {
        let row = t.coord(i);
        for (l, wl) in w.iter().enumerate() {
            let delta = row[l + 1] - row[l];
            if !(delta > 0.0) {
                return Err(Error::Domain(format!(
                    "map is not increasing in coordinate {i} on interval {l}"
                )));
            }
            g[i * m + l] += wl / delta;
            g[i * m + l + 1] -= wl / delta;
        }
    }
    Ok(g)
}

/// Exact gradient of [`eval_functional`] with respect to the node values t_{i,j}
/// (row-major d×m).
pub fn eval_first_variation(t: &TransportMap, p: &dyn Potential, q: &MCQuadrature) -> Result<Vec<f64>> {
    check(t, p, q)?;
    node_gradient(t, p, &Plan::new(t.grid(), q))
}
