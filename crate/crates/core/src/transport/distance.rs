use super::grid::QuantileGrid;
use super::map::TransportMap;
use super::quadrature::MCQuadrature;
use crate::error::{Error, Result};
use crate::numerics::{integrate_tol, norm_pdf};
use std::sync::Arc;

/// Brings two maps onto a common grid (the finer one when they differ).
fn align(t: &TransportMap, s: &TransportMap) -> Result<(TransportMap, TransportMap)> {
    if t.dim() != s.dim() {
        return Err(Error::shape(t.dim(), s.dim()));
    }
    if t.grid() == s.grid() {
        return Ok((t.clone(), s.clone()));
    }
    let g: Arc<QuantileGrid> =
        if s.grid().len() > t.grid().len() { s.grid().clone() } else { t.grid().clone() };
    Ok((t.resample(g.clone())?, s.resample(g)?))
}

/// Difference T_i − S_i on segment s written as a + b·u.
fn segment_difference(t: &TransportMap, s: &TransportMap, i: usize, seg: usize) -> (f64, f64) {
    let g = t.grid();
    let u = g.nodes();
    let l = g.slope_index(seg);
    let (ti, si) = (t.coord(i), s.coord(i));
    let h = u[l + 1] - u[l];
    let bt = (ti[l + 1] - ti[l]) / h;
    let bs = (si[l + 1] - si[l]) / h;
    let b = bt - bs;
    let a = (ti[l] - si[l]) - b * u[l];
    (a, b)
}

/// E[(T_i − S_i)^{2k}] for k = 0..=kmax, exact for the piecewise-affine representation.
fn even_moments(t: &TransportMap, s: &TransportMap, i: usize, kmax: usize) -> Vec<f64> {
    let mom = t.grid().segment_moments(2 * kmax);
    let mut out = vec![0.0; kmax + 1];
    for (seg, mk) in mom.iter().enumerate() {
        let (a, b) = segment_difference(t, s, i, seg);
        for (k, o) in out.iter_mut().enumerate() {
            let q = 2 * k;
            let mut c = 1.0;
            let mut acc = 0.0;
            for r in 0..=q {
                acc += c * a.powi((q - r) as i32) * b.powi(r as i32) * mk[r];
                c = c * (q - r) as f64 / (r + 1) as f64;
            }
            *o += acc;
        }
    }
    out
}

/// (∫‖T(u) − S(u)‖^p ρ(du))^{1/p}; for p = 2 this is W₂ between the pushforwards.
///
/// Even integer p is computed exactly (per-segment Gaussian partial moments, with the
/// moment sequence of the sum over coordinates built by convolution); for other p, d = 1
/// uses adaptive quadrature and d > 1 a fixed 2¹⁶-point quasi-Monte Carlo rule.
pub fn lp_distance(t: &TransportMap, s: &TransportMap, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Param(format!("p must be >= 1, got {p}")));
    }
    let (t, s) = align(t, s)?;
    let d = t.dim();
    if p.fract() == 0.0 && (p as u64).is_multiple_of(2) && p <= 32.0 {
        let n = (p as usize) / 2;
        let mut sum = vec![0.0; n + 1];
        sum[0] = 1.0;
        for i in 0..d {
            let mi = even_moments(&t, &s, i, n);
            let mut next = vec![0.0; n + 1];
            for k in 0..=n {
                let mut c = 1.0;
                for r in 0..=k {
                    next[k] += c * sum[r] * mi[k - r];
                    c = c * (k - r) as f64 / (r + 1) as f64;
                }
            }
            sum = next;
        }
        return Ok(sum[n].max(0.0).powf(1.0 / p));
    }
    if d == 1 {
        let g = t.grid().clone();
        let mut total = 0.0;
        for seg in 0..=g.len() {
            let (a, b) = segment_difference(&t, &s, 0, seg);
            let (lo, hi) = g.segment(seg);
            total += integrate_tol(|u| (a + b * u).abs().powf(p) * norm_pdf(u), lo, hi, 1e-15, 1e-12)?;
        }
        return Ok(total.powf(1.0 / p));
    }
    let q = MCQuadrature::new(0, 1 << 16, d)?;
    let v = q.mean_of(|u| {
        (0..d)
            .map(|i| (t.eval_coord(i, u[i]) - s.eval_coord(i, u[i])).powi(2))
            .sum::<f64>()
            .powf(p / 2.0)
    });
    Ok(v.powf(1.0 / p))
}

/// (‖T − S‖²_{L²(ρ)} + ‖T′ − S′‖²_{L²(ρ)})^{1/2}, exact for the piecewise-affine maps.
pub fn h1_distance(t: &TransportMap, s: &TransportMap) -> Result<f64> {
    let (t, s) = align(t, s)?;
    let l2 = lp_distance(&t, &s, 2.0)?;
    let g = t.grid().clone();
    let mass = g.segment_mass();
    let mut deriv = 0.0;
    for i in 0..t.dim() {
        for (seg, w) in mass.iter().enumerate() {
            let l = g.slope_index(seg);
            deriv += w * (t.slope(i, l) - s.slope(i, l)).powi(2);
        }
    }
    Ok((l2 * l2 + deriv).sqrt())
}
