use statrs::function::{erf, gamma};
use std::f64::consts::{PI, SQRT_2};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF Φ.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / SQRT_2)
}

/// Upper tail 1 − Φ(x), accurate for large positive x.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erf::erfc(x / SQRT_2)
}

/// Standard normal quantile Φ⁻¹(p) for p in (0, 1), polished by Halley steps.
pub fn norm_ppf(p: f64) -> f64 {
    let mut x = -SQRT_2 * erf::erfc_inv(2.0 * p);
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    for _ in 0..2 {
        let r = if x > 0.0 { (1.0 - p) - norm_sf(x) } else { norm_cdf(x) - p };
        let f = norm_pdf(x);
        if f == 0.0 || r == 0.0 {
            break;
        }
        let step = r / f;
        x -= step / (1.0 + 0.5 * x * step);
    }
    x
}

pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

/// log S(d) with S(d) = 2π^{d/2}/Γ(d/2) the surface area of the unit sphere in ℝ^d.
pub fn ln_sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    std::f64::consts::LN_2 + h * PI.ln() - ln_gamma(h)
}

/// E|Z|^r for Z ~ N(0, 1).
pub fn abs_normal_moment(r: f64) -> f64 {
    (0.5 * r * std::f64::consts::LN_2 + ln_gamma((r + 1.0) / 2.0) - 0.5 * PI.ln()).exp()
}

/// Partial moments M_k = ∫_a^b u^k φ(u) du for k = 0..=kmax.
///
/// Either endpoint may be infinite. Uses M_k = (k−1)M_{k−2} + a^{k−1}φ(a) − b^{k−1}φ(b).
pub fn gaussian_partial_moments(a: f64, b: f64, kmax: usize) -> Vec<f64> {
    let mut m = vec![0.0; kmax + 1];
    let (fa, fb) = (edge_pdf(a), edge_pdf(b));
    m[0] = if a > 0.0 {
        norm_sf(a) - norm_sf(b)
    } else {
        norm_cdf(b) - norm_cdf(a)
    };
    if kmax >= 1 {
        m[1] = fa - fb;
    }
    for k in 2..=kmax {
        let ea = if fa == 0.0 { 0.0 } else { a.powi(k as i32 - 1) * fa };
        let eb = if fb == 0.0 { 0.0 } else { b.powi(k as i32 - 1) * fb };
        m[k] = (k - 1) as f64 * m[k - 2] + ea - eb;
    }
    m
}

fn edge_pdf(x: f64) -> f64 {
    if x.is_finite() {
        norm_pdf(x)
    } else {
        0.0
    }
}

/// Sum with fixed-order pairwise reduction.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Radical inverse of `index` in the given prime `base`.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// First `n` primes.
pub fn primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2u64;
    while out.len() < n {
        if out.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            out.push(c);
        }
        c += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppf_inverts_cdf() {
        for &p in &[1e-10, 0.01, 0.3, 0.5, 0.77, 0.999] {
            assert!((norm_cdf(norm_ppf(p)) - p).abs() < 1e-14 * p.max(1e-2) * 100.0);
        }
        assert_eq!(norm_ppf(0.5), 0.0);
    }

    #[test]
    fn partial_moments_match_full_moments() {
        let m = gaussian_partial_moments(f64::NEG_INFINITY, f64::INFINITY, 6);
        let want = [1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0];
        for (a, b) in m.iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
        let l = gaussian_partial_moments(f64::NEG_INFINITY, 0.4, 4);
        let r = gaussian_partial_moments(0.4, f64::INFINITY, 4);
        for k in 0..=4 {
            assert!((l[k] + r[k] - m[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn sphere_area_low_dims() {
        assert!((ln_sphere_area(1).exp() - 2.0).abs() < 1e-14);
        assert!((ln_sphere_area(2).exp() - 2.0 * PI).abs() < 1e-13);
        assert!((ln_sphere_area(3).exp() - 4.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn absolute_moments() {
        assert!((abs_normal_moment(2.0) - 1.0).abs() < 1e-14);
        assert!((abs_normal_moment(1.0) - (2.0 / PI).sqrt()).abs() < 1e-14);
        assert!((abs_normal_moment(4.0) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn halton_base_two() {
        assert_eq!(halton(1, 2), 0.5);
        assert_eq!(halton(3, 2), 0.75);
        assert_eq!(primes(5), vec![2, 3, 5, 7, 11]);
    }
}
