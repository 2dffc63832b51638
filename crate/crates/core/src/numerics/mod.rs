//! Numerical helpers: Gaussian special functions, partial moments,
//! quadrature rules and deterministic summation.

mod quad;
mod special;

pub use quad::{gauss_hermite, integrate, integrate_tol};
pub use special::{
    abs_normal_moment, gaussian_partial_moments, halton, ln_gamma, ln_sphere_area, norm_cdf,
    norm_pdf, norm_ppf, norm_sf, pairwise_sum, primes,
};
