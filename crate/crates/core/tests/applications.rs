mod common;

use common::*;
use mfvi_core::applications::*;
use mfvi_core::numerics::integrate_tol;
use mfvi_core::oracle::{gaussian_mfvi, GaussianTarget};
use mfvi_core::potentials::*;
use mfvi_core::solver::*;
use mfvi_core::transport::*;
use mfvi_core::Error;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;
use std::sync::Arc;

fn gauss_prior(precision: f64, mean: f64) -> Arc<dyn ScalarPotential> {
    Arc::new(GaussianScalar::new(precision, mean).unwrap())
}

#[test]
fn surrogate_examples() {
    let s = bvm_surrogate(&Quadratic::isotropic(3, 1.0).unwrap(), 10).unwrap();
    assert!(s.mean.iter().all(|m| m.abs() < 1e-12));
    assert!(s.std.iter().all(|v| (v - 1.0 / 10f64.sqrt()).abs() < 1e-12));
    let s = bvm_surrogate(&Quadratic::new(p2(), DVector::zeros(2)).unwrap(), 4).unwrap();
    assert!(s.std.iter().all(|v| (v - 1.0 / 8f64.sqrt()).abs() < 1e-12));
    assert!(matches!(bvm_surrogate(&Quadratic::isotropic(2, 1.0).unwrap(), 0), Err(Error::Param(_))));
}

#[test]
fn logistic_surrogate_matches_finite_difference_hessian() {
    let x = DMatrix::from_row_slice(6, 2, &[1.0, 0.5, -0.3, 1.2, 0.8, -1.0, -1.5, 0.2, 0.1, 0.9, 1.1, -0.4]);
    let f = Logistic::new(x, vec![1.0, -1.0, 1.0, -1.0, 1.0, 1.0], 1.0, 1.0).unwrap();
    let n = 30;
    let s = bvm_surrogate(&f, n).unwrap();
    let h = 1e-5;
    for i in 0..2 {
        let (mut xp, mut xm) = (s.mean.clone(), s.mean.clone());
        xp[i] += h;
        xm[i] -= h;
        let fd = (f.grad(&xp)[i] - f.grad(&xm)[i]) / (2.0 * h);
        let want = 1.0 / (n as f64 * fd).sqrt();
        assert!((s.std[i] - want).abs() < 1e-7 * want, "{} vs {want}", s.std[i]);
    }
    assert!(f.grad(&s.mean).iter().map(|g| g.abs()).fold(0.0, f64::max) < 1e-10);
}

#[test]
fn smooth_bound_examples() {
    assert!((bvm_bound_smooth(1.0, 1.0, 4, 100).unwrap() - 0.4).abs() < 1e-15);
    let a = bvm_bound_smooth(0.7, 2.0, 3, 50).unwrap();
    let b = bvm_bound_smooth(0.7, 2.0, 3, 100).unwrap();
    assert!((a / b - 2f64.sqrt()).abs() < 1e-12);
    assert!(matches!(bvm_bound_smooth(1.0, -1.0, 4, 100), Err(Error::Param(_))));
}

#[test]
fn local_bound_double_entry() {
    let (d, n, alpha, b, ell, tau, s, c) = (2.0f64, 50.0f64, 1.0f64, 2.0f64, 0.5f64, 0.0f64, 2.0f64, 1.0f64);
    let gamma_half_d = 1.0;
    let a = n * alpha - tau;
    let first = ell * ell * (d * d + 2.0 * d) / (3.0 * alpha.powi(4) * n * n);
    let second = (n * b / 2.0).powf(d / 2.0) * c * (d + 2.0) * s.powf(d) / (gamma_half_d * alpha * alpha * a)
        * (-a * s * s / 2.0).exp();
    let want = (first + second).sqrt();
    let got = bvm_bound_local(alpha, b, ell, tau, s, c, 2, 50).unwrap();
    assert!((got - want).abs() <= 1e-12 * want, "{got} vs {want}");
}

#[test]
fn local_bound_limits() {
    let mut last = f64::INFINITY;
    for s in [1.0, 1.5, 2.0, 3.0, 5.0, 8.0] {
        let v = bvm_bound_local(1.0, 1.0, 0.0, 0.0, s, 1.0, 3, 20).unwrap();
        assert!(v < last);
        last = v;
    }
    assert!(bvm_bound_local(1.0, 1.0, 0.0, 0.0, 30.0, 1.0, 3, 20).unwrap() < 1e-100);
    assert_eq!(bvm_bound_local(1.0, 1.0, 0.0, 0.0, 2.0, 0.0, 3, 20).unwrap(), 0.0);
    assert!(matches!(bvm_bound_local(1.0, 1.0, 0.0, 20.0, 2.0, 1.0, 3, 20), Err(Error::Domain(_))));
    assert!(matches!(bvm_bound_local(1.0, 1.0, 0.0, 0.0, 0.3, 1.0, 3, 20), Err(Error::Domain(_))));
}

#[test]
fn quadratic_posterior_is_its_own_surrogate() {
    let mut r = rng(51);
    let f: PotentialRef = Arc::new(Quadratic::new(random_spd(&mut r, 3, 0.5, 2.0), random_vec(&mut r, 3, 1.0)).unwrap());
    let rep = bvm_report(f, 25, None, Some(&SolverConfig::default())).unwrap();
    assert!(rep.measured_w2.unwrap() <= 1e-3, "{:?}", rep.measured_w2);
    assert!(rep.measured_w2.unwrap() < rep.bound_smooth);
    for (k, v) in rep.d_n.iter().enumerate() {
        assert!(*v >= 25.0 * rep.alpha_n - 1e-9 && *v <= 25.0 * rep.b_n + 1e-9, "{k}");
    }
}

#[test]
fn bvm_soundness_on_perturbed_quadratics() {
    let mut r = rng(52);
    let cfg = SolverConfig::default();
    for case in 0..6 {
        let d = 1 + case % 3;
        let w = r.random_range(0.5..3.0);
        let quad = Quadratic::new(random_spd(&mut r, d, 0.5, 2.0), random_vec(&mut r, d, 1.0)).unwrap();
        let f = SoftplusPerturbed::new(quad, w).unwrap();
        let ell = f.hessian_lipschitz();
        let c = (w / 4.0).powi(2);
        let s = (c / (ell * ell)).sqrt();
        let f: PotentialRef = Arc::new(f);
        for n in [5usize, 20, 80] {
            let lc = LocalCertificate { ell, tau: 0.0, s, c };
            let rep = bvm_report(f.clone(), n, Some(lc), Some(&cfg));
            let rep = match rep {
                Err(Error::Domain(_)) => bvm_report(f.clone(), n, None, Some(&cfg)).unwrap(),
                other => other.unwrap(),
            };
            let m = rep.measured_w2.unwrap();
            assert!(m <= rep.bound_smooth * 1.05, "case {case} n={n}: {m} > {}", rep.bound_smooth);
            if let Some(bl) = rep.bound_local {
                assert!(m <= bl * 1.05, "case {case} n={n}: {m} > local {bl}");
            }
            let e = rep.mean_error_sq.unwrap();
            assert!(e <= (m * 1.05).powi(2) + 1e-10 && e <= rep.bound_smooth.powi(2), "{e} {m}");
        }
    }
}

#[test]
fn local_certificate_must_cover_the_ball() {
    let f: PotentialRef = Arc::new(SoftplusPerturbed::new(Quadratic::isotropic(2, 1.0).unwrap(), 1.0).unwrap());
    let lc = LocalCertificate { ell: 1.0, tau: 0.0, s: 3.0, c: 1.0 };
    assert!(matches!(bvm_report(f, 10, Some(lc), None), Err(Error::Domain(_))));
}

#[test]
fn linreg_potential_examples() {
    let v = linreg_potential(DMatrix::identity(3, 3), DVector::zeros(3), 1.0, gauss_prior(1.0, 0.0)).unwrap();
    assert_eq!(v.alpha(), 2.0);
    for x in [[0.3, -1.0, 2.0], [1.0, 1.0, 1.0]] {
        assert!((v.value(&x) - x.iter().map(|a| a * a).sum::<f64>()).abs() < 1e-12);
    }
    let mut r = rng(53);
    let a = random_spd(&mut r, 3, 0.5, 2.0);
    let w = random_vec(&mut r, 3, 1.0);
    let prior: Arc<dyn ScalarPotential> = Arc::new(SoftplusQuadratic::new(0.5, 1.0).unwrap());
    let v = linreg_potential(a.clone(), w.clone(), 2.0, prior.clone()).unwrap();
    let x = [0.4, -0.2, 1.1];
    let want = DVector::from_iterator(3, x.iter().map(|b| prior.d1(*b))) + 2.0 * (&a * DVector::from_column_slice(&x) - &w);
    assert!((DVector::from_vec(v.grad(&x)) - want).amax() < 1e-12);
    let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0]));
    assert!(matches!(linreg_potential(bad, DVector::zeros(2), 1.0, gauss_prior(0.5, 0.0)), Err(Error::Param(_))));
}

#[test]
fn linreg_tau_bound_on_synthetic_data() {
    let mut r = rng(54);
    let (n, d) = (50, 5);
    let x = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut r));
    let beta = random_vec(&mut r, d, 1.0);
    let y = &x * &beta + DVector::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(&mut r);
        0.5 * z
    });
    let a = x.transpose() * &x / n as f64;
    let w = x.transpose() * y / n as f64;
    let prior: Arc<dyn ScalarPotential> = Arc::new(SoftplusQuadratic::new(1.0, 0.5).unwrap());
    let cfg = SolverConfig::default();
    for (tau, tau_hat) in [(10.0, 12.0), (20.0, 15.0), (5.0, 5.5)] {
        let v = linreg_potential(a.clone(), w.clone(), tau, prior.clone()).unwrap();
        let vh = linreg_potential(a.clone(), w.clone(), tau_hat, prior.clone()).unwrap();
        let sol = solve_lifted(&v, &cfg).unwrap();
        let solh = solve_lifted(&vh, &cfg).unwrap();
        let samples = push_samples(&solh.map, &MCQuadrature::new(9, 20_000, d).unwrap()).unwrap();
        let b = linreg_tau_bound(&a, &w, tau, tau_hat, prior.clone(), &samples).unwrap();
        let measured = lp_distance(&sol.map, &solh.map, 2.0).unwrap();
        assert!(measured <= b.bound * 1.05, "{measured} > {}", b.bound);
        assert_eq!(b.alpha, v.alpha());
    }
}

#[test]
fn linreg_bvm_examples() {
    let rep = bvm_linreg(DMatrix::identity(5, 5), DVector::zeros(5), 1.0, gauss_prior(1.0, 0.0), 100, None).unwrap();
    assert!((rep.bound_smooth - 2.0 * (1.0f64 / 40.0).sqrt()).abs() < 1e-12);
    assert!((rep.bound_smooth - 0.3162).abs() < 1e-4);

    let b1 = bvm_linreg(DMatrix::identity(3, 3), DVector::zeros(3), 1.0, gauss_prior(1.0, 0.0), 50, None).unwrap();
    let b2 = bvm_linreg(DMatrix::identity(3, 3), DVector::zeros(3), 1.0, gauss_prior(1.0, 0.0), 200, None).unwrap();
    assert!((b1.bound_smooth / b2.bound_smooth - 2.0).abs() < 1e-12);

    let w = DVector::from_vec(vec![0.5, -1.0, 0.25]);
    let (n, tau) = (40usize, 2.0);
    let cfg = SolverConfig::default();
    let rep = bvm_linreg(DMatrix::identity(3, 3), w.clone(), tau, gauss_prior(1.0, 0.3), n, Some(&cfg)).unwrap();
    let prec = DMatrix::identity(3, 3) * (n as f64 * (tau + 1.0));
    let mean = (w * tau).add_scalar(0.3) / (tau + 1.0);
    let oracle = gaussian_mfvi(&GaussianTarget::new(mean, prec).unwrap());
    assert!(rep.surrogate.w2(&oracle).unwrap() < 1e-10);
    assert!(rep.measured_w2.unwrap() <= 1e-3);
}

#[test]
fn prior_swap_examples() {
    let mut r = rng(55);
    let d = 3;
    let samples = MCQuadrature::new(0, 5000, d).unwrap().points().clone();
    let p = Quadratic::isotropic(d, 1.0).unwrap();
    let same = prior_swap_interval(1.0, &p, &p, &samples, 2.0, 1.0, None).unwrap();
    assert_eq!(same.delta, 0.0);
    for _ in 0..5 {
        let mu: f64 = r.random_range(-2.0..2.0);
        let pt = Quadratic::new(DMatrix::identity(d, d), DVector::from_element(d, mu)).unwrap();
        let (and, ad) = (r.random_range(0.5..3.0), 1.0);
        let ps = prior_swap_interval(1.0, &p, &pt, &samples, and, ad, None).unwrap();
        let want = mu.abs() * (d as f64).sqrt() / (and + ad);
        assert!((ps.delta - want).abs() < 1e-12 * want.max(1.0));
        let ps3 = prior_swap_interval(3.0, &p, &pt, &samples, and, ad, None).unwrap();
        assert!((ps3.delta - 3.0 * ps.delta).abs() < 1e-12);
    }
    assert!(matches!(prior_swap_interval(1.0, &p, &p, &samples, -1.0, 0.5, None), Err(Error::Param(_))));
}

#[test]
fn prior_swap_interval_covers_the_true_mean() {
    let d = 2;
    let a = p2() * 3.0;
    let w = &a * DVector::from_vec(vec![0.5, -0.2]);
    let (alpha_nd, _) = spd_bounds(&a).unwrap();
    let prior: Arc<dyn ScalarPotential> = Arc::new(SoftplusQuadratic::new(1.0, 1.0).unwrap());
    let prior_t: Arc<dyn ScalarPotential> = Arc::new(GaussianScalar::new(1.0, 0.8).unwrap());
    let pp = Separable::product(vec![prior.clone(), prior.clone()]).unwrap();
    let ppt = Separable::product(vec![prior_t.clone(), prior_t.clone()]).unwrap();
    let post = Separable::linreg(a.clone(), w.clone(), 1.0, prior).unwrap();
    let post_t = Separable::linreg(a, w, 1.0, prior_t).unwrap();
    let cfg = SolverConfig::default();
    let q = MCQuadrature::new(4, 20_000, d).unwrap();
    let s = push_samples(&solve_lifted(&post, &cfg).unwrap().map, &q).unwrap();
    let st = push_samples(&solve_lifted(&post_t, &cfg).unwrap().map, &q).unwrap();
    let phi = |x: &[f64]| x[0] + x[1];
    let ell = 2f64.sqrt();
    let ps = prior_swap_interval(ell, &pp, &ppt, &st, alpha_nd, 1.0, Some(&phi)).unwrap();
    let (lo, hi) = ps.interval.unwrap();
    let truth = s.mean_of(phi);
    assert!(lo <= truth && truth <= hi, "{truth} not in [{lo}, {hi}]");
}

#[test]
fn contamination_examples() {
    let samples = MCQuadrature::new(0, 20_000, 1).unwrap().points().clone();
    let p = Quadratic::isotropic(1, 1.0).unwrap().with_offset(0.5 * (2.0 * PI).ln());
    let q = Quadratic::new(DMatrix::identity(1, 1), DVector::from_vec(vec![1.0])).unwrap().with_offset(0.5 * (2.0 * PI).ln());
    assert_eq!(contamination_sensitivity(&p, &q, 0.0, &samples, 1.0, 1.0).unwrap().bound, 0.0);
    assert_eq!(contamination_sensitivity(&p, &p, 0.3, &samples, 1.0, 1.0).unwrap().bound, 0.0);

    let eps = 0.1;
    let got = contamination_sensitivity(&p, &q, eps, &samples, 1.0, 0.5).unwrap();
    let ratio = |x: f64| 1.0 / ((1.0 - eps) * (0.5 - x).exp() + eps);
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    let h = 1e-4;
    let dense: f64 = (0..200_000).map(|k| -10.0 + (k as f64 + 0.5) * h).map(|x| ratio(x).powi(2) * phi(x) * h).sum();
    let quad = integrate_tol(|x| ratio(x).powi(2) * phi(x), -12.0, 12.0, 0.0, 1e-12).unwrap();
    assert!((dense - quad).abs() < 1e-8 * quad);
    let want = eps * dense.sqrt() / 1.5;
    assert!((got.bound - want).abs() <= 0.01 * want, "{} vs {want}", got.bound);

    assert!(matches!(contamination_sensitivity(&p, &q, 1.5, &samples, 1.0, 1.0), Err(Error::Param(_))));
    assert!(matches!(contamination_sensitivity(&p, &q, 0.1, &samples, -1.0, 0.5), Err(Error::Param(_))));
}

#[test]
fn control_closed_forms() {
    let cfg = SolverConfig::default();
    let horizon = 1.5;
    let zero: UtilityRef = Arc::new(ZeroUtility { d: 2 });
    let v0 = control_value(zero.clone(), horizon, &cfg).unwrap();
    assert!(v0.value.abs() < 1e-3, "{}", v0.value);
    let g0 = TransportMap::affine(v0.solution.map.grid().clone(), &[0.0, 0.0], &[horizon.sqrt(); 2]).unwrap();
    assert!(lp_distance(&v0.solution.map, &g0, 2.0).unwrap() < 1e-3);

    let c = vec![0.4, -0.7];
    let lin: UtilityRef = Arc::new(LinearUtility::new(c.clone()).unwrap());
    let v1 = control_value(lin, horizon, &cfg).unwrap();
    let norm2: f64 = c.iter().map(|v| v * v).sum();
    assert!((v1.value - horizon * norm2 / 2.0).abs() < 1e-3, "{}", v1.value);
    let means: Vec<f64> = c.iter().map(|v| horizon * v).collect();
    let g1 = TransportMap::affine(v1.solution.map.grid().clone(), &means, &[horizon.sqrt(); 2]).unwrap();
    assert!(lp_distance(&v1.solution.map, &g1, 2.0).unwrap() < 1e-3);

    assert!(matches!(control_potential(zero, 0.0), Err(Error::Param(_))));
}

#[test]
fn control_stability_for_linear_utilities() {
    let cfg = SolverConfig::default();
    let horizon = 0.8;
    let (c, ct) = (vec![0.4, -0.7, 0.1], vec![0.1, -0.5, 0.6]);
    let g = LinearUtility::new(c.clone()).unwrap();
    let gt = LinearUtility::new(ct.clone()).unwrap();
    let sol = control_value(Arc::new(g.clone()), horizon, &cfg).unwrap();
    let samples = push_samples(&sol.solution.map, &MCQuadrature::new(2, 20_000, 3).unwrap()).unwrap();
    let b = control_value_stability(&g, &gt, 0.0, horizon, &samples).unwrap();
    let diff: f64 = c.iter().zip(&ct).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!((b.grad_diff_l2 - diff).abs() < 1e-12);
    let exact = horizon / 2.0 * (ct.iter().map(|v| v * v).sum::<f64>() - c.iter().map(|v| v * v).sum::<f64>()).abs();
    assert!(exact <= b.bound);
    let tilde = control_value(Arc::new(gt.clone()), horizon, &cfg).unwrap();
    assert!((tilde.value - sol.value).abs() <= b.bound);

    let mut last = b.bound;
    for beta in [0.5, 1.0, 2.0] {
        let bb = control_value_stability(&g, &gt, beta, horizon, &samples).unwrap().bound;
        assert!(bb > last);
        last = bb;
    }
    assert_eq!(control_value_stability(&g, &g, 0.0, horizon, &samples).unwrap().bound, 0.0);
    let empty = PointSet::new(0, 3, vec![]);
    assert!(matches!(control_value_stability(&g, &gt, 0.0, horizon, &empty), Err(Error::Input(_))));
}

#[test]
fn control_stability_for_concave_utilities() {
    let cfg = SolverConfig::default();
    let horizon = 1.0;
    let g = NegSoftplusUtility::new(2, 1.0).unwrap();
    let gt = QuadraticUtility::new(p2() * 0.3, DVector::from_vec(vec![0.2, -0.1])).unwrap();
    let v = control_value(Arc::new(g.clone()), horizon, &cfg).unwrap();
    let vt = control_value(Arc::new(gt.clone()), horizon, &cfg).unwrap();
    let samples = push_samples(&v.solution.map, &MCQuadrature::new(2, 20_000, 2).unwrap()).unwrap();
    let beta = g.beta().max(gt.beta());
    let b = control_value_stability(&g, &gt, beta, horizon, &samples).unwrap();
    assert!((vt.value - v.value).abs() <= b.bound, "{} > {}", (vt.value - v.value).abs(), b.bound);
    assert!(matches!(control_value_stability(&g, &gt, 0.1, horizon, &samples), Err(Error::Param(_))));
}
