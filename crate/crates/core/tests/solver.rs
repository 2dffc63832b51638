mod common;

use common::*;
use mfvi_core::oracle::{gaussian_mfvi, GaussianTarget};
use mfvi_core::potentials::*;
use mfvi_core::solver::*;
use mfvi_core::transport::*;
use mfvi_core::Error;
use nalgebra::DVector;
use rand::Rng;
use std::f64::consts::PI;
use std::sync::Arc;

fn grid(m: usize) -> Arc<QuantileGrid> {
    Arc::new(QuantileGrid::new(m).unwrap())
}

fn random_monotone(r: &mut impl Rng, g: &Arc<QuantileGrid>, d: usize) -> TransportMap {
    let m = g.len();
    let mut v = Vec::with_capacity(d * m);
    for _ in 0..d {
        let mut x = r.random_range(-4.0..-1.0);
        for _ in 0..m {
            x += r.random_range(0.02..0.3);
            v.push(x);
        }
    }
    TransportMap::new(g.clone(), d, v).unwrap()
}

#[test]
fn functional_examples() {
    let q = MCQuadrature::new(0, 20_000, 3).unwrap();
    let p = Quadratic::isotropic(3, 1.0).unwrap();
    let id = TransportMap::identity(grid(64), 3);
    let f = eval_functional(&id, &p, &q).unwrap();
    assert!((f - 1.5).abs() < 1e-2, "{f}");
    let e = elbo(&id, &p, &q).unwrap();
    assert!((e - 1.5 * (2.0 * PI).ln()).abs() < 1e-2);
    assert!((e - (elbo_offset(3) - f)).abs() < 1e-12);

    let q1 = MCQuadrature::new(0, 20_000, 1).unwrap();
    let p1 = Quadratic::isotropic(1, 1.0).unwrap();
    let mut best = (f64::INFINITY, 0.0);
    for s in [0.5, 0.8, 1.0, 1.25, 2.0] {
        let t = TransportMap::affine(grid(64), &[0.0], &[s]).unwrap();
        let f = eval_functional(&t, &p1, &q1).unwrap();
        assert!((f - (-s.ln() + 0.5 * s * s)).abs() < 1e-2 * s * s);
        if f < best.0 {
            best = (f, s);
        }
    }
    assert_eq!(best.1, 1.0);
}

#[test]
fn functional_is_midpoint_convex() {
    let mut r = rng(2);
    let q = MCQuadrature::new(0, 4000, 2).unwrap();
    let p = SoftplusPerturbed::new(Quadratic::new(p2(), DVector::zeros(2)).unwrap(), 1.0).unwrap();
    let g = grid(16);
    for _ in 0..50 {
        let (a, b) = (random_monotone(&mut r, &g, 2), random_monotone(&mut r, &g, 2));
        let mid = a.combine(0.5, &b, 0.5).unwrap();
        let fm = eval_functional(&mid, &p, &q).unwrap();
        let avg = 0.5 * (eval_functional(&a, &p, &q).unwrap() + eval_functional(&b, &p, &q).unwrap());
        assert!(fm <= avg + 1e-10);
    }
}

#[test]
fn non_monotone_map_is_a_domain_error() {
    let q = MCQuadrature::new(0, 100, 1).unwrap();
    let p = Quadratic::isotropic(1, 1.0).unwrap();
    let g = grid(4);
    let t = TransportMap::new_unchecked(g, 1, vec![0.0, 1.0, 0.5, 2.0]).unwrap();
    assert!(matches!(eval_functional(&t, &p, &q), Err(Error::Domain(_))));
    assert!(matches!(eval_first_variation(&t, &p, &q), Err(Error::Domain(_))));
}

#[test]
fn first_variation_matches_central_differences() {
    let mut r = rng(4);
    let q = MCQuadrature::new(1, 3000, 2).unwrap();
    let p = Logistic::new(
        nalgebra::DMatrix::from_row_slice(4, 2, &[1.0, 0.5, -0.3, 1.2, 0.8, -1.0, -1.5, 0.2]),
        vec![1.0, -1.0, 1.0, -1.0],
        1.0,
        1.0,
    )
    .unwrap();
    let g = grid(12);
    let t = random_monotone(&mut r, &g, 2);
    let grad = eval_first_variation(&t, &p, &q).unwrap();
    let dir: Vec<f64> = (0..grad.len()).map(|_| r.random_range(-1.0..1.0)).collect();
    let along: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
    let mut errs = vec![];
    for h in [1e-5, 1e-6] {
        let plus: Vec<f64> = t.values().iter().zip(&dir).map(|(v, e)| v + h * e).collect();
        let minus: Vec<f64> = t.values().iter().zip(&dir).map(|(v, e)| v - h * e).collect();
        let fp = eval_functional(&TransportMap::new(g.clone(), 2, plus).unwrap(), &p, &q).unwrap();
        let fm = eval_functional(&TransportMap::new(g.clone(), 2, minus).unwrap(), &p, &q).unwrap();
        errs.push(((fp - fm) / (2.0 * h) - along).abs());
    }
    for e in &errs {
        assert!(*e < 1e-5 * along.abs().max(1.0), "{errs:?}");
    }
}

#[test]
fn identity_is_stationary_for_standard_gaussian() {
    let q = MCQuadrature::new(0, 20_000, 2).unwrap();
    let p = Quadratic::isotropic(2, 1.0).unwrap();
    let id = TransportMap::identity(grid(64), 2);
    let g = eval_first_variation(&id, &p, &q).unwrap();
    let m = 64.0;
    let norm = ((m + 1.0) * g.iter().map(|v| v * v).sum::<f64>()).sqrt();
    assert!(norm < 2e-2, "{norm}");
}

#[test]
fn solve_examples() {
    let cfg = SolverConfig::default();
    let p = Quadratic::new(p2(), DVector::zeros(2)).unwrap();
    let sol = solve_lifted(&p, &cfg).unwrap();
    assert!(sol.residual <= cfg.tol);
    assert!((sol.elbo - (elbo_offset(2) - sol.functional_value)).abs() < 1e-12);
    assert!(sol.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0)));
    let oracle = gaussian_mfvi(&GaussianTarget::new(DVector::zeros(2), p2()).unwrap());
    let reference = oracle.to_map(sol.map.grid().clone()).unwrap();
    assert!(lp_distance(&sol.map, &reference, 2.0).unwrap() < 1e-2);
    for i in 0..2 {
        let s = sol.map.slopes(i);
        let mid = s[s.len() / 2];
        assert!((mid - 0.5f64.sqrt()).abs() < 2e-2, "{mid}");
    }

    let std = Quadratic::isotropic(3, 1.0).unwrap();
    let sol = solve_lifted(&std, &cfg).unwrap();
    let id = TransportMap::identity(sol.map.grid().clone(), 3);
    assert!(lp_distance(&sol.map, &id, 2.0).unwrap() < 1e-3);

    let shifted = Quadratic::new(nalgebra::DMatrix::identity(2, 2), DVector::from_vec(vec![0.7, 0.0])).unwrap();
    let sol = solve_lifted(&shifted, &cfg).unwrap();
    let target = TransportMap::from_fn(sol.map.grid().clone(), 2, |i, u| u + if i == 0 { 0.7 } else { 0.0 }).unwrap();
    assert!(lp_distance(&sol.map, &target, 2.0).unwrap() < 1e-3);
}

#[test]
fn solution_samples_match_marginal_precisions() {
    let mut r = rng(8);
    let prec = random_spd(&mut r, 3, 1.0, 6.0);
    let p = Quadratic::new(prec.clone(), DVector::zeros(3)).unwrap();
    let cfg = SolverConfig::default();
    let sol = solve_lifted(&p, &cfg).unwrap();
    let s = push_samples(&sol.map, &MCQuadrature::new(99, 50_000, 3).unwrap()).unwrap();
    for i in 0..3 {
        let v = s.column_var(i);
        assert!((v * prec[(i, i)] - 1.0).abs() < 3e-2, "{v} vs {}", 1.0 / prec[(i, i)]);
    }
}

#[test]
fn iteration_cap_is_a_convergence_error() {
    let p = SoftplusPerturbed::new(Quadratic::new(p2(), DVector::zeros(2)).unwrap(), 2.0).unwrap();
    let cfg = SolverConfig { max_iters: 1, tol: 1e-14, ..SolverConfig::default() };
    assert!(matches!(solve_lifted(&p, &cfg), Err(Error::Convergence { .. })));
}

#[test]
fn random_initializations_reach_the_same_optimizer() {
    let mut r = rng(21);
    let p = SoftplusPerturbed::new(Quadratic::new(p2(), DVector::from_vec(vec![0.3, -0.2])).unwrap(), 1.5).unwrap();
    let cfg = SolverConfig::default();
    let q = cfg.quadrature(2).unwrap();
    let g = cfg.grid().unwrap();
    let sols: Vec<TransportMap> = (0..5)
        .map(|_| solve_lifted_with(&p, &cfg, &q, Init::Map(random_monotone(&mut r, &g, 2))).unwrap().map)
        .collect();
    for a in 0..5 {
        for b in a + 1..5 {
            assert!(lp_distance(&sols[a], &sols[b], 2.0).unwrap() <= 1e-3);
        }
    }
}

#[test]
fn grid_refinement_changes_little() {
    let mut r = rng(13);
    for _ in 0..3 {
        let p = Quadratic::new(random_spd(&mut r, 3, 1.0, 5.0), random_vec(&mut r, 3, 1.0)).unwrap();
        let a = solve_lifted(&p, &SolverConfig { grid_m: 64, ..SolverConfig::default() }).unwrap();
        let b = solve_lifted(&p, &SolverConfig { grid_m: 128, ..SolverConfig::default() }).unwrap();
        assert!((a.functional_value - b.functional_value).abs() <= 1e-4, "{} vs {}", a.functional_value, b.functional_value);
    }
}

#[test]
fn solution_beats_perturbations() {
    let mut r = rng(17);
    let p = SoftplusPerturbed::new(Quadratic::new(p2(), DVector::zeros(2)).unwrap(), 1.0).unwrap();
    let cfg = SolverConfig::default();
    let q = cfg.quadrature(2).unwrap();
    let sol = solve_lifted_with(&p, &cfg, &q, Init::Auto).unwrap();
    for _ in 0..20 {
        let vals: Vec<f64> = sol.map.values().iter().map(|v| v + r.random_range(-1.0..1.0) * 1e-3).collect();
        let Ok(t) = TransportMap::new(sol.map.grid().clone(), 2, vals) else { continue };
        assert!(elbo(&t, &p, &q).unwrap() <= sol.elbo + 1e-12);
    }
}

#[test]
fn isotropic_reward_gap_from_solver_elbos() {
    let cfg = SolverConfig::default();
    for (s1, s2, d) in [(1.0, 1.5, 4), (0.5, 1.0, 2), (2.0, 1.2, 3)] {
        let a = solve_lifted(&Quadratic::isotropic(d, s1).unwrap(), &cfg).unwrap();
        let b = solve_lifted(&Quadratic::isotropic(d, s2).unwrap(), &cfg).unwrap();
        let exact = 0.5 * d as f64 * ((s1 * s1) / (s2 * s2)).ln().abs();
        let measured = (a.elbo - b.elbo).abs();
        assert!((measured - exact).abs() <= 0.02 * exact, "{measured} vs {exact}");
    }
}

#[test]
fn cavi_examples() {
    let p = Quadratic::new(p2(), DVector::zeros(2)).unwrap();
    let res = cavi_solve(&p, &CaviConfig::default()).unwrap();
    for dens in &res.densities {
        assert!((dens.variance() - 0.5).abs() < 1e-3, "{}", dens.variance());
        assert!((dens.mass() - 1.0).abs() < 1e-8);
    }
    let lifted = solve_lifted(&p, &SolverConfig::default()).unwrap();
    assert!(lp_distance(&res.map, &lifted.map, 2.0).unwrap() <= 5e-3);

    let prior: Arc<dyn ScalarPotential> = Arc::new(SoftplusQuadratic::new(1.0, 2.0).unwrap());
    let sep = Separable::product(vec![prior.clone(), Arc::new(GaussianScalar::new(2.0, 0.5).unwrap())]).unwrap();
    let res = cavi_solve(&sep, &CaviConfig::default()).unwrap();
    assert!(res.sweeps <= 2, "{} sweeps", res.sweeps);
    let d0 = &res.densities[0];
    let z: f64 = (0..d0.len()).map(|k| (-prior.value(d0.x(k))).exp()).sum::<f64>() * d0.step();
    let mean: f64 = (0..d0.len()).map(|k| d0.x(k) * (-prior.value(d0.x(k))).exp()).sum::<f64>() * d0.step() / z;
    assert!((d0.mean() - mean).abs() < 1e-6);
}

#[test]
fn cavi_energy_stride_matches_full_evaluation() {
    let quad = Quadratic::new(p2(), DVector::from_vec(vec![0.3, -0.2])).unwrap();
    let soft = SoftplusPerturbed::new(quad.clone(), 0.8).unwrap();
    let cases: [(&dyn Potential, f64); 2] = [(&quad, 1e-9), (&soft, 1e-4)];
    for (p, tol) in cases {
        let full = cavi_solve(p, &CaviConfig { mc_samples: 1024, ..CaviConfig::default() }).unwrap();
        for stride in [4, 8, 7] {
            let cfg = CaviConfig { mc_samples: 1024, energy_stride: stride, ..CaviConfig::default() };
            let fast = cavi_solve(p, &cfg).unwrap();
            let e = lp_distance(&full.map, &fast.map, 2.0).unwrap();
            assert!(e <= tol, "{} stride {stride}: {e}", p.label());
        }
    }
    let bad = CaviConfig { energy_stride: 0, ..CaviConfig::default() };
    assert!(matches!(cavi_solve(&quad, &bad), Err(Error::Param(_))));
}
