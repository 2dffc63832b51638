mod common;

use common::*;
use mfvi_core::applications::GaussianProduct;
use mfvi_core::oracle::*;
use mfvi_core::potentials::*;
use mfvi_core::solver::{cavi_solve, CaviConfig};
use nalgebra::{DMatrix, DVector};
use std::path::PathBuf;
use std::sync::Arc;

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/logistic_2d.json")
}

#[test]
fn gaussian_mfvi_examples() {
    let t = GaussianTarget::new(DVector::from_vec(vec![1.0, -2.0, 0.5]), DMatrix::identity(3, 3)).unwrap();
    let nu = gaussian_mfvi(&t);
    assert_eq!(nu.mean, vec![1.0, -2.0, 0.5]);
    assert_eq!(nu.std, vec![1.0; 3]);

    let t = GaussianTarget::new(DVector::zeros(2), p2()).unwrap();
    let nu = gaussian_mfvi(&t);
    assert!(nu.std.iter().all(|s| (s - 0.5f64.sqrt()).abs() < 1e-15));
    let cavi = cavi_solve(&Quadratic::new(p2(), DVector::zeros(2)).unwrap(), &CaviConfig::default()).unwrap();
    for d in &cavi.densities {
        assert!((d.variance() - 0.5).abs() < 1e-4);
    }

    assert!(GaussianTarget::new(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
    assert!(GaussianTarget::new(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0])).is_err());
}

#[test]
fn gaussian_mfvi_is_a_fixed_point() {
    let mut r = rng(61);
    for d in 1..=5 {
        let t = GaussianTarget::new(random_vec(&mut r, d, 1.0), random_spd(&mut r, d, 0.3, 4.0)).unwrap();
        let nu = gaussian_mfvi(&t);
        assert!(gaussian_fixed_point_residual(&t, &nu, 201).unwrap() <= 1e-8);
        let mut off = nu.clone();
        off.std[0] *= 1.1;
        assert!(gaussian_fixed_point_residual(&t, &off, 201).unwrap() > 1e-2);
    }
}

#[test]
fn product_w2_examples() {
    let a = GaussianProduct::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let b = GaussianProduct::new(vec![0.7, 0.0], vec![1.0, 1.0]).unwrap();
    let c = GaussianProduct::new(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
    assert_eq!(gaussian_product_w2(&a, &a).unwrap(), 0.0);
    assert!((gaussian_product_w2(&a, &b).unwrap() - 0.7).abs() < 1e-15);
    assert_eq!(gaussian_product_w2(&a, &c).unwrap(), 1.0);
}

#[test]
fn brute_force_matches_gaussian_oracle() {
    let mut r = rng(62);
    let mut cases = vec![(DVector::zeros(2), p2())];
    for _ in 0..3 {
        cases.push((random_vec(&mut r, 2, 1.0), random_spd(&mut r, 2, 0.5, 3.0)));
    }
    for (mean, prec) in cases {
        let p = Quadratic::new(prec.clone(), mean.clone()).unwrap();
        let bf = brute_force_mfvi_2d(&p, &GridSpec::around_mode(&p, 10.0).unwrap()).unwrap();
        let nu = gaussian_mfvi(&GaussianTarget::new(mean, prec).unwrap());
        for (j, m) in bf.marginals.iter().enumerate() {
            assert!((m.mean() - nu.mean[j]).abs() < 1e-4);
            assert!((m.variance() - nu.std[j].powi(2)).abs() < 1e-4, "{} vs {}", m.variance(), nu.std[j].powi(2));
        }
        assert!(bf.l1_change <= 1e-10);
    }
}

#[test]
fn separable_target_converges_in_one_sweep() {
    let parts: Vec<Arc<dyn ScalarPotential>> =
        vec![Arc::new(SoftplusQuadratic::new(1.0, 2.0).unwrap()), Arc::new(GaussianScalar::new(3.0, 0.4).unwrap())];
    let p = Separable::product(parts.clone()).unwrap();
    let spec = GridSpec::new([-8.0, -8.0], [8.0, 8.0]);
    let bf = brute_force_mfvi_2d(&p, &spec).unwrap();
    assert!(bf.sweeps <= 2, "{} sweeps", bf.sweeps);
    for (j, m) in bf.marginals.iter().enumerate() {
        let w: Vec<f64> = (0..m.mass.len()).map(|k| (-parts[j].value(m.x(k))).exp()).collect();
        let z: f64 = w.iter().sum();
        for (a, b) in m.mass.iter().zip(&w) {
            assert!((a - b / z).abs() < 1e-12);
        }
    }
}

#[test]
fn brute_force_rejects_wrong_dimension() {
    let p = Quadratic::isotropic(3, 1.0).unwrap();
    assert!(brute_force_mfvi_2d(&p, &GridSpec::new([-1.0; 2], [1.0; 2])).is_err());
}

#[test]
fn logistic_fixture_is_valid_and_reproducible() {
    if std::env::var_os("MFVI_REGENERATE_FIXTURES").is_some() {
        LogisticFixture::generate(LogisticInputs::standard().unwrap()).unwrap().save(fixture_path()).unwrap();
    }
    let fx = LogisticFixture::load(fixture_path()).unwrap();
    assert_eq!(fx.inputs, LogisticInputs::standard().unwrap());
    let fresh = LogisticFixture::generate(fx.inputs.clone()).unwrap();
    assert_eq!(fresh, fx);

    let mut tampered = fx.clone();
    tampered.inputs.ridge = 2.0;
    assert!(tampered.verify().is_err());
}

#[test]
fn random_suite_respects_condition_bound() {
    let suite = random_gaussian_suite(3, 12, 2..=6, 20.0).unwrap();
    assert_eq!(suite.len(), 12);
    for (k, t) in suite.iter().enumerate() {
        assert_eq!(t.dim(), 2 + k % 5);
        let (lo, hi) = spd_bounds(&t.precision).unwrap();
        assert!(hi / lo <= 20.0 * (1.0 + 1e-10) && lo >= 1.0 - 1e-10);
    }
    assert_eq!(suite, random_gaussian_suite(3, 12, 2..=6, 20.0).unwrap());
}
