mod common;

use common::*;
use ctxmr::heterogeneity::q_modified_second_order;
use ctxmr::ivcore::ivw_pool;
use ctxmr::metareg::{meta_regress, Tau2Method};
use ctxmr::numerics::chi_square_sf;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn chi_square_matches_quadrature_on_grid() {
    let mut worst = 0.0f64;
    for &df in &[1u32, 2, 3, 5, 9, 19, 30, 50] {
        for &q in &[0.01, 0.5, 1.0, 3.0, 7.5, 15.0, 22.2, 40.0, 80.0] {
            let got = chi_square_sf(q, df).unwrap().value();
            let want = chi_square_sf_oracle(q, df);
            worst = worst.max((got - want).abs());
            assert!((got - want).abs() < 1e-8, "q={q} df={df}: {got} vs {want}");
        }
    }
    assert!(worst < 1e-8);
}

#[test]
fn quadrature_oracle_self_check() {
    // df = 2 has the closed form exp(-q/2)
    for &q in &[0.1, 2.0, 9.0, 30.0] {
        assert!((chi_square_sf_oracle(q, 2) - (-q / 2.0f64).exp()).abs() < 1e-12);
    }
}

#[test]
fn modified_q_matches_grid_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for i in 0..100 {
        let assoc = random_q_instance(&mut rng, 10);
        let results = assoc_results(&assoc);
        let ivw = ivw_pool(&results).unwrap();
        let (_, q_grid) = modified_q_grid_min(&assoc, ivw.beta, 20.0 * ivw.se + 0.5);
        let got = q_modified_second_order(&results).unwrap();
        assert!((got.q - q_grid).abs() < 1e-6, "instance {i}: {} vs {}", got.q, q_grid);
        assert!(got.q <= q_grid + 1e-9);
    }
}

#[test]
fn reml_matches_profile_likelihood_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for i in 0..50 {
        let inst = random_meta_instance(&mut rng, 10);
        let upper = 10.0 * sample_var(&inst.est);
        let (tau2, slope) = reml_grid(&inst.est, &inst.var, &inst.means, upper);
        let fit = meta_regress(&inst.est, &inst.var, &inst.means, Tau2Method::Reml).unwrap();
        assert!((fit.tau2 - tau2).abs() < 1e-4, "instance {i}: tau2 {} vs {}", fit.tau2, tau2);
        assert!((fit.slope - slope).abs() < 1e-6, "instance {i}: slope {} vs {}", fit.slope, slope);
    }
}

#[test]
fn fixed_effect_meta_regression_is_weighted_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let inst = random_meta_instance(&mut rng, 8);
    let (_, intercept, slope) = reml_loglik(&inst.est, &inst.var, &inst.means, 0.0);
    let fit = meta_regress(&inst.est, &inst.var, &inst.means, Tau2Method::Fixed).unwrap();
    assert_eq!(fit.tau2, 0.0);
    assert!((fit.slope - slope).abs() < 1e-10);
    assert!((fit.intercept - intercept).abs() < 1e-10);
}

#[test]
fn ks_oracle_is_calibrated() {
    let evenly: Vec<f64> = (0..200).map(|i| (i as f64 + 0.5) / 200.0).collect();
    assert!(ks_uniform(&evenly).1 > 0.99);
    let skewed: Vec<f64> = evenly.iter().map(|u| u * u).collect();
    assert!(ks_uniform(&skewed).1 < 1e-6);
}
