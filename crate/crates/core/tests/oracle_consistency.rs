//! Cross-checks between the expansion engine and the independent oracles.

use mvcdf_core::expansion::{
    correlation_sensitivity, expand, expand_setup, ExpansionOptions, PerturbationSetup,
    QuadratureConfig,
};
use mvcdf_core::oracle;
use mvcdf_core::student_t::{student_t_expand, StudentTRequest};
use mvcdf_core::{CorrelationMatrix, OneFactorModel};

fn opts() -> ExpansionOptions {
    ExpansionOptions {
        check_convergence: false,
        ..Default::default()
    }
}

#[test]
fn order0_exact_one_factor_against_monte_carlo() {
    // Equicorrelated input is exactly one-factor, so order zero already is
    // the full answer; the MC oracle provides the independent value.
    let rho = CorrelationMatrix::equicorrelated(10, 0.49).unwrap();
    let x_max = vec![1.0; 10];
    let r = expand(rho.clone(), x_max.clone(), QuadratureConfig::default(), &opts()).unwrap();
    assert!(r.i1.unwrap().abs() < 1e-10);
    let mc = oracle::mc_gaussian_cdf(&rho, &x_max, 10_000_000, 1234).unwrap();
    assert!(
        (r.i0 - mc.value).abs() < 3.0 * mc.std_error,
        "i0 = {}, mc = {} +/- {}",
        r.i0,
        mc.value,
        mc.std_error
    );
}

#[test]
fn partial_sums_beat_order_zero_on_mild_matrices() {
    // Random 6x6 with small internal variance: the second partial sum lands
    // closer to the MC value than order zero does.
    let rho = oracle::random_correlation_matrix_with(6, 2024, 0.3..0.6, 0.03).unwrap();
    let x_max = vec![0.8, -0.2, 1.5, 0.3, 0.0, 1.0];
    let r = expand(rho.clone(), x_max.clone(), QuadratureConfig::default(), &opts()).unwrap();
    let mc = oracle::mc_gaussian_cdf(&rho, &x_max, 10_000_000, 77).unwrap();
    let e0 = (r.partial0 - mc.value).abs();
    let e2 = (r.partial2.unwrap() - mc.value).abs();
    assert!(
        e2 < e0,
        "no improvement: |p0 - mc| = {e0:.3e}, |p2 - mc| = {e2:.3e}"
    );
}

#[test]
fn second_order_improves_on_first_against_tensor_grid() {
    // Deliberately mismatched base on a 3x3 problem; the deterministic
    // tensor-grid oracle grades each truncation depth.
    let rho = CorrelationMatrix::equicorrelated(3, 0.45).unwrap();
    let model = OneFactorModel::from_loadings(&[0.6, 0.6, 0.6]).unwrap();
    let x_max = vec![0.4, -0.1, 0.9];
    let setup =
        PerturbationSetup::with_model(rho.clone(), model, x_max.clone(), QuadratureConfig::default())
            .unwrap();
    let r = expand_setup(&setup, &opts()).unwrap();
    let grid = oracle::tensor_grid_cdf(&rho, &x_max, 120).unwrap();
    let e1 = (r.partial1.unwrap() - grid.value).abs();
    let e2 = (r.partial2.unwrap() - grid.value).abs();
    assert!(
        e2 < e1,
        "second order did not improve: e1 = {e1:.3e}, e2 = {e2:.3e}"
    );
}

#[test]
fn engine_matches_tensor_grid_on_exact_one_factor_n4() {
    let rho = CorrelationMatrix::equicorrelated(4, 0.36).unwrap();
    let x_max = vec![0.5; 4];
    let r = expand(rho.clone(), x_max.clone(), QuadratureConfig::default(), &opts()).unwrap();
    let grid = oracle::tensor_grid_cdf(&rho, &x_max, 80).unwrap();
    assert!(
        (r.i0 - grid.value).abs() < 1e-7,
        "engine {} vs grid {}",
        r.i0,
        grid.value
    );
}

#[test]
fn sensitivity_sign_and_magnitude_against_common_random_numbers() {
    let rho1 = CorrelationMatrix::equicorrelated(3, 0.30).unwrap();
    let rho2 = CorrelationMatrix::equicorrelated(3, 0.35).unwrap();
    let x_max = vec![0.0; 3];
    let s = correlation_sensitivity(
        rho1.clone(),
        rho2.clone(),
        x_max.clone(),
        QuadratureConfig::default(),
        &opts(),
    )
    .unwrap();
    // Same seed on both sides: the difference of estimates shares most of
    // its sampling noise.
    let mc1 = oracle::mc_gaussian_cdf(&rho1, &x_max, 10_000_000, 555).unwrap();
    let mc2 = oracle::mc_gaussian_cdf(&rho2, &x_max, 10_000_000, 555).unwrap();
    let mc_delta = mc2.value - mc1.value;
    assert_eq!(s.value.signum(), mc_delta.signum());
    assert!(
        ((s.value - mc_delta) / mc_delta).abs() < 0.10,
        "engine delta {} vs mc delta {}",
        s.value,
        mc_delta
    );
}

#[test]
fn student_t_matches_its_monte_carlo_oracle() {
    let rho = CorrelationMatrix::equicorrelated(2, 0.5).unwrap();
    let x_max = vec![0.6, -0.3];
    let nu = 6.0;
    let req = StudentTRequest::new(rho.clone(), x_max.clone(), nu);
    let r = student_t_expand(&req, &opts()).unwrap();
    let mc = oracle::mc_student_t_cdf(&rho, &x_max, nu, 4_000_000, 99).unwrap();
    assert!(
        (r.headline() - mc.value).abs() < 3.0 * mc.std_error + 2e-4,
        "engine {} vs mc {} +/- {}",
        r.headline(),
        mc.value,
        mc.std_error
    );
}

#[test]
fn mc_gaussian_and_student_t_converge_for_huge_nu() {
    let rho = CorrelationMatrix::equicorrelated(3, 0.4).unwrap();
    let x_max = [0.5, 0.0, 1.0];
    let g = oracle::mc_gaussian_cdf(&rho, &x_max, 1_000_000, 31).unwrap();
    let t = oracle::mc_student_t_cdf(&rho, &x_max, 1e6, 1_000_000, 31).unwrap();
    let spread = (g.std_error.powi(2) + t.std_error.powi(2)).sqrt();
    assert!((g.value - t.value).abs() < 3.0 * spread);
}

#[test]
fn oracle_estimates_serialize_for_regression_records() {
    let rho = CorrelationMatrix::identity(2).unwrap();
    let est = oracle::mc_gaussian_cdf(&rho, &[0.0, 0.0], 50_000, 5).unwrap();
    let text = serde_json::to_string(&est).unwrap();
    let back: mvcdf_core::OracleEstimate = serde_json::from_str(&text).unwrap();
    assert_eq!(est, back);
    assert!(text.contains("mc_cholesky"));
}
