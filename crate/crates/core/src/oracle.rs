//! Independent ground-truth evaluators used to validate the expansion:
//! seeded Monte-Carlo estimators, a deterministic tensor-grid integrator for
//! small dimensions, closed-form bivariate orthants and brute-force
//! truncated-moment quadrature.
//!
//! Nothing here touches the expansion path; agreements between the two sides
//! are meaningful evidence.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationMatrix;
use crate::error::Error;
use crate::quadrature::{adaptive_simpson, gauss_legendre};
use crate::special::normal_pdf;

/// How an oracle value was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    McCholesky,
    McStudentT,
    TensorGrid,
    ClosedForm,
    MomentQuadrature,
}

/// A ground-truth estimate with its uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub value: f64,
    /// Zero for deterministic oracles.
    pub std_error: f64,
    pub samples_or_nodes: u64,
    pub method: OracleMethod,
    /// The seed that reproduces a stochastic estimate.
    pub seed: Option<u64>,
}

/// RNG used by every stochastic oracle. The algorithm is pinned (ChaCha with
/// 12 rounds) so recorded estimates reproduce across platforms and releases.
fn oracle_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const MC_BATCH: u64 = 1 << 16;

fn mc_batches(samples: u64) -> Vec<u64> {
    let full = samples / MC_BATCH;
    let rem = samples % MC_BATCH;
    let mut batches = vec![MC_BATCH; full as usize];
    if rem > 0 {
        batches.push(rem);
    }
    batches
}

/// Monte-Carlo estimate of the Gaussian probability that every coordinate of
/// a correlated standard-normal vector stays below its cap. Cholesky
/// sampling, batched with one RNG stream per batch; fixed seed gives a fixed
/// estimate regardless of thread count.
pub fn mc_gaussian_cdf(
    rho: &CorrelationMatrix,
    x_max: &[f64],
    samples: u64,
    seed: u64,
) -> Result<OracleEstimate, Error> {
    mc_cdf_impl(rho, x_max, None, samples, seed)
}

/// Monte-Carlo estimate for the Student-t law: the Gaussian draw divided by
/// `sqrt(chi2_nu / nu)`.
pub fn mc_student_t_cdf(
    rho: &CorrelationMatrix,
    x_max: &[f64],
    nu: f64,
    samples: u64,
    seed: u64,
) -> Result<OracleEstimate, Error> {
    if !(nu > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "degrees of freedom must be positive, got {nu}"
        )));
    }
    mc_cdf_impl(rho, x_max, Some(nu), samples, seed)
}

fn mc_cdf_impl(
    rho: &CorrelationMatrix,
    x_max: &[f64],
    nu: Option<f64>,
    samples: u64,
    seed: u64,
) -> Result<OracleEstimate, Error> {
    let n = rho.n();
    if x_max.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x_max.len(),
        });
    }
    if samples < 10_000 {
        return Err(Error::InvalidConfig(format!(
            "need at least 10^4 samples, got {samples}"
        )));
    }
    let chol = rho
        .entries()
        .clone()
        .cholesky()
        .ok_or(Error::CholeskyFailure)?;
    let l = chol.l();
    let chi = nu.map(|v| ChiSquared::new(v).expect("validated nu"));

    let batches = mc_batches(samples);
    let hits: u64 = batches
        .par_iter()
        .enumerate()
        .map(|(b, &count)| {
            let mut rng = oracle_rng(seed, b as u64);
            let mut g: DVector<f64> = DVector::zeros(n);
            let mut hits = 0u64;
            for _ in 0..count {
                for gi in g.iter_mut() {
                    *gi = StandardNormal.sample(&mut rng);
                }
                let scale = match &chi {
                    Some(c) => (c.sample(&mut rng) / nu.unwrap()).sqrt(),
                    None => 1.0,
                };
                let mut inside = true;
                for i in 0..n {
                    let mut zi = 0.0;
                    for j in 0..=i {
                        zi += l[(i, j)] * g[j];
                    }
                    if zi / scale > x_max[i] {
                        inside = false;
                        break;
                    }
                }
                if inside {
                    hits += 1;
                }
            }
            hits
        })
        .sum();

    let p = hits as f64 / samples as f64;
    Ok(OracleEstimate {
        value: p,
        std_error: (p * (1.0 - p) / samples as f64).sqrt(),
        samples_or_nodes: samples,
        method: if nu.is_some() {
            OracleMethod::McStudentT
        } else {
            OracleMethod::McCholesky
        },
        seed: Some(seed),
    })
}

/// Lower truncation of the tensor-grid box; the Gaussian mass below is
/// smaller than 1e-30 per coordinate.
const BOX_FLOOR: f64 = -12.0;

/// Deterministic full-tensor Gauss-Legendre integration of the Gaussian
/// density over the box `[-12, x_max_i]`. Cost grows as `nodes^n`, so the
/// dimension is capped at four.
pub fn tensor_grid_cdf(
    rho: &CorrelationMatrix,
    x_max: &[f64],
    nodes_per_dim: usize,
) -> Result<OracleEstimate, Error> {
    let n = rho.n();
    if n > 4 {
        return Err(Error::DimensionTooLarge { n, max: 4 });
    }
    if x_max.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x_max.len(),
        });
    }
    let nodes_per_dim = nodes_per_dim.max(8);

    // Degenerate boxes: an empty coordinate kills the probability.
    if x_max.iter().any(|&x| x <= BOX_FLOOR) {
        return Ok(OracleEstimate {
            value: 0.0,
            std_error: 0.0,
            samples_or_nodes: 0,
            method: OracleMethod::TensorGrid,
            seed: None,
        });
    }

    let (gx, gw) = gauss_legendre(nodes_per_dim);
    let mut axes_nodes: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut axes_weights: Vec<Vec<f64>> = Vec::with_capacity(n);
    for &cap in x_max {
        let hi = cap.min(-BOX_FLOOR);
        let half = 0.5 * (hi - BOX_FLOOR);
        let mid = 0.5 * (hi + BOX_FLOOR);
        axes_nodes.push(gx.iter().map(|&x| mid + half * x).collect());
        axes_weights.push(gw.iter().map(|&w| half * w).collect());
    }

    let inv = rho.inverse();
    let norm = 1.0
        / ((2.0 * std::f64::consts::PI).powf(n as f64 / 2.0) * rho.determinant().sqrt());

    // Walk the outermost axis in parallel, the rest by odometer.
    let total: f64 = (0..nodes_per_dim)
        .into_par_iter()
        .map(|i0| {
            let mut point = vec![0.0; n];
            point[0] = axes_nodes[0][i0];
            let mut idx = vec![0usize; n];
            let mut acc = 0.0;
            loop {
                for d in 1..n {
                    point[d] = axes_nodes[d][idx[d]];
                }
                let mut quad = 0.0;
                for a in 0..n {
                    let mut row = 0.0;
                    for b in 0..n {
                        row += inv[(a, b)] * point[b];
                    }
                    quad += point[a] * row;
                }
                let mut w = axes_weights[0][i0];
                for d in 1..n {
                    w *= axes_weights[d][idx[d]];
                }
                acc += w * (-0.5 * quad).exp();

                // Odometer over axes 1..n.
                let mut d = n - 1;
                loop {
                    if d == 0 {
                        return acc * norm;
                    }
                    idx[d] += 1;
                    if idx[d] < nodes_per_dim {
                        break;
                    }
                    idx[d] = 0;
                    d -= 1;
                }
            }
        })
        .sum();

    Ok(OracleEstimate {
        value: total,
        std_error: 0.0,
        samples_or_nodes: (nodes_per_dim as u64).pow(n as u32),
        method: OracleMethod::TensorGrid,
        seed: None,
    })
}

/// Closed-form centered bivariate orthant probability
/// `1/4 + asin(r) / (2 pi)`, valid for any centered elliptical law.
pub fn bivariate_orthant(r: f64) -> f64 {
    0.25 + r.asin() / (2.0 * std::f64::consts::PI)
}

/// Integrates `f` over `[lo, hi]` as adaptive panels of width at most two,
/// so the initial probes of each panel cannot sail over the density bump the
/// way single-shot adaptive rules do on long, mostly-dead intervals.
fn panelled_adaptive<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> f64 {
    let panels = (((hi - lo) / 2.0).ceil() as usize).max(1);
    let width = (hi - lo) / panels as f64;
    let per_panel_tol = tol / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let a = lo + p as f64 * width;
        let b = if p + 1 == panels { hi } else { a + width };
        total += adaptive_simpson(f, a, b, per_panel_tol);
    }
    total
}

/// Tail cut for the brute-force moment integrals: the integrand
/// `xi^k phi(xi)` for `k <= 4` carries less than 1e-25 beyond this.
const MOMENT_TAIL: f64 = 13.0;

/// Brute-force truncated moment `integral_(-inf)^(upper) xi^k phi(xi) dxi`
/// by adaptive quadrature, independent of the closed-form recursion used by
/// the expansion.
pub fn truncated_moment(k: u32, upper: f64) -> f64 {
    if upper <= -MOMENT_TAIL {
        return 0.0;
    }
    let hi = upper.min(MOMENT_TAIL);
    let f = |x: f64| x.powi(k as i32) * normal_pdf(x);
    panelled_adaptive(&f, -MOMENT_TAIL, hi, 1e-13)
}

/// Brute-force moment of `(c z + s xi)^k` over `xi <= xi_upper` at fixed
/// factor value `z`; the oracle for the factor-slice construction.
pub fn truncated_power_moment(c: f64, s: f64, zeta: f64, xi_upper: f64, k: u32) -> f64 {
    if xi_upper <= -MOMENT_TAIL {
        return 0.0;
    }
    let hi = xi_upper.min(MOMENT_TAIL);
    let f = |xi: f64| (c * zeta + s * xi).powi(k as i32) * normal_pdf(xi);
    panelled_adaptive(&f, -MOMENT_TAIL, hi, 1e-13)
}

/// Deterministic pseudo-random positive-definite correlation matrix:
/// a one-factor backbone with uniform loadings plus symmetric jitter,
/// re-drawn until validation passes.
pub fn random_correlation_matrix(n: usize, seed: u64) -> Result<CorrelationMatrix, Error> {
    random_correlation_matrix_with(n, seed, 0.2..0.7, 0.08)
}

/// As [`random_correlation_matrix`] with explicit loading range and jitter
/// amplitude.
pub fn random_correlation_matrix_with(
    n: usize,
    seed: u64,
    loading_range: std::ops::Range<f64>,
    jitter: f64,
) -> Result<CorrelationMatrix, Error> {
    let mut rng = oracle_rng(seed, u64::MAX);
    for _ in 0..200 {
        let c: Vec<f64> = (0..n)
            .map(|_| rng.random_range(loading_range.clone()))
            .collect();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let noise = rng.random_range(-jitter..jitter);
                let val = (c[i] * c[j] + noise).clamp(-0.999, 0.999);
                m[(i, j)] = val;
                m[(j, i)] = val;
            }
            m[(i, i)] = 1.0;
        }
        if let Ok(valid) = CorrelationMatrix::new(m) {
            return Ok(valid);
        }
    }
    Err(Error::InvalidConfig(format!(
        "no positive-definite draw in 200 attempts (n = {n}, jitter = {jitter})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mc_gaussian_independent_orthant() {
        let rho = CorrelationMatrix::identity(2).unwrap();
        let est = mc_gaussian_cdf(&rho, &[0.0, 0.0], 1_000_000, 7).unwrap();
        assert!((est.value - 0.25).abs() < 3.0 * est.std_error);
    }

    #[test]
    fn mc_gaussian_bivariate_closed_form() {
        let rho = CorrelationMatrix::equicorrelated(2, 0.5).unwrap();
        let est = mc_gaussian_cdf(&rho, &[0.0, 0.0], 1_000_000, 11).unwrap();
        assert!((est.value - 1.0 / 3.0).abs() < 3.0 * est.std_error);
    }

    #[test]
    fn mc_is_deterministic_for_fixed_seed() {
        let rho = CorrelationMatrix::equicorrelated(3, 0.4).unwrap();
        let a = mc_gaussian_cdf(&rho, &[0.5, -0.2, 1.0], 50_000, 42).unwrap();
        let b = mc_gaussian_cdf(&rho, &[0.5, -0.2, 1.0], 50_000, 42).unwrap();
        assert_eq!(a.value, b.value);
        let c = mc_gaussian_cdf(&rho, &[0.5, -0.2, 1.0], 50_000, 43).unwrap();
        assert_ne!(a.value, c.value);
    }

    #[test]
    fn mc_rejects_thin_sampling() {
        let rho = CorrelationMatrix::identity(2).unwrap();
        assert!(mc_gaussian_cdf(&rho, &[0.0, 0.0], 100, 1).is_err());
    }

    #[test]
    fn mc_student_t_cauchy_median() {
        let rho = CorrelationMatrix::identity(2).unwrap();
        let est = mc_student_t_cdf(&rho, &[0.0, f64::INFINITY], 1.0, 400_000, 3).unwrap();
        assert!((est.value - 0.5).abs() < 3.0 * est.std_error);
    }

    #[test]
    fn mc_student_t_orthant_identity_for_any_nu() {
        let rho = CorrelationMatrix::equicorrelated(2, 0.5).unwrap();
        let est = mc_student_t_cdf(&rho, &[0.0, 0.0], 4.0, 1_000_000, 5).unwrap();
        assert!((est.value - 1.0 / 3.0).abs() < 3.0 * est.std_error);
    }

    #[test]
    fn mc_student_t_huge_nu_matches_gaussian() {
        let rho = CorrelationMatrix::equicorrelated(2, 0.3).unwrap();
        let caps = [0.4, -0.1];
        let t = mc_student_t_cdf(&rho, &caps, 1e6, 200_000, 9).unwrap();
        let g = mc_gaussian_cdf(&rho, &caps, 200_000, 9).unwrap();
        let spread = (t.std_error.powi(2) + g.std_error.powi(2)).sqrt();
        assert!((t.value - g.value).abs() < 3.0 * spread);
    }

    #[test]
    fn tensor_grid_bivariate_closed_form() {
        let rho = CorrelationMatrix::equicorrelated(2, 0.5).unwrap();
        let est = tensor_grid_cdf(&rho, &[0.0, 0.0], 200).unwrap();
        assert!((est.value - 1.0 / 3.0).abs() < 1e-8);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn tensor_grid_independent_case_factorizes() {
        let rho = CorrelationMatrix::identity(3).unwrap();
        let est = tensor_grid_cdf(&rho, &[0.4, -0.3, 1.2], 80).unwrap();
        let truth: f64 = [0.4, -0.3, 1.2]
            .iter()
            .map(|&x| crate::special::normal_cdf(x))
            .product();
        assert!((est.value - truth).abs() < 1e-9);
    }

    #[test]
    fn tensor_grid_rejects_large_dimension() {
        let rho = CorrelationMatrix::identity(5).unwrap();
        assert!(matches!(
            tensor_grid_cdf(&rho, &[0.0; 5], 20),
            Err(Error::DimensionTooLarge { .. })
        ));
    }

    #[test]
    fn mc_and_tensor_grid_agree() {
        let rho = random_correlation_matrix(3, 21).unwrap();
        let caps = [0.6, -0.4, 1.1];
        let grid = tensor_grid_cdf(&rho, &caps, 80).unwrap();
        let mc = mc_gaussian_cdf(&rho, &caps, 1_000_000, 21).unwrap();
        assert!((grid.value - mc.value).abs() < 3.0 * mc.std_error);
    }

    #[test]
    fn truncated_moment_reference_values() {
        assert!((truncated_moment(0, 0.0) - 0.5).abs() < 1e-12);
        let phi0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((truncated_moment(1, 0.0) + phi0).abs() < 1e-12);
        assert!((truncated_moment(4, 39.0) - 3.0).abs() < 1e-11);
    }

    #[test]
    fn quadrature_and_recursion_moments_agree() {
        for k in 0..=4u32 {
            for &u in &[-3.0, -0.7, 0.0, 0.9, 2.4, 6.0] {
                let brute = truncated_moment(k, u);
                let closed = crate::special::truncated_moments(u)[k as usize];
                assert!(
                    (brute - closed).abs() < 1e-11,
                    "k = {k}, upper = {u}: {brute} vs {closed}"
                );
            }
        }
    }

    #[test]
    fn random_matrices_are_valid_and_reproducible() {
        let a = random_correlation_matrix(6, 1).unwrap();
        let b = random_correlation_matrix(6, 1).unwrap();
        assert_eq!(a.entries(), b.entries());
        assert!(a.min_eigenvalue() > 0.0);
    }
}
