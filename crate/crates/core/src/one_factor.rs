//! One-factor approximation to a correlation matrix: loading fits, the
//! factored matrix `rho_f` with off-diagonals `c_i c_j`, and its analytic
//! inverse and determinant.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationMatrix;
use crate::error::Error;

/// Loadings whose magnitude would reach 1 are clipped to this bound so the
/// residual scales stay positive.
const LOADING_CLIP: f64 = 1.0 - 1e-6;

/// One-factor model: each coordinate is `c_i * (common factor) + s_i * noise`
/// with `s_i = sqrt(1 - c_i^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneFactorModel {
    /// Factor loadings, `|c_i| < 1`.
    pub c: Vec<f64>,
    /// Residual scales, all positive.
    pub s: Vec<f64>,
    /// `Sigma^2 = 1 + sum(c_i^2 / s_i^2)`.
    pub sigma2: f64,
    /// `det(rho_f) = Sigma^2 * prod(s_i^2)`.
    pub det_rho_f: f64,
    warnings: Vec<String>,
}

impl OneFactorModel {
    /// Builds the model from explicit loadings.
    pub fn from_loadings(c: &[f64]) -> Result<Self, Error> {
        Self::build(c.to_vec(), Vec::new())
    }

    fn build(c: Vec<f64>, warnings: Vec<String>) -> Result<Self, Error> {
        for (i, &ci) in c.iter().enumerate() {
            if ci.abs() >= 1.0 {
                return Err(Error::LoadingOutOfRange {
                    index: i,
                    value: ci,
                });
            }
        }
        let s: Vec<f64> = c.iter().map(|&ci| (1.0 - ci * ci).sqrt()).collect();
        let sigma2 = 1.0 + c.iter().zip(&s).map(|(&ci, &si)| ci * ci / (si * si)).sum::<f64>();
        let det_rho_f = sigma2 * s.iter().map(|&si| si * si).product::<f64>();
        // diag(s^2) + c c^T with all s_i > 0 is positive definite, so no
        // separate spectral test is needed here; debug builds still verify.
        let model = OneFactorModel {
            c,
            s,
            sigma2,
            det_rho_f,
            warnings,
        };
        #[cfg(debug_assertions)]
        {
            let rho_f = model.rho_f();
            let min = rho_f
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            if min <= 0.0 {
                return Err(Error::RhoFNotPositiveDefinite {
                    min_eigenvalue: min,
                });
            }
        }
        Ok(model)
    }

    /// Fits per-row loadings from row sums:
    /// `c_i = sgn(sum_{l != i} rho_il) * sqrt(|sum_{l != i} rho_il| / (n-1))`.
    /// Loadings that would reach magnitude 1 are clipped with a warning.
    pub fn fit(matrix: &CorrelationMatrix) -> Result<Self, Error> {
        let n = matrix.n();
        let mut warnings = Vec::new();
        let mut c = Vec::with_capacity(n);
        for i in 0..n {
            let row_sum: f64 = (0..n)
                .filter(|&l| l != i)
                .map(|l| matrix.entry(i, l))
                .sum();
            let mut ci = row_sum.signum() * (row_sum.abs() / (n as f64 - 1.0)).sqrt();
            if row_sum == 0.0 {
                ci = 0.0;
            }
            if ci.abs() >= 1.0 {
                warnings.push(format!(
                    "loading c[{i}] = {ci:.6} clipped to +/-{LOADING_CLIP}"
                ));
                ci = ci.signum() * LOADING_CLIP;
            }
            c.push(ci);
        }
        Self::build(c, warnings)
    }

    /// Fits a single shared loading:
    /// `c = sqrt(|sum_{i, l != i} rho_il| / (n (n-1)))`.
    pub fn fit_constant(matrix: &CorrelationMatrix) -> Result<Self, Error> {
        let n = matrix.n();
        let mut total = 0.0;
        for i in 0..n {
            for l in 0..n {
                if l != i {
                    total += matrix.entry(i, l);
                }
            }
        }
        let mut c = (total.abs() / (n as f64 * (n as f64 - 1.0))).sqrt();
        let mut warnings = Vec::new();
        if c >= 1.0 {
            warnings.push(format!("constant loading c = {c:.6} clipped to {LOADING_CLIP}"));
            c = LOADING_CLIP;
        }
        Self::build(vec![c; n], warnings)
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// The factored correlation matrix: unit diagonal, off-diagonals `c_i c_j`.
    pub fn rho_f(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = if i == j { 1.0 } else { self.c[i] * self.c[j] };
            }
        }
        m
    }

    /// Analytic inverse of `rho_f`:
    /// diagonal `(1/s_i^2)(1 - c_i^2/(s_i^2 Sigma^2))`,
    /// off-diagonal `-c_i c_j / (s_i^2 s_j^2 Sigma^2)`.
    pub fn rho_f_inverse(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let si2 = self.s[i] * self.s[i];
            for j in 0..n {
                if i == j {
                    m[(i, i)] = (1.0 - self.c[i] * self.c[i] / (si2 * self.sigma2)) / si2;
                } else {
                    let sj2 = self.s[j] * self.s[j];
                    m[(i, j)] = -self.c[i] * self.c[j] / (si2 * sj2 * self.sigma2);
                }
            }
        }
        m
    }
}

/// JSON shape for a stored model: loadings and derived scalars only; the
/// matrix and its inverse are recomputed on load.
#[derive(Serialize, Deserialize)]
struct StoredModel {
    c: Vec<f64>,
    s: Vec<f64>,
    sigma2: f64,
    det_rho_f: f64,
}

impl Serialize for OneFactorModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        StoredModel {
            c: self.c.clone(),
            s: self.s.clone(),
            sigma2: self.sigma2,
            det_rho_f: self.det_rho_f,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for OneFactorModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let stored = StoredModel::deserialize(deserializer)?;
        let model = OneFactorModel::from_loadings(&stored.c).map_err(serde::de::Error::custom)?;
        for (a, b) in model.s.iter().zip(&stored.s) {
            if (a - b).abs() > 1e-10 {
                return Err(serde::de::Error::custom(
                    "stored residual scales disagree with the loadings",
                ));
            }
        }
        Ok(model)
    }
}

/// Truncated principal-component reconstruction: keep the top `k`
/// eigencomponents and renormalize row weights `gamma_i` so the diagonal is
/// exactly one. A diagnostic candidate only; the expansion accepts one-factor
/// models exclusively.
pub fn pc_k_factor(matrix: &CorrelationMatrix, k: usize) -> Result<DMatrix<f64>, Error> {
    let n = matrix.n();
    if k < 1 || k > n {
        return Err(Error::InvalidConfig(format!(
            "component count k = {k} must lie in 1..={n}"
        )));
    }
    let evals = matrix.eigenvalues();
    let evecs = matrix.eigenvectors();
    let mut gamma = vec![0.0; n];
    for i in 0..n {
        let weight: f64 = (0..k)
            .map(|mu| evecs[(i, mu)] * evecs[(i, mu)] * evals[mu])
            .sum();
        if weight <= 0.0 {
            return Err(Error::ZeroDiagonalWeight { index: i });
        }
        gamma[i] = 1.0 / weight.sqrt();
    }
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let sum: f64 = (0..k)
                .map(|mu| evecs[(i, mu)] * evals[mu] * evecs[(j, mu)])
                .sum();
            out[(i, j)] = gamma[i] * gamma[j] * sum;
        }
    }
    Ok(out)
}
