//! Validated correlation matrices with cached spectrum, inverse and
//! determinant, plus the convergence metrics and eigenvalue-cutoff
//! regularization used to judge and repair expansion inputs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::special::{normal_cdf, normal_pdf};

/// Asymmetry above this is silently symmetrized.
const SYMMETRY_WARN: f64 = 1e-12;
/// Asymmetry above this is rejected.
const SYMMETRY_REJECT: f64 = 1e-8;
/// Tolerance on the unit diagonal at construction.
const DIAGONAL_TOL: f64 = 1e-12;

/// A symmetric positive-definite correlation matrix with unit diagonal.
///
/// The spectrum, inverse and determinant are computed once at construction
/// and reused by every consumer. Immutable afterwards, so shared references
/// are safe across worker threads.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    entries: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    inverse: DMatrix<f64>,
    determinant: f64,
    warnings: Vec<String>,
}

impl CorrelationMatrix {
    /// Validates `entries` and caches its spectral data.
    ///
    /// Mild asymmetry (up to 1e-8) is repaired by averaging with the
    /// transpose; a warning is recorded when the defect exceeds 1e-12.
    pub fn new(entries: DMatrix<f64>) -> Result<Self, Error> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: entries.ncols(),
            });
        }
        if n < 2 {
            return Err(Error::DimensionTooSmall { n, min: 2 });
        }

        let mut max_asym: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                max_asym = max_asym.max((entries[(i, j)] - entries[(j, i)]).abs());
            }
        }
        if max_asym > SYMMETRY_REJECT {
            return Err(Error::NotSymmetric {
                max_asymmetry: max_asym,
            });
        }
        let mut warnings = Vec::new();
        if max_asym > SYMMETRY_WARN {
            warnings.push(format!(
                "input asymmetry {max_asym:.3e} symmetrized by averaging"
            ));
        }
        let mut m = entries;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            }
        }

        for i in 0..n {
            if (m[(i, i)] - 1.0).abs() > DIAGONAL_TOL {
                return Err(Error::NotUnitDiagonal {
                    index: i,
                    value: m[(i, i)],
                });
            }
            m[(i, i)] = 1.0;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if m[(i, j)].abs() >= 1.0 {
                    return Err(Error::OffDiagonalOutOfRange {
                        i,
                        j,
                        value: m[(i, j)],
                    });
                }
            }
        }

        let eig = m.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (col, &k) in order.iter().enumerate() {
            eigenvectors.set_column(col, &eig.eigenvectors.column(k));
        }

        let lambda_min = eigenvalues[n - 1];
        if lambda_min <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: lambda_min,
            });
        }
        let trace_drift = (eigenvalues.iter().sum::<f64>() - n as f64).abs();
        if trace_drift > 1e-10 * n as f64 {
            return Err(Error::InvalidConfig(format!(
                "eigenvalue trace drifted by {trace_drift:.3e} from n = {n}"
            )));
        }

        let inv_diag = DVector::from_iterator(n, eigenvalues.iter().map(|&l| 1.0 / l));
        let inverse = &eigenvectors * DMatrix::from_diagonal(&inv_diag) * eigenvectors.transpose();
        let determinant = eigenvalues.iter().product();

        let residual = (&m * &inverse - DMatrix::<f64>::identity(n, n)).abs().max();
        if residual > 1e-8 {
            return Err(Error::InvalidConfig(format!(
                "inverse residual {residual:.3e} exceeds 1e-8; matrix too ill-conditioned"
            )));
        }

        Ok(CorrelationMatrix {
            entries: m,
            eigenvalues,
            eigenvectors,
            inverse,
            determinant,
            warnings,
        })
    }

    /// Parses a row-major flat slice.
    pub fn from_rows(n: usize, data: &[f64]) -> Result<Self, Error> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        Ok(Self::new(DMatrix::from_row_slice(n, n, data))?)
    }

    /// The identity matrix in `n` dimensions.
    pub fn identity(n: usize) -> Result<Self, Error> {
        Self::new(DMatrix::identity(n, n))
    }

    /// Equicorrelated matrix with every off-diagonal equal to `r`.
    pub fn equicorrelated(n: usize, r: f64) -> Result<Self, Error> {
        let mut m = DMatrix::from_element(n, n, r);
        m.fill_diagonal(1.0);
        Self::new(m)
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors as columns, matching `eigenvalues()`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn determinant(&self) -> f64 {
        self.determinant
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.n() - 1]
    }

    /// Warnings recorded during construction (asymmetry repair).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Distance from the singular set: the harmonic sum of eigenvalues,
    /// `R(N) = 1 / sum(1/lambda)`. Maximal value `1/N`, reached exactly when
    /// every eigenvalue is one.
    pub fn distance_from_singular(&self) -> f64 {
        1.0 / self.eigenvalues.iter().map(|&l| 1.0 / l).sum::<f64>()
    }

    /// Raises every eigenvalue below `cutoff` to the cutoff, rebuilds the
    /// matrix from the modified spectrum and rescales its diagonal back to
    /// one. Iterates to a fixed point because the rescaling perturbs the
    /// spectrum slightly; a matrix whose spectrum already clears the cutoff
    /// is returned unchanged, which makes the operation idempotent.
    pub fn regularize(&self, cutoff: f64) -> Result<Self, Error> {
        if !(cutoff > 0.0 && cutoff < 1.0) {
            return Err(Error::CutoffTooLarge {
                cutoff,
                reason: "cutoff must lie in (0, 1)".to_string(),
            });
        }
        let accept = cutoff * (1.0 - 1e-10);
        if self.min_eigenvalue() >= accept {
            return Ok(self.clone());
        }

        let n = self.n();
        let mut current = self.clone();
        for _ in 0..200 {
            let raised = DVector::from_iterator(
                n,
                current.eigenvalues.iter().map(|&l| l.max(cutoff)),
            );
            let mut rebuilt = &current.eigenvectors
                * DMatrix::from_diagonal(&raised)
                * current.eigenvectors.transpose();
            // Restore the unit diagonal: D^(-1/2) M D^(-1/2).
            let scale: Vec<f64> = (0..n).map(|i| rebuilt[(i, i)].sqrt()).collect();
            for i in 0..n {
                for j in 0..n {
                    rebuilt[(i, j)] /= scale[i] * scale[j];
                }
            }
            current = Self::new(rebuilt).map_err(|e| Error::CutoffTooLarge {
                cutoff,
                reason: e.to_string(),
            })?;
            if current.min_eigenvalue() >= accept {
                return Ok(current);
            }
        }
        Err(Error::CutoffTooLarge {
            cutoff,
            reason: "diagonal rescaling kept pushing the spectrum below the cutoff".to_string(),
        })
    }
}

/// Convergence diagnostics for an expansion input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceMetrics {
    /// Internal variance of the off-diagonals of the correlation matrix
    /// (`None` for n = 2, where the estimator's denominator vanishes).
    pub sigma2_rho_int: Option<f64>,
    /// Internal variance of the off-diagonals of the perturbation matrix.
    pub sigma2_eps_int: Option<f64>,
    /// Distance from singular, in (0, 1/n].
    pub r_of_n: f64,
    pub lambda_min: f64,
    /// Location of the factor-space integrand bump (`None` when the root
    /// search failed to bracket).
    pub zeta_star: Option<f64>,
    /// Rough dominant expansion order.
    pub beta_star: f64,
    /// Rough most-important dimension at second order (`None` when it is
    /// undefined or non-finite).
    pub n_star: Option<f64>,
}

/// Sample variance of the strict upper-triangle entries with the estimator
/// denominator `N(N-1)/2 - 1`. Zero exactly when all off-diagonals agree.
pub fn internal_variance(matrix: &DMatrix<f64>) -> Result<f64, Error> {
    let n = matrix.nrows();
    if n < 3 {
        return Err(Error::DimensionTooSmall { n, min: 3 });
    }
    let count = n * (n - 1) / 2;
    let mut mean = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            mean += matrix[(i, j)];
        }
    }
    mean /= count as f64;
    let mut ss = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = matrix[(i, j)] - mean;
            ss += d * d;
        }
    }
    Ok(ss / (count as f64 - 1.0))
}

/// Hazard `phi(u) / Phi(u)`, with the asymptotic `-u + 1/u` form in the deep
/// left tail where both factors underflow.
fn normal_hazard(u: f64) -> f64 {
    if u < -37.0 {
        -u - 1.0 / u
    } else {
        normal_pdf(u) / normal_cdf(u)
    }
}

/// Solves for the bump location of the order-zero integrand, i.e. the root of
/// `zeta + (n c / s) * phi(xi) / Phi(xi)` with `xi = (x_max - c zeta)/s`.
/// Bisection on `[-20, 20]`.
pub fn zeta_star(c_avg: f64, s_avg: f64, x_avg_max: f64, n: usize) -> Result<f64, Error> {
    if c_avg == 0.0 {
        return Ok(0.0);
    }
    let f = |zeta: f64| {
        let xi = (x_avg_max - c_avg * zeta) / s_avg;
        zeta + (n as f64) * c_avg / s_avg * normal_hazard(xi)
    };
    let (lo, hi) = (-20.0, 20.0);
    // Scan for a sign change, then bisect.
    let scan = 400;
    let mut a = lo;
    let mut fa = f(a);
    let mut bracket = None;
    for k in 1..=scan {
        let b = lo + (hi - lo) * k as f64 / scan as f64;
        let fb = f(b);
        if fa == 0.0 {
            return Ok(a);
        }
        if fa * fb < 0.0 {
            bracket = Some((a, fa, b));
            break;
        }
        a = b;
        fa = fb;
    }
    let (mut a, mut fa, mut b) = bracket.ok_or(Error::RootNotBracketed { lo, hi })?;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || (b - a) < 1e-13 {
            return Ok(m);
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    Ok(0.5 * (a + b))
}

/// Heuristic estimates derived from setup-level averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicEstimates {
    pub zeta_star: Option<f64>,
    pub beta_star: f64,
    pub n_star: Option<f64>,
}

/// Bundles the bump location, the dominant-order estimate
/// `beta* = n^2 eps_avg / 2` and the most-important-dimension estimate
/// `n* = 2 beta / ln(1/Phi_avg)` evaluated at the truncation order beta = 2.
/// Diagnostics only; a failed root bracket degrades to `None` rather than
/// failing the run.
pub fn heuristic_estimates(
    c_avg: f64,
    s_avg: f64,
    x_avg_max: f64,
    eps_avg: f64,
    n: usize,
) -> HeuristicEstimates {
    let zs = zeta_star(c_avg, s_avg, x_avg_max, n).ok();
    let beta_star = 0.5 * (n as f64) * (n as f64) * eps_avg;
    let n_star = zs.and_then(|z| {
        let phi_avg = normal_cdf((x_avg_max - c_avg * z) / s_avg);
        let denom = (1.0 / phi_avg).ln();
        let v = 2.0 * 2.0 / denom;
        v.is_finite().then_some(v)
    });
    HeuristicEstimates {
        zeta_star: zs,
        beta_star,
        n_star,
    }
}
