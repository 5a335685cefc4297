//! Scalar building blocks: normal density/CDF and the truncated-moment
//! vectors evaluated on a slice of the factor variable.
//!
//! For a single coordinate `x = c*z + s*xi` with `xi` standard normal and a
//! cap `x <= x_max`, the slice holds the truncated moments
//! `w_k = E[x^k, xi <= xi_max]` for `k = 0..=4` at fixed factor value `z`,
//! where `xi_max = (x_max - c*z)/s`. These are the only ingredients the
//! expansion integrands need at every quadrature node.

use crate::one_factor::OneFactorModel;

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Threshold beyond which the normal tail is flushed to its limit. Keeps
/// downstream products away from `0 * inf` while everything representable
/// stays exact.
pub const TAIL_CUTOFF: f64 = 38.0;

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal CDF via the complementary error function,
/// `Phi(x) = erfc(-x / sqrt(2)) / 2`. Backed by the FDLIBM `erfc`, which is
/// correct to within an ulp over the whole range.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Truncated standard-normal moments `m_k = E[xi^k, xi <= upper]`, `k = 0..=4`.
///
/// Uses the recursion `m_k = -upper^(k-1) phi(upper) + (k-1) m_(k-2)` seeded
/// by `m_0 = Phi(upper)`, `m_1 = -phi(upper)`.
pub fn truncated_moments(upper: f64) -> [f64; 5] {
    if upper < -TAIL_CUTOFF {
        return [0.0; 5];
    }
    if upper > TAIL_CUTOFF {
        return [1.0, 0.0, 1.0, 0.0, 3.0];
    }
    let cdf = normal_cdf(upper);
    let pdf = normal_pdf(upper);
    [
        cdf,
        -pdf,
        cdf - upper * pdf,
        -(upper * upper + 2.0) * pdf,
        3.0 * cdf - (upper * upper * upper + 3.0 * upper) * pdf,
    ]
}

/// Per-coordinate truncated moments of `x_i = c_i*zeta + s_i*xi_i` at a fixed
/// factor value `zeta`.
#[derive(Debug, Clone)]
pub struct FactorSlice {
    pub zeta: f64,
    /// Scaled upper limits `(x_i^max - c_i*zeta)/s_i`.
    pub xi_max: Vec<f64>,
    /// `v_i = Phi(xi_max_i)`, the zeroth moment.
    pub v: Vec<f64>,
    /// `chi_i = -phi(xi_max_i)`.
    pub chi: Vec<f64>,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub w3: Vec<f64>,
    pub w4: Vec<f64>,
}

impl FactorSlice {
    /// Evaluates the slice. Entries of `x_max` may be `+inf` (coordinate
    /// drops to its unconditional moments) or `-inf` (all moments vanish).
    pub fn build(zeta: f64, model: &OneFactorModel, x_max: &[f64]) -> Self {
        let n = model.len();
        debug_assert_eq!(x_max.len(), n);
        let mut slice = FactorSlice {
            zeta,
            xi_max: vec![0.0; n],
            v: vec![0.0; n],
            chi: vec![0.0; n],
            w1: vec![0.0; n],
            w2: vec![0.0; n],
            w3: vec![0.0; n],
            w4: vec![0.0; n],
        };
        for i in 0..n {
            let c = model.c[i];
            let s = model.s[i];
            let xi_max = if x_max[i].is_infinite() {
                x_max[i]
            } else {
                (x_max[i] - c * zeta) / s
            };
            let m = truncated_moments(xi_max);
            slice.xi_max[i] = xi_max;
            slice.chi[i] = if xi_max.is_finite() {
                -normal_pdf(xi_max)
            } else {
                0.0
            };
            // Binomial combination: w_k = sum_r C(k,r) (c z)^(k-r) s^r m_r.
            let a = c * zeta;
            let b = s;
            slice.v[i] = m[0];
            slice.w1[i] = a * m[0] + b * m[1];
            slice.w2[i] = a * a * m[0] + 2.0 * a * b * m[1] + b * b * m[2];
            slice.w3[i] = a * a * a * m[0]
                + 3.0 * a * a * b * m[1]
                + 3.0 * a * b * b * m[2]
                + b * b * b * m[3];
            slice.w4[i] = a * a * a * a * m[0]
                + 4.0 * a * a * a * b * m[1]
                + 6.0 * a * a * b * b * m[2]
                + 4.0 * a * b * b * b * m[3]
                + b * b * b * b * m[4];
        }
        slice
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    /// Truncated moment of order `k` (0..=4) for coordinate `i`.
    #[inline]
    pub fn moment(&self, k: usize, i: usize) -> f64 {
        match k {
            0 => self.v[i],
            1 => self.w1[i],
            2 => self.w2[i],
            3 => self.w3[i],
            4 => self.w4[i],
            _ => unreachable!("second-order expansion needs moments up to k = 4"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::one_factor::OneFactorModel;

    #[test]
    fn normal_cdf_at_zero_is_half() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn normal_cdf_tail_bound() {
        assert!(normal_cdf(8.0) > 1.0 - 1e-14);
        assert!(normal_cdf(-8.0) < 1e-14);
    }

    #[test]
    fn normal_cdf_at_one_matches_reference() {
        // High-precision quadrature of the density gives
        // Phi(1) = 0.8413447460685429...
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
    }

    #[test]
    fn erf_identity_agreement() {
        for i in -60..=60 {
            let x = i as f64 * 0.1;
            let via_erf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
            assert!(
                (normal_cdf(x) - via_erf).abs() < 1e-12,
                "x = {x}: {} vs {}",
                normal_cdf(x),
                via_erf
            );
        }
    }

    #[test]
    fn monotone_nondecreasing_on_a_fine_grid() {
        let mut prev = 0.0;
        let mut x = -12.0;
        while x <= 12.0 {
            let v = normal_cdf(x);
            assert!(v >= prev, "dip at x = {x}");
            prev = v;
            x += 1.0 / 512.0;
        }
    }

    #[test]
    fn moments_at_zero_upper() {
        let m = truncated_moments(0.0);
        let phi0 = 1.0 / SQRT_2PI;
        assert!((m[0] - 0.5).abs() < 1e-15);
        assert!((m[1] + phi0).abs() < 1e-15);
        assert!((m[2] - 0.5).abs() < 1e-15);
        assert!((m[3] + 2.0 * phi0).abs() < 1e-15);
        assert!((m[4] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn slice_with_zero_loading_matches_plain_moments() {
        // c = 0, s = 1, x_max = 0: the slice reduces to the raw truncated
        // moments regardless of zeta.
        let model = OneFactorModel::from_loadings(&[0.0, 0.0]).unwrap();
        let slice = FactorSlice::build(1.7, &model, &[0.0, 0.0]);
        let phi0 = 1.0 / SQRT_2PI;
        assert!((slice.v[0] - 0.5).abs() < 1e-15);
        assert!((slice.w1[0] + phi0).abs() < 1e-15);
        assert!((slice.w2[0] - 0.5).abs() < 1e-15);
        assert!((slice.w3[0] + 2.0 * phi0).abs() < 1e-15);
        assert!((slice.w4[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn slice_with_infinite_limit_takes_unconditional_moments() {
        let model = OneFactorModel::from_loadings(&[0.5]).unwrap();
        let zeta = 2.0;
        let slice = FactorSlice::build(zeta, &model, &[f64::INFINITY]);
        let s2 = 0.75;
        assert!((slice.v[0] - 1.0).abs() < 1e-15);
        assert!((slice.w1[0] - 1.0).abs() < 1e-15, "w1 = {}", slice.w1[0]);
        assert!((slice.w2[0] - (1.0 + s2)).abs() < 1e-15);
    }

    #[test]
    fn slice_with_minus_infinity_vanishes() {
        let model = OneFactorModel::from_loadings(&[0.3, 0.4]).unwrap();
        let slice = FactorSlice::build(-0.4, &model, &[f64::NEG_INFINITY, 1.0]);
        assert_eq!(slice.v[0], 0.0);
        assert_eq!(slice.w1[0], 0.0);
        assert_eq!(slice.w4[0], 0.0);
        assert!(slice.v[1] > 0.0);
    }

    #[test]
    fn cauchy_schwarz_on_truncated_measure() {
        let model = OneFactorModel::from_loadings(&[0.6, -0.2, 0.45]).unwrap();
        for iz in -8..=8 {
            let slice = FactorSlice::build(iz as f64 * 0.5, &model, &[0.3, -0.7, 1.4]);
            for i in 0..3 {
                if slice.v[i] > 0.0 {
                    assert!(slice.w2[i] >= slice.w1[i] * slice.w1[i] / slice.v[i] - 1e-12);
                }
            }
        }
    }
}

