//! Padé acceleration of the truncated expansion and the geometric-decay
//! extrapolation of the Padé sequence to infinite order.

use serde::{Deserialize, Serialize};

use crate::error::PadeError;

/// Relative threshold below which terms count as vanished.
const TINY: f64 = 1e-14;

/// How to combine the two second-order approximants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadePolicy {
    Max,
    #[default]
    Average,
}

/// Zeroth approximant: the plain leading term.
pub fn pade_0(i0: f64) -> f64 {
    i0
}

/// First approximant, `[0/1]` type: `i0^2 / (i0 - i1)`.
pub fn pade_1(i0: f64, i1: f64) -> Result<f64, PadeError> {
    if i0 == 0.0 || (i0 - i1).abs() < TINY * i0.abs() {
        return Err(PadeError::Pole);
    }
    Ok(i0 * i0 / (i0 - i1))
}

/// Second-order approximant of `[1/1]` type:
/// `(i0 i1 + i1^2 - i0 i2) / (i1 - i2)`.
///
/// A series that has already converged (both corrections negligible against
/// the leading term) short-circuits to the partial sum, which is the smooth
/// limit of the formula.
pub fn pade_2_11(i0: f64, i1: f64, i2: f64) -> Result<f64, PadeError> {
    if i1.abs() <= TINY * i0.abs() && i2.abs() <= TINY * i0.abs() {
        return Ok(i0 + i1 + i2);
    }
    if (i1 - i2).abs() < TINY * i1.abs().max(i2.abs()) || i1.abs() < TINY * i0.abs() {
        return Err(PadeError::Pole);
    }
    Ok((i0 * i1 + i1 * i1 - i0 * i2) / (i1 - i2))
}

/// Second-order approximant of `[0/2]` type:
/// `i0 / (1 - i1/i0 - i2/i0 + (i1/i0)^2)`.
///
/// The denominator uses `i2/i0`: that is the unique `[0/2]` rational whose
/// expansion matches the partial sums through second order and that resums a
/// geometric series to `i0/(1 - r)`; both facts are pinned by tests.
pub fn pade_2_02(i0: f64, i1: f64, i2: f64) -> Result<f64, PadeError> {
    if i0 == 0.0 {
        return Err(PadeError::Pole);
    }
    if i1.abs() <= TINY * i0.abs() && i2.abs() <= TINY * i0.abs() {
        return Ok(i0 + i1 + i2);
    }
    let r1 = i1 / i0;
    let denom = 1.0 - r1 - i2 / i0 + r1 * r1;
    if denom.abs() < TINY {
        return Err(PadeError::Pole);
    }
    Ok(i0 / denom)
}

/// Combines the two second-order approximants per policy.
pub fn second_order_choice(p11: f64, p02: f64, policy: PadePolicy) -> f64 {
    match policy {
        PadePolicy::Max => p11.max(p02),
        PadePolicy::Average => 0.5 * (p11 + p02),
    }
}

/// Result of the infinite-order extrapolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrapolation {
    pub i_infinity: f64,
    /// Per-order decay factor `e^(-alpha)` in `[0, 1)`; zero means the
    /// sequence had already converged.
    pub decay: f64,
    pub oscillating: bool,
}

impl Extrapolation {
    /// Decay-rate parameter `alpha = -ln(decay)`; infinite for a converged
    /// sequence.
    pub fn alpha(&self) -> f64 {
        -self.decay.ln()
    }
}

/// Fits `p_beta = (p0 - I_inf) e^(-alpha beta) g(beta) + I_inf` to the three
/// Padé values, with `g = 1` for a monotone sequence and `g(beta) =
/// cos(pi beta)` for an alternating one. Oscillation is detected from the
/// consecutive-difference signs unless overridden; ties count as monotone.
///
/// With `s = g(1)` the two conditions collapse to a single ratio
/// `q = s (p2 - p1)/(p1 - p0)` which must land in `(0, 1)` for a valid decay.
pub fn extrapolate_infinity(
    p0: f64,
    p1: f64,
    p2: f64,
    oscillating: Option<bool>,
) -> Result<Extrapolation, PadeError> {
    let scale = p0.abs().max(p1.abs()).max(p2.abs()).max(f64::MIN_POSITIVE);
    let d1 = p1 - p0;
    let d2 = p2 - p1;
    if d1.abs() <= TINY * scale && d2.abs() <= TINY * scale {
        return Ok(Extrapolation {
            i_infinity: p2,
            decay: 0.0,
            oscillating: false,
        });
    }
    let osc = oscillating.unwrap_or(d1 * d2 < 0.0);
    if d2.abs() <= TINY * scale {
        // Converged between the first and second approximant.
        return Ok(Extrapolation {
            i_infinity: p2,
            decay: 0.0,
            oscillating: osc,
        });
    }
    if d1.abs() <= TINY * scale {
        return Err(PadeError::NoValidAlpha);
    }
    let sign = if osc { -1.0 } else { 1.0 };
    let q = sign * d2 / d1;
    if !(q > 0.0 && q < 1.0) {
        return Err(PadeError::NoValidAlpha);
    }
    let i_infinity = (p1 - sign * q * p0) / (1.0 - sign * q);
    Ok(Extrapolation {
        i_infinity,
        decay: q,
        oscillating: osc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pade_1_basics() {
        assert_eq!(pade_1(1.0, 0.0).unwrap(), 1.0);
        assert!((pade_1(1.0, 0.1).unwrap() - 1.0 / 0.9).abs() < 1e-15);
        assert!(pade_1(1.0, 1.0).is_err());
        assert!(pade_1(0.0, 0.3).is_err());
    }

    #[test]
    fn pade_1_series_matches_through_first_order() {
        // Expansion of i0/(1 - i1/i0) is i0 + i1 + i1^2/i0 + ...
        let (i0, i1) = (0.7, 1e-3);
        let p = pade_1(i0, i1).unwrap();
        let expect = i0 + i1 + i1 * i1 / i0;
        // Next omitted term is i1^3 / i0^2 ~ 2e-9.
        assert!((p - expect).abs() < 1e-8);
    }

    #[test]
    fn pade_2_11_cases() {
        // Vanishing second order reduces to the first partial sum.
        assert!((pade_2_11(1.0, 0.1, 0.0).unwrap() - 1.1).abs() < 1e-15);
        // Geometric series resums exactly.
        let p = pade_2_11(1.0, 0.3, 0.09).unwrap();
        assert!((p - 1.0 / 0.7).abs() < 1e-14);
        // Direct substitution.
        let p = pade_2_11(1.0, 0.1, 0.02).unwrap();
        assert!((p - 1.125).abs() < 1e-15);
        // Defective: equal corrections.
        assert!(pade_2_11(1.0, 0.1, 0.1).is_err());
        // Converged series short-circuits instead of reporting a pole.
        let p = pade_2_11(0.25, 1e-17, 3e-17).unwrap();
        assert!((p - 0.25).abs() < 1e-15);
    }

    #[test]
    fn pade_2_02_geometric_collapses_to_single_pole() {
        // i2 = i1^2/i0 makes the denominator collapse to 1 - i1/i0.
        let (i0, i1) = (2.0, 0.5);
        let i2 = i1 * i1 / i0;
        let p = pade_2_02(i0, i1, i2).unwrap();
        assert!((p - i0 / (1.0 - i1 / i0)).abs() < 1e-14);
    }

    #[test]
    fn pade_2_02_direct_substitution() {
        let p = pade_2_02(1.0, 0.1, 0.02).unwrap();
        let denom = 1.0 - 0.1 - 0.02 + 0.01;
        assert!((p - 1.0 / denom).abs() < 1e-15);
    }

    #[test]
    fn pade_2_02_degenerate_first_order() {
        assert_eq!(pade_2_02(0.5, 0.0, 0.0).unwrap(), 0.5);
        // i1 = 0 with a genuine i2 stays finite: the bracket never divides
        // by i1.
        let p = pade_2_02(1.0, 0.0, 0.05).unwrap();
        assert!((p - 1.0 / 0.95).abs() < 1e-15);
    }

    #[test]
    fn series_matching_through_second_order() {
        // With i_k = a r^k the approximants must match the partial sum
        // through order r^2, i.e. differ by O(r^3).
        let (a, r) = (0.8f64, 1e-3f64);
        let (i0, i1, i2) = (a, a * r, a * r * r);
        let partial2 = i0 + i1 + i2;
        let tol = r.powi(3) * 10.0;
        assert!((pade_1(i0, i1).unwrap() - (i0 + i1)).abs() < r * r * 10.0);
        assert!((pade_2_11(i0, i1, i2).unwrap() - partial2).abs() < tol);
        assert!((pade_2_02(i0, i1, i2).unwrap() - partial2).abs() < tol);
    }

    #[test]
    fn second_order_choice_policies() {
        assert_eq!(second_order_choice(1.125, 1.40845, PadePolicy::Max), 1.40845);
        let avg = second_order_choice(1.125, 1.40845, PadePolicy::Average);
        assert!((avg - 1.266725).abs() < 1e-12);
        assert_eq!(second_order_choice(0.5, 0.5, PadePolicy::Max), 0.5);
        assert_eq!(second_order_choice(0.5, 0.5, PadePolicy::Average), 0.5);
    }

    #[test]
    fn extrapolation_recovers_constructed_sequences() {
        // Non-oscillating: p_b = 1 + 0.1 * 0.5^b.
        let e = extrapolate_infinity(1.1, 1.05, 1.025, None).unwrap();
        assert!((e.i_infinity - 1.0).abs() < 1e-12);
        assert!((e.decay - 0.5).abs() < 1e-12);
        assert!(!e.oscillating);

        // Oscillating: p_b = 1 + 0.1 * (-0.5)^b.
        let e = extrapolate_infinity(1.1, 0.95, 1.025, None).unwrap();
        assert!((e.i_infinity - 1.0).abs() < 1e-12);
        assert!((e.decay - 0.5).abs() < 1e-12);
        assert!(e.oscillating);
    }

    #[test]
    fn extrapolation_converged_sequence() {
        let e = extrapolate_infinity(0.25, 0.25, 0.25, None).unwrap();
        assert_eq!(e.i_infinity, 0.25);
        assert_eq!(e.decay, 0.0);
        assert!(e.alpha().is_infinite());
    }

    #[test]
    fn extrapolation_rejects_growing_sequences() {
        // Differences growing in magnitude leave no decay in (0, 1).
        assert_eq!(
            extrapolate_infinity(1.0, 1.1, 1.3, None),
            Err(PadeError::NoValidAlpha)
        );
    }
}
