//! Multivariate Gaussian and Student-t cumulative probabilities through a
//! quasi-analytic perturbation expansion about a one-factor correlation
//! base.
//!
//! The N-dimensional integral collapses to one-dimensional quadrature over a
//! common factor variable when the correlation matrix factors as
//! `rho_ij = c_i c_j` off the diagonal. For a general matrix the engine
//! expands around a fitted one-factor base in powers of the inverse-matrix
//! difference, evaluates the terms through second order from truncated
//! Gaussian moments, and accelerates the series with Padé approximants plus
//! a geometric extrapolation to infinite order. Student-t values wrap the
//! same machinery in an outer scale integral.
//!
//! Every evaluation path is backed by independent oracles (Monte Carlo,
//! small-dimension tensor quadrature, closed forms) that live in
//! [`oracle`] and never touch the expansion code.

pub mod correlation;
pub mod error;
pub mod expansion;
pub mod io;
pub mod one_factor;
pub mod oracle;
pub mod pade;
pub mod quadrature;
pub mod special;
pub mod student_t;

pub use correlation::{internal_variance, ConvergenceMetrics, CorrelationMatrix};
pub use error::{Error, PadeError};
pub use expansion::{
    correlation_sensitivity, expand, expand_setup, ExpansionOptions, ExpansionResult,
    PerturbationSetup, QuadratureConfig, QuadratureRule, SensitivityResult,
};
pub use one_factor::OneFactorModel;
pub use oracle::{OracleEstimate, OracleMethod};
pub use pade::PadePolicy;
pub use student_t::{gaussian_limit_check, student_t_expand, StudentTRequest};
