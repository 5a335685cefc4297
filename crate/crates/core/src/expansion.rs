//! The expansion engine: assembles the perturbation matrix, evaluates the
//! zeroth-, first- and second-order terms by one-dimensional quadrature over
//! factor slices, and applies Padé acceleration plus the infinite-order
//! extrapolation.
//!
//! Two evaluation paths coexist at every order. The factored path reduces
//! the index sums to vector aggregates (a few matrix-vector products per
//! node); the naive path loops over raw index tuples and serves as the
//! permanent in-repo reference. They agree to near machine precision and the
//! test suites hold them to that.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::{
    heuristic_estimates, internal_variance, ConvergenceMetrics, CorrelationMatrix,
};
use crate::error::Error;
use crate::one_factor::OneFactorModel;
use crate::pade::{self, PadePolicy};
use crate::quadrature::{pairwise_sum, Grid};
use crate::special::{normal_pdf, FactorSlice, TAIL_CUTOFF};

/// Quadrature rule choices for the factor-variable integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    #[default]
    GaussLegendreComposite,
    Trapezoid,
}

/// Configuration of the factor-variable grid on `[-lambda, lambda]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Half-width of the integration window.
    pub lambda: f64,
    /// Total node count across all panels.
    pub nodes: usize,
    pub rule: QuadratureRule,
    pub panels: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            lambda: 10.0,
            nodes: 256,
            rule: QuadratureRule::GaussLegendreComposite,
            panels: 8,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.nodes < 16 {
            return Err(Error::InvalidConfig(format!(
                "need at least 16 quadrature nodes, got {}",
                self.nodes
            )));
        }
        if self.lambda < 6.0 {
            return Err(Error::InvalidConfig(format!(
                "integration half-width {} is below the minimum 6",
                self.lambda
            )));
        }
        if self.panels == 0 {
            return Err(Error::InvalidConfig("panel count must be positive".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        self.grid_with_nodes(self.nodes)
    }

    fn grid_with_nodes(&self, nodes: usize) -> Grid {
        match self.rule {
            QuadratureRule::GaussLegendreComposite => {
                Grid::composite_gauss_legendre(-self.lambda, self.lambda, nodes, self.panels)
            }
            QuadratureRule::Trapezoid => Grid::trapezoid(-self.lambda, self.lambda, nodes),
        }
    }
}

/// Evaluation options for [`expand`].
#[derive(Debug, Clone, Copy)]
pub struct ExpansionOptions {
    /// Highest order to evaluate (0, 1 or 2).
    pub max_order: u8,
    pub pade_policy: PadePolicy,
    /// Route every node through the naive reference path.
    pub force_naive: bool,
    /// Re-run on a doubled grid and warn when the result moves.
    pub check_convergence: bool,
    /// Distribute quadrature nodes across the rayon pool. Results are
    /// bit-identical either way; reductions run in fixed node order.
    pub parallel: bool,
}

impl Default for ExpansionOptions {
    fn default() -> Self {
        ExpansionOptions {
            max_order: 2,
            pade_policy: PadePolicy::default(),
            force_naive: false,
            check_convergence: true,
            parallel: true,
        }
    }
}

/// Precomputed views of the perturbation matrix used at every node.
#[derive(Debug, Clone)]
pub(crate) struct EpsilonOps {
    pub full: DMatrix<f64>,
    pub diag: DVector<f64>,
    /// Off-diagonal part (diagonal zeroed).
    pub off: DMatrix<f64>,
    /// Elementwise square of `off`.
    pub off_sq: DMatrix<f64>,
}

impl EpsilonOps {
    fn new(eps: DMatrix<f64>) -> Self {
        let n = eps.nrows();
        let diag = DVector::from_iterator(n, (0..n).map(|i| eps[(i, i)]));
        let mut off = eps.clone();
        off.fill_diagonal(0.0);
        let off_sq = off.map(|x| x * x);
        EpsilonOps {
            full: eps,
            diag,
            off,
            off_sq,
        }
    }
}

/// A prepared expansion problem: validated matrix, one-factor base,
/// perturbation matrix and normalization.
#[derive(Debug, Clone)]
pub struct PerturbationSetup {
    pub rho: CorrelationMatrix,
    pub model: OneFactorModel,
    pub x_max: Vec<f64>,
    pub quad: QuadratureConfig,
    pub j_norm: f64,
    pub(crate) eps: EpsilonOps,
    warnings: Vec<String>,
}

impl PerturbationSetup {
    /// Fits the one-factor base from `rho` and assembles the setup.
    pub fn new(
        rho: CorrelationMatrix,
        x_max: Vec<f64>,
        quad: QuadratureConfig,
    ) -> Result<Self, Error> {
        let model = OneFactorModel::fit(&rho)?;
        Self::with_model(rho, model, x_max, quad)
    }

    /// Assembles the setup around an explicitly chosen base model.
    pub fn with_model(
        rho: CorrelationMatrix,
        model: OneFactorModel,
        x_max: Vec<f64>,
        quad: QuadratureConfig,
    ) -> Result<Self, Error> {
        let n = rho.n();
        if model.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: model.len(),
            });
        }
        if x_max.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x_max.len(),
            });
        }
        if x_max.iter().any(|x| x.is_nan()) {
            return Err(Error::InvalidConfig("upper limits contain NaN".into()));
        }
        quad.validate()?;

        let eps = rho.inverse() - model.rho_f_inverse();
        debug_assert!(
            (&eps - eps.transpose()).abs().max() < 1e-10,
            "perturbation matrix lost symmetry"
        );
        let j_norm = (model.det_rho_f / rho.determinant()).sqrt();
        let mut warnings: Vec<String> = Vec::new();
        warnings.extend(rho.warnings().iter().cloned());
        warnings.extend(model.warnings().iter().cloned());

        Ok(PerturbationSetup {
            rho,
            model,
            x_max,
            quad,
            j_norm,
            eps: EpsilonOps::new(eps),
            warnings,
        })
    }

    pub fn n(&self) -> usize {
        self.rho.n()
    }

    pub fn epsilon(&self) -> &DMatrix<f64> {
        &self.eps.full
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Convergence diagnostics for this setup.
    pub fn metrics(&self) -> ConvergenceMetrics {
        let n = self.n();
        let c_avg = self.model.c.iter().sum::<f64>() / n as f64;
        let s_avg = (1.0 - c_avg * c_avg).sqrt();
        let x_avg = self
            .x_max
            .iter()
            .map(|&x| x.clamp(-TAIL_CUTOFF, TAIL_CUTOFF))
            .sum::<f64>()
            / n as f64;
        let eps_avg =
            self.eps.full.iter().map(|e| e.abs()).sum::<f64>() / (n * n) as f64;
        let h = heuristic_estimates(c_avg, s_avg, x_avg, eps_avg, n);
        ConvergenceMetrics {
            sigma2_rho_int: internal_variance(self.rho.entries()).ok(),
            sigma2_eps_int: internal_variance(&self.eps.full).ok(),
            r_of_n: self.rho.distance_from_singular(),
            lambda_min: self.rho.min_eigenvalue(),
            zeta_star: h.zeta_star,
            beta_star: h.beta_star,
            n_star: h.n_star,
        }
    }
}

/// Per-order term values and everything derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionResult {
    pub i0: f64,
    pub i1: Option<f64>,
    pub i2: Option<f64>,
    pub partial0: f64,
    pub partial1: Option<f64>,
    pub partial2: Option<f64>,
    pub pade1: Option<f64>,
    pub pade2_11: Option<f64>,
    pub pade2_02: Option<f64>,
    /// The second-order approximant selected by the configured policy.
    pub pade2_selected: Option<f64>,
    /// Extrapolated infinite-order value; the suggested headline.
    pub i_infinity: Option<f64>,
    /// Per-order decay factor `e^(-alpha)` of the extrapolation fit
    /// (zero when the Padé sequence had converged).
    pub extrapolation_decay: Option<f64>,
    pub oscillating: Option<bool>,
    pub metrics: ConvergenceMetrics,
    pub node_count: usize,
    pub warnings: Vec<String>,
}

impl ExpansionResult {
    /// The best available value: extrapolated when present, otherwise the
    /// deepest partial sum.
    pub fn headline(&self) -> f64 {
        self.i_infinity
            .or(self.partial2)
            .or(self.partial1)
            .unwrap_or(self.partial0)
    }
}

/// Raw per-order integrals over one grid, before Padé processing.
/// `orders[k]` is `I^(k)` including the normalization and combinatorial
/// prefactors.
pub(crate) fn integrate_orders(
    setup: &PerturbationSetup,
    x_max: &[f64],
    grid: &Grid,
    max_order: u8,
    naive: bool,
    parallel: bool,
) -> [f64; 3] {
    let eval = |(&zeta, &weight): (&f64, &f64)| -> [f64; 3] {
        let slice = FactorSlice::build(zeta, &setup.model, x_max);
        let raw = if naive {
            node_brackets_naive(&setup.eps, &slice, max_order)
        } else {
            node_brackets_factored(&setup.eps, &slice, max_order)
        };
        let w = weight * normal_pdf(zeta);
        [w * raw[0], w * raw[1], w * raw[2]]
    };

    let per_node: Vec<[f64; 3]> = if parallel {
        grid.nodes
            .par_iter()
            .zip(grid.weights.par_iter())
            .map(eval)
            .collect()
    } else {
        grid.nodes.iter().zip(grid.weights.iter()).map(eval).collect()
    };

    let column = |k: usize| -> Vec<f64> { per_node.iter().map(|f| f[k]).collect() };
    let j = setup.j_norm;
    [
        j * pairwise_sum(&column(0)),
        -0.5 * j * pairwise_sum(&column(1)),
        0.125 * j * pairwise_sum(&column(2)),
    ]
}

/// Factored node evaluation. Returns the raw brackets
/// `[prod(v), sum_ij eps_ij (...) * prod(v), sum_ijkl eps_ij eps_kl (...) * prod(v)]`
/// without the `-1/2` and `1/8` prefactors.
///
/// If any coordinate's zeroth moment vanished (deep tail flush), every term
/// at every order carries either that `v_m` or one of that coordinate's
/// flushed moments, so the node contributes exactly zero.
pub(crate) fn node_brackets_factored(
    eps: &EpsilonOps,
    slice: &FactorSlice,
    max_order: u8,
) -> [f64; 3] {
    let n = slice.len();
    if slice.v.iter().any(|&v| v == 0.0) {
        return [0.0; 3];
    }
    let mut p = 1.0;
    for &vi in &slice.v {
        p *= vi;
    }
    if max_order == 0 {
        return [p, 0.0, 0.0];
    }

    // Moment ratios u_k = w_k / v per coordinate.
    let u1 = DVector::from_iterator(n, (0..n).map(|i| slice.w1[i] / slice.v[i]));
    let u2 = DVector::from_iterator(n, (0..n).map(|i| slice.w2[i] / slice.v[i]));

    let g = &eps.off * &u1;
    let a = u1.dot(&g);
    let b = eps.diag.dot(&u2);
    let first = a + b;
    if max_order == 1 {
        return [p, p * first, 0.0];
    }

    let u3 = DVector::from_iterator(n, (0..n).map(|i| slice.w3[i] / slice.v[i]));
    let u4 = DVector::from_iterator(n, (0..n).map(|i| slice.w4[i] / slice.v[i]));
    let u1_sq = u1.component_mul(&u1);
    let f2 = &eps.off_sq * &u1_sq;
    let g2 = &eps.off_sq * &u2;

    // Two disjoint off-diagonal pairs: square of the off-diagonal form minus
    // single-index and double-index overlaps.
    let mut c1 = a * a;
    // One index shared between two off-diagonal pairs (four arrangements).
    let mut c3 = 0.0;
    // Diagonal pair times a disjoint off-diagonal pair (two arrangements).
    let mut c2 = 0.0;
    // Two distinct diagonal pairs.
    let mut c4 = b * b;
    // Same unordered off-diagonal pair in both factors.
    let mut c5 = 0.0;
    // Three coincident indices (four arrangements).
    let mut c6 = 0.0;
    // All four indices coincident.
    let mut c7 = 0.0;
    for i in 0..n {
        let di = eps.diag[i];
        c1 += -4.0 * u1_sq[i] * g[i] * g[i] + 2.0 * u1_sq[i] * f2[i];
        c2 += 2.0 * di * u2[i] * (a - 2.0 * u1[i] * g[i]);
        c3 += 4.0 * u2[i] * (g[i] * g[i] - f2[i]);
        c4 -= di * di * u2[i] * u2[i];
        c5 += 2.0 * u2[i] * g2[i];
        c6 += 4.0 * di * u3[i] * g[i];
        c7 += di * di * u4[i];
    }
    let second = c1 + c2 + c3 + c4 + c5 + c6 + c7;
    [p, p * first, p * second]
}

/// Naive node evaluation: explicit loops over index tuples. Coincident
/// indices merge into higher truncated moments (an index appearing `r` times
/// contributes its `r`-th moment); all untouched coordinates contribute their
/// zeroth moments. No ratios, no aggregates; this is the reference path.
pub(crate) fn node_brackets_naive(
    eps: &EpsilonOps,
    slice: &FactorSlice,
    max_order: u8,
) -> [f64; 3] {
    let n = slice.len();
    let v = &slice.v;
    let mut p = 1.0;
    for &vi in v {
        p *= vi;
    }
    if max_order == 0 {
        return [p, 0.0, 0.0];
    }

    let untouched = |touched: &[usize]| -> f64 {
        let mut prod = 1.0;
        'outer: for m in 0..n {
            for &t in touched {
                if t == m {
                    continue 'outer;
                }
            }
            prod *= v[m];
        }
        prod
    };

    let mut first = 0.0;
    for i in 0..n {
        for j in 0..n {
            let term = if i == j {
                slice.w2[i] * untouched(&[i])
            } else {
                slice.w1[i] * slice.w1[j] * untouched(&[i, j])
            };
            first += eps.full[(i, j)] * term;
        }
    }
    if max_order == 1 {
        return [p, first, 0.0];
    }

    let mut second = 0.0;
    let mut vals = [0usize; 4];
    let mut counts = [0usize; 4];
    for i in 0..n {
        for j in 0..n {
            let eij = eps.full[(i, j)];
            for k in 0..n {
                for l in 0..n {
                    let coeff = eij * eps.full[(k, l)];
                    let mut distinct = 0usize;
                    for &idx in &[i, j, k, l] {
                        match vals[..distinct].iter().position(|&x| x == idx) {
                            Some(pos) => counts[pos] += 1,
                            None => {
                                vals[distinct] = idx;
                                counts[distinct] = 1;
                                distinct += 1;
                            }
                        }
                    }
                    let mut term = coeff;
                    for d in 0..distinct {
                        term *= slice.moment(counts[d], vals[d]);
                    }
                    second += term * untouched(&vals[..distinct]);
                }
            }
        }
    }
    [p, first, second]
}

/// Cardinality of each coincidence class of the index quadruple `(i,j,k,l)`
/// as closed forms in the dimension, in class order (all distinct; pair
/// inside one factor; pair across factors; two in-factor pairs; identical
/// unordered pairs; three coincident; four coincident). The seven counts sum
/// to `n^4`.
pub fn class_cardinalities_closed_form(n: u64) -> [u64; 7] {
    [
        n * n.saturating_sub(1) * n.saturating_sub(2) * n.saturating_sub(3),
        2 * n * n.saturating_sub(1) * n.saturating_sub(2),
        4 * n * n.saturating_sub(1) * n.saturating_sub(2),
        n * n.saturating_sub(1),
        2 * n * n.saturating_sub(1),
        4 * n * n.saturating_sub(1),
        n,
    ]
}

/// Enumerated class cardinalities, classifying every ordered quadruple.
pub fn class_cardinalities_enumerated(n: usize) -> Result<[u64; 7], Error> {
    let mut counts = [0u64; 7];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let class = classify_quadruple(i, j, k, l);
                    counts[class - 1] += 1;
                }
            }
        }
    }
    let total: u64 = counts.iter().sum();
    let expected = (n as u64).pow(4);
    if total != expected {
        return Err(Error::ClassCountMismatch {
            expected,
            got: total,
        });
    }
    Ok(counts)
}

/// Coincidence class of `(i,j)x(k,l)`: 1 all distinct; 2 pair inside one
/// factor; 3 pair across factors; 4 two in-factor pairs; 5 identical
/// unordered pairs; 6 three coincident; 7 all four coincident.
fn classify_quadruple(i: usize, j: usize, k: usize, l: usize) -> usize {
    let idx = [i, j, k, l];
    let mut vals = [0usize; 4];
    let mut counts = [0usize; 4];
    let mut distinct = 0usize;
    for &a in &idx {
        match vals[..distinct].iter().position(|&x| x == a) {
            Some(p) => counts[p] += 1,
            None => {
                vals[distinct] = a;
                counts[distinct] = 1;
                distinct += 1;
            }
        }
    }
    match distinct {
        4 => 1,
        3 => {
            if i == j || k == l {
                2
            } else {
                3
            }
        }
        2 => {
            if counts[..2].contains(&3) {
                6
            } else if i == j && k == l {
                4
            } else {
                5
            }
        }
        1 => 7,
        _ => unreachable!(),
    }
}

struct PadeStage {
    pade1: f64,
    pade2_11: f64,
    pade2_02: f64,
    selected: f64,
    i_infinity: f64,
    decay: Option<f64>,
    oscillating: Option<bool>,
}

fn build_pade_stage(orders: [f64; 3], policy: PadePolicy, warnings: &mut Vec<String>) -> PadeStage {
    let [i0, i1, i2] = orders;
    let partial2 = i0 + i1 + i2;

    let pade1 = match pade::pade_1(i0, i1) {
        Ok(v) => v,
        Err(_) => {
            warnings.push("pade1 pole; fell back to the first partial sum".into());
            i0 + i1
        }
    };
    let pade2_11 = match pade::pade_2_11(i0, i1, i2) {
        Ok(v) => v,
        Err(_) => {
            warnings.push("pade2 [1/1] pole; fell back to the second partial sum".into());
            partial2
        }
    };
    let pade2_02 = match pade::pade_2_02(i0, i1, i2) {
        Ok(v) => v,
        Err(_) => {
            warnings.push("pade2 [0/2] pole; fell back to the second partial sum".into());
            partial2
        }
    };
    let selected = pade::second_order_choice(pade2_11, pade2_02, policy);

    let (i_infinity, decay, oscillating) =
        match pade::extrapolate_infinity(pade::pade_0(i0), pade1, selected, None) {
            Ok(e) => (e.i_infinity, Some(e.decay), Some(e.oscillating)),
            Err(_) => {
                warnings.push(
                    "extrapolation found no decay in (0, 1); reporting the second-order Pade"
                        .into(),
                );
                (selected, None, None)
            }
        };

    PadeStage {
        pade1,
        pade2_11,
        pade2_02,
        selected,
        i_infinity,
        decay,
        oscillating,
    }
}

/// Runs the full pipeline on a prepared setup.
pub fn expand_setup(
    setup: &PerturbationSetup,
    options: &ExpansionOptions,
) -> Result<ExpansionResult, Error> {
    if options.max_order > 2 {
        return Err(Error::InvalidConfig(format!(
            "expansion order {} not available; highest implemented order is 2",
            options.max_order
        )));
    }
    let grid = setup.quad.grid();
    let orders = integrate_orders(
        setup,
        &setup.x_max,
        &grid,
        options.max_order,
        options.force_naive,
        options.parallel,
    );
    let mut warnings: Vec<String> = setup.warnings().to_vec();

    if options.check_convergence {
        let fine = setup.quad.grid_with_nodes(setup.quad.nodes * 2);
        let refined = integrate_orders(
            setup,
            &setup.x_max,
            &fine,
            options.max_order,
            options.force_naive,
            options.parallel,
        );
        let d0 = (refined[0] - orders[0]).abs();
        if d0 > 1e-8 {
            warnings.push(format!(
                "quadrature under-resolved: doubling nodes moved order 0 by {d0:.3e}"
            ));
        }
        if options.max_order == 2 {
            let dp2 = ((refined[0] + refined[1] + refined[2])
                - (orders[0] + orders[1] + orders[2]))
                .abs();
            if dp2 > 1e-7 {
                warnings.push(format!(
                    "quadrature under-resolved: doubling nodes moved the second partial sum by {dp2:.3e}"
                ));
            }
        }
    }

    let metrics = setup.metrics();
    let node_count = grid.len();
    let [i0, i1, i2] = orders;

    let mut result = ExpansionResult {
        i0,
        i1: None,
        i2: None,
        partial0: i0,
        partial1: None,
        partial2: None,
        pade1: None,
        pade2_11: None,
        pade2_02: None,
        pade2_selected: None,
        i_infinity: None,
        extrapolation_decay: None,
        oscillating: None,
        metrics,
        node_count,
        warnings: Vec::new(),
    };
    if options.max_order >= 1 {
        result.i1 = Some(i1);
        result.partial1 = Some(i0 + i1);
        if options.max_order == 1 {
            match pade::pade_1(i0, i1) {
                Ok(v) => result.pade1 = Some(v),
                Err(_) => {
                    warnings.push("pade1 pole; fell back to the first partial sum".into());
                    result.pade1 = Some(i0 + i1);
                }
            }
        }
    }
    if options.max_order == 2 {
        result.i2 = Some(i2);
        result.partial2 = Some(i0 + i1 + i2);
        let stage = build_pade_stage(orders, options.pade_policy, &mut warnings);
        result.pade1 = Some(stage.pade1);
        result.pade2_11 = Some(stage.pade2_11);
        result.pade2_02 = Some(stage.pade2_02);
        result.pade2_selected = Some(stage.selected);
        result.i_infinity = Some(stage.i_infinity);
        result.extrapolation_decay = stage.decay;
        result.oscillating = stage.oscillating;
    }
    result.warnings = warnings;
    Ok(result)
}

/// Fits the one-factor base, prepares the setup and runs the pipeline.
pub fn expand(
    rho: CorrelationMatrix,
    x_max: Vec<f64>,
    quad: QuadratureConfig,
    options: &ExpansionOptions,
) -> Result<ExpansionResult, Error> {
    let setup = PerturbationSetup::new(rho, x_max, quad)?;
    expand_setup(&setup, options)
}

/// Difference of expansions of two correlation matrices evaluated against
/// one shared base model (fitted from the first matrix), so the factor
/// slices are computed once per node and reused for both.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub base: ExpansionResult,
    pub shifted: ExpansionResult,
    pub delta_partial0: f64,
    pub delta_partial1: f64,
    pub delta_partial2: f64,
    pub delta_i_infinity: Option<f64>,
    /// Headline sensitivity: difference of second-order partial sums.
    pub value: f64,
}

pub fn correlation_sensitivity(
    rho_base: CorrelationMatrix,
    rho_shifted: CorrelationMatrix,
    x_max: Vec<f64>,
    quad: QuadratureConfig,
    options: &ExpansionOptions,
) -> Result<SensitivityResult, Error> {
    if rho_base.n() != rho_shifted.n() {
        return Err(Error::DimensionMismatch {
            expected: rho_base.n(),
            got: rho_shifted.n(),
        });
    }
    let model = OneFactorModel::fit(&rho_base)?;
    let setup_base =
        PerturbationSetup::with_model(rho_base, model.clone(), x_max.clone(), quad)?;
    let setup_shifted = PerturbationSetup::with_model(rho_shifted, model, x_max, quad)?;

    // The two setups share the model, the limits and the grid, so their
    // slices are identical; evaluate both epsilon sets on one slice pass.
    let grid = quad.grid();
    let eval = |(&zeta, &weight): (&f64, &f64)| -> [f64; 6] {
        let slice = FactorSlice::build(zeta, &setup_base.model, &setup_base.x_max);
        let a = if options.force_naive {
            node_brackets_naive(&setup_base.eps, &slice, options.max_order)
        } else {
            node_brackets_factored(&setup_base.eps, &slice, options.max_order)
        };
        let b = if options.force_naive {
            node_brackets_naive(&setup_shifted.eps, &slice, options.max_order)
        } else {
            node_brackets_factored(&setup_shifted.eps, &slice, options.max_order)
        };
        let w = weight * normal_pdf(zeta);
        [
            w * a[0],
            w * a[1],
            w * a[2],
            w * b[0],
            w * b[1],
            w * b[2],
        ]
    };
    let per_node: Vec<[f64; 6]> = if options.parallel {
        grid.nodes
            .par_iter()
            .zip(grid.weights.par_iter())
            .map(eval)
            .collect()
    } else {
        grid.nodes.iter().zip(grid.weights.iter()).map(eval).collect()
    };
    let column = |k: usize| -> Vec<f64> { per_node.iter().map(|f| f[k]).collect() };
    let orders_base = [
        setup_base.j_norm * pairwise_sum(&column(0)),
        -0.5 * setup_base.j_norm * pairwise_sum(&column(1)),
        0.125 * setup_base.j_norm * pairwise_sum(&column(2)),
    ];
    let orders_shifted = [
        setup_shifted.j_norm * pairwise_sum(&column(3)),
        -0.5 * setup_shifted.j_norm * pairwise_sum(&column(4)),
        0.125 * setup_shifted.j_norm * pairwise_sum(&column(5)),
    ];

    let base = finish_expansion_from(&setup_base, orders_base, grid.len(), options);
    let shifted = finish_expansion_from(&setup_shifted, orders_shifted, grid.len(), options);

    let delta_partial0 = shifted.partial0 - base.partial0;
    let delta_partial1 = match (shifted.partial1, base.partial1) {
        (Some(a), Some(b)) => a - b,
        _ => 0.0,
    };
    let delta_partial2 = match (shifted.partial2, base.partial2) {
        (Some(a), Some(b)) => a - b,
        _ => delta_partial1,
    };
    let delta_i_infinity = match (shifted.i_infinity, base.i_infinity) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    };
    Ok(SensitivityResult {
        value: delta_partial2,
        base,
        shifted,
        delta_partial0,
        delta_partial1,
        delta_partial2,
        delta_i_infinity,
    })
}

/// Assembles a full-order result from already-integrated per-order terms:
/// the Padé stage, extrapolation and metrics, without re-running quadrature.
pub(crate) fn finish_expansion_from(
    setup: &PerturbationSetup,
    orders: [f64; 3],
    node_count: usize,
    options: &ExpansionOptions,
) -> ExpansionResult {
    let [i0, i1, i2] = orders;
    let mut warnings: Vec<String> = setup.warnings().to_vec();
    let stage = build_pade_stage(orders, options.pade_policy, &mut warnings);
    ExpansionResult {
        i0,
        i1: Some(i1),
        i2: Some(i2),
        partial0: i0,
        partial1: Some(i0 + i1),
        partial2: Some(i0 + i1 + i2),
        pade1: Some(stage.pade1),
        pade2_11: Some(stage.pade2_11),
        pade2_02: Some(stage.pade2_02),
        pade2_selected: Some(stage.selected),
        i_infinity: Some(stage.i_infinity),
        extrapolation_decay: stage.decay,
        oscillating: stage.oscillating,
        metrics: setup.metrics(),
        node_count,
        warnings,
    }
}
