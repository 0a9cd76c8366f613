//! Maximum-likelihood estimation of the variance dynamics on daily returns.
//!
//! The filter runs the physical-measure recursion driven by realized
//! residuals: given today's variance, the observed return pins down the
//! innovation, which advances the state. Gaussian log-likelihood terms
//! accumulate along the way; a nonpositive filtered variance (possible
//! for the families without a positivity guarantee) makes the parameter
//! point infeasible with likelihood negative infinity.
//!
//! Fitting minimizes the negative log-likelihood with a multi-start
//! simplex search in smooth reparameterized coordinates, so every point
//! the optimizer visits maps to parameters satisfying the family's
//! constraints (eigenvalues inside the unit circle, positive scale
//! parameters, and the two-component ordering where required). Leverage
//! parameters are kept positive by the transform, matching the sign of
//! every parameter set shipped with the crate.
//!
//! Standard errors invert the negative finite-difference Hessian of the
//! log-likelihood in original coordinates. The filter initialization is
//! held fixed at the optimum while differentiating, so a perturbation
//! can never flip the initialization between its stationary-mean and
//! sample-variance branches mid-Hessian.

use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::ReturnSeries;
use crate::models::{
    lossy, ComponentParams, Family, FamilyParams, HnParams, Measure, ModelError, ModelSpec,
    VolState,
};
use crate::optim::{fd_hessian, nelder_mead, NelderMeadConfig, OptimOutcome};
use crate::fixtures;
use crate::real::Real;
use crate::rng::PathNormals;

/// Returns used for the sample-variance fallback initialization.
const INIT_SAMPLE_LEN: usize = 250;

/// Relative finite-difference step for the Hessian.
const HESSIAN_REL_STEP: f64 = 1e-4;

/// Smallest scaled curvature the finite-difference Hessian resolves.
///
/// Unit-diagonal eigenvalues of this magnitude flip sign with the step
/// size and across restarts of the optimizer, so they carry no sign
/// information; genuinely off-optimum points measure an order larger.
const CURVATURE_RESOLUTION: f64 = 1e-3;

/// Scaled eigenvalues this small mean a structurally singular Hessian
/// (an exactly redundant parameter direction), not a weak ridge.
const STRUCTURAL_RANK_EPS: f64 = 1e-9;

/// Series shorter than this flag `short_series` in the fit report.
pub const SHORT_SERIES_LEN: usize = 500;

/// Estimation failure.
#[derive(Debug, Error)]
pub enum EstimateError<T: std::fmt::Debug + Send + Sync + 'static> {
    #[error("filtered variance became nonpositive at observation {t}")]
    FilterBreakdown { t: usize },
    #[error("estimation runs under the physical measure; risk-neutralize afterwards")]
    NotPhysical,
    #[error("return series is empty")]
    EmptySeries,
    #[error("no start converged; best candidate attached")]
    NoConvergence { best: Box<FitResult<T>> },
    #[error("negative Hessian is not positive definite")]
    HessianNotPD { eigenvalues: Vec<f64> },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Filtered states and residuals, aligned one-to-one with the returns.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput<T> {
    /// Variance prevailing for each return.
    pub h: Vec<T>,
    /// Long-run component; equals `h` for the single-component family.
    pub q: Vec<T>,
    /// Standardized residuals `z_t = (R_t - r_t - lambda h_t) / sqrt(h_t)`.
    pub z: Vec<T>,
    /// Per-observation Gaussian log-likelihood terms.
    pub loglik_terms: Vec<T>,
}

impl<T: Real> FilterOutput<T> {
    pub fn log_likelihood(&self) -> T {
        self.loglik_terms.iter().fold(T::zero(), |a, &b| a + b)
    }
}

/// How the best start finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Convergence {
    pub starts: usize,
    pub best_start: usize,
    pub iterations: usize,
    pub evals: usize,
    pub converged: bool,
    /// Set when the series is shorter than [`SHORT_SERIES_LEN`].
    pub short_series: bool,
}

/// A fitted model with its score and curvature-based uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    /// Estimated parameters under the physical measure.
    pub spec: ModelSpec<T>,
    pub log_likelihood: T,
    pub n_obs: usize,
    pub n_params: usize,
    pub aic: T,
    pub bic: T,
    /// Standard errors in [`param_names`] order; `None` when the negative
    /// Hessian was not positive definite.
    pub std_errors: Option<Vec<T>>,
    /// Eigenvalue diagnostics from the failed curvature inversion when
    /// standard errors were unavailable.
    pub hessian_eigenvalues: Option<Vec<f64>>,
    pub convergence: Convergence,
}

/// Multi-start configuration for [`fit`].
#[derive(Debug, Clone, Copy)]
pub struct FitConfig {
    pub starts: usize,
    /// Seed for the jitter applied to starts beyond the fixture sets.
    pub seed: u64,
    pub nm: NelderMeadConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            starts: 8,
            seed: 0,
            nm: NelderMeadConfig {
                max_iters: 4000,
                x_tol: 1e-6,
                f_tol: 1e-7,
                ..NelderMeadConfig::default()
            },
        }
    }
}

/// Parameter labels in reporting order.
pub fn param_names(family: Family) -> &'static [&'static str] {
    match family {
        Family::Hn => &["omega", "alpha", "gamma1", "beta_tilde", "lambda"],
        _ => &["omega", "alpha", "gamma1", "beta_tilde", "varphi", "gamma2", "rho", "lambda"],
    }
}

/// Parameter values in [`param_names`] order.
pub fn param_values<T: Real>(spec: &ModelSpec<T>) -> Vec<T> {
    match &spec.params {
        FamilyParams::Hn(p) => vec![p.omega, p.alpha, p.gamma1, p.beta_tilde, p.lambda],
        FamilyParams::Cjow(p) | FamilyParams::Op(p) | FamilyParams::Cpc(p) => vec![
            p.omega,
            p.alpha,
            p.gamma1,
            p.beta_tilde,
            p.varphi,
            p.gamma2,
            p.rho,
            p.lambda,
        ],
    }
}

/// Builds a physical-measure spec from values in [`param_names`] order.
pub fn spec_from_params<T: Real>(family: Family, values: &[T]) -> ModelSpec<T> {
    match family {
        Family::Hn => ModelSpec::hn(HnParams {
            omega: values[0],
            alpha: values[1],
            gamma1: values[2],
            beta_tilde: values[3],
            lambda: values[4],
        }),
        _ => {
            let p = ComponentParams {
                omega: values[0],
                alpha: values[1],
                gamma1: values[2],
                beta_tilde: values[3],
                varphi: values[4],
                gamma2: values[5],
                rho: values[6],
                lambda: values[7],
            };
            match family {
                Family::Cjow => ModelSpec::cjow(p),
                Family::Op => ModelSpec::op(p),
                Family::Cpc => ModelSpec::cpc(p),
                Family::Hn => unreachable!("handled above"),
            }
        }
    }
}

fn sample_variance_head<T: Real>(series: &ReturnSeries<T>) -> T {
    let n = series.len().min(INIT_SAMPLE_LEN);
    if n < 2 {
        return T::zero();
    }
    let head = &series.returns[..n];
    let len = T::of(n as f64);
    let mean = head.iter().fold(T::zero(), |a, &b| a + b) / len;
    let ss = head.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean));
    ss / (len - T::one())
}

/// Filter start `h_0 = q_0` at the stationary mean of `h`, with the
/// sample variance of the first [`INIT_SAMPLE_LEN`] returns as fallback
/// when stationary moments are infeasible.
pub fn initial_state<T: Real>(spec: &ModelSpec<T>, series: &ReturnSeries<T>) -> VolState<T> {
    let level = spec
        .stationary_moments()
        .ok()
        .map(|m| m.mean_h)
        .filter(|h| h.is_finite() && *h > T::zero())
        .unwrap_or_else(|| sample_variance_head(series));
    if spec.uses_component() {
        VolState::component(level, level)
    } else {
        VolState::single(level)
    }
}

/// Runs the physical-measure variance filter over a return series.
pub fn filter<T: Real>(
    spec: &ModelSpec<T>,
    series: &ReturnSeries<T>,
    init: VolState<T>,
) -> Result<FilterOutput<T>, EstimateError<T>> {
    if spec.measure != Measure::Physical {
        return Err(EstimateError::NotPhysical);
    }
    if series.is_empty() {
        return Err(EstimateError::EmptySeries);
    }
    if spec.uses_component() {
        spec.require_q(init).map_err(EstimateError::Model)?;
    }

    let n = series.len();
    let lambda = spec.lambda();
    let half = T::of(0.5);
    let ln_two_pi = T::TAU().ln();
    let mut out = FilterOutput {
        h: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        loglik_terms: Vec::with_capacity(n),
    };
    let mut state = init;
    for t in 0..n {
        let h = state.h;
        if !(h.is_finite() && h > T::zero()) {
            return Err(EstimateError::FilterBreakdown { t });
        }
        let z = (series.returns[t] - series.rates[t] - lambda * h) / h.sqrt();
        out.h.push(h);
        out.q.push(state.q.unwrap_or(h));
        out.z.push(z);
        out.loglik_terms.push(-half * (ln_two_pi + h.ln() + z * z));
        if t + 1 < n {
            state = spec.step(state, z).map_err(EstimateError::Model)?;
        }
    }
    Ok(out)
}

/// Total Gaussian log-likelihood; negative infinity when the filter
/// breaks down, so infeasible parameter points reject softly.
pub fn log_likelihood<T: Real>(
    spec: &ModelSpec<T>,
    series: &ReturnSeries<T>,
    init: VolState<T>,
) -> Result<T, EstimateError<T>> {
    match filter(spec, series, init) {
        Ok(out) => Ok(out.log_likelihood()),
        Err(EstimateError::FilterBreakdown { .. }) => Ok(T::neg_infinity()),
        Err(e) => Err(e),
    }
}

fn logistic<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn logit<T: Real>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

fn unit<T: Real>(v: T) -> T {
    let eps = T::of(1e-4);
    v.min(T::one() - eps).max(eps)
}

fn positive<T: Real>(v: T) -> T {
    v.max(T::of(1e-30))
}

/// Smooth bijection between unconstrained coordinates and a family's
/// feasible parameter region.
///
/// Positive scales travel through `exp`, unit-interval quantities
/// through the logistic, and the ordering constraints are built as
/// products of unit-interval factors: the long-run eigenvalue caps the
/// short-run one for the families that require it, which makes every
/// mapped point feasible by construction. `lambda` is unconstrained,
/// and the OP drift constant `omega` is unconstrained (it may be
/// negative). Mapping an infeasible parameter set back to coordinates
/// projects it to the interior.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Reparam {
    pub family: Family,
}

impl Reparam {
    /// Maps unconstrained coordinates to a physical-measure spec.
    pub fn spec<T: Real>(&self, x: &[T]) -> ModelSpec<T> {
        let one = T::one();
        match self.family {
            Family::Hn => {
                let gamma1 = x[2].exp();
                let radius = logistic(x[3]);
                let split = logistic(x[1]);
                ModelSpec::hn(HnParams {
                    omega: x[0].exp(),
                    alpha: radius * (one - split) / (gamma1 * gamma1),
                    gamma1,
                    beta_tilde: radius * split,
                    lambda: x[4],
                })
            }
            Family::Cjow => ModelSpec::cjow(ComponentParams {
                omega: x[0].exp(),
                alpha: x[1].exp(),
                gamma1: x[2].exp(),
                beta_tilde: logistic(x[3]),
                varphi: x[4].exp(),
                gamma2: x[5].exp(),
                rho: logistic(x[6]),
                lambda: x[7],
            }),
            Family::Op => {
                let gamma2 = x[5].exp();
                let long = logistic(x[6]);
                let rho_share = logistic(x[4]);
                ModelSpec::op(ComponentParams {
                    omega: x[0],
                    alpha: x[1].exp(),
                    gamma1: x[2].exp(),
                    beta_tilde: logistic(x[3]),
                    varphi: long * (one - rho_share) / (gamma2 * gamma2),
                    gamma2,
                    rho: long * rho_share,
                    lambda: x[7],
                })
            }
            Family::Cpc => {
                let gamma1 = x[2].exp();
                let gamma2 = x[5].exp();
                let long = logistic(x[6]);
                let rho_share = logistic(x[4]);
                let rho = long * rho_share;
                let short = rho * logistic(x[3]);
                let split = logistic(x[1]);
                ModelSpec::cpc(ComponentParams {
                    omega: x[0].exp(),
                    alpha: short * (one - split) / (gamma1 * gamma1),
                    gamma1,
                    beta_tilde: short * split,
                    varphi: long * (one - rho_share) / (gamma2 * gamma2),
                    gamma2,
                    rho,
                    lambda: x[7],
                })
            }
        }
    }

    /// Maps a spec to coordinates, projecting infeasible values inward.
    pub fn coords<T: Real>(&self, spec: &ModelSpec<T>) -> Vec<T> {
        match &spec.params {
            FamilyParams::Hn(p) => {
                let radius = p.beta_tilde + p.alpha * p.gamma1 * p.gamma1;
                vec![
                    positive(p.omega).ln(),
                    logit(unit(p.beta_tilde / radius)),
                    positive(p.gamma1).ln(),
                    logit(unit(radius)),
                    p.lambda,
                ]
            }
            FamilyParams::Cjow(p) => vec![
                positive(p.omega).ln(),
                positive(p.alpha).ln(),
                positive(p.gamma1).ln(),
                logit(unit(p.beta_tilde)),
                positive(p.varphi).ln(),
                positive(p.gamma2).ln(),
                logit(unit(p.rho)),
                p.lambda,
            ],
            FamilyParams::Op(p) => {
                let long = p.rho + p.varphi * p.gamma2 * p.gamma2;
                vec![
                    p.omega,
                    positive(p.alpha).ln(),
                    positive(p.gamma1).ln(),
                    logit(unit(p.beta_tilde)),
                    logit(unit(p.rho / long)),
                    positive(p.gamma2).ln(),
                    logit(unit(long)),
                    p.lambda,
                ]
            }
            FamilyParams::Cpc(p) => {
                let long = p.rho + p.varphi * p.gamma2 * p.gamma2;
                let short = p.beta_tilde + p.alpha * p.gamma1 * p.gamma1;
                vec![
                    positive(p.omega).ln(),
                    logit(unit(p.beta_tilde / short)),
                    positive(p.gamma1).ln(),
                    logit(unit(short / p.rho)),
                    logit(unit(p.rho / long)),
                    positive(p.gamma2).ln(),
                    logit(unit(long)),
                    p.lambda,
                ]
            }
        }
    }
}

fn family_fixture_names(family: Family) -> &'static [&'static str] {
    match family {
        Family::Hn => &["hn-cjow08", "hn-cclt23"],
        Family::Cjow => &["cjow08", "cclt23", "cjow-p1", "cjow-p2"],
        Family::Op => &["op23", "op-p1", "op-p2"],
        Family::Cpc => &["cpc-p1", "cpc-p2"],
    }
}

/// The shipped parameter sets of the family, then jittered copies of
/// them, all in reparameterized coordinates.
fn starting_points<T: Real>(family: Family, cfg: &FitConfig) -> Vec<Vec<T>> {
    let chain = Reparam { family };
    let bases: Vec<Vec<T>> = family_fixture_names(family)
        .iter()
        .map(|name| chain.coords(&fixtures::by_name::<T>(name).expect("registry name")))
        .collect();
    let mut starts: Vec<Vec<T>> = bases.iter().take(cfg.starts).cloned().collect();
    let mut counter = 0u64;
    while starts.len() < cfg.starts {
        let base = &bases[counter as usize % bases.len()];
        let mut rng = PathNormals::new(cfg.seed, counter);
        let jittered = base
            .iter()
            .map(|&v| v + T::of((rng.next_uniform() - 0.5) * 1.5))
            .collect();
        starts.push(jittered);
        counter += 1;
    }
    starts
}

/// Maximizes the log-likelihood over the family's feasible region with
/// a reparameterized multi-start simplex search.
pub fn fit<T: Real>(
    family: Family,
    series: &ReturnSeries<T>,
    cfg: &FitConfig,
) -> Result<FitResult<T>, EstimateError<T>> {
    if series.is_empty() {
        return Err(EstimateError::EmptySeries);
    }
    let chain = Reparam { family };
    let objective = |x: &[T]| {
        let spec = chain.spec(x);
        let init = initial_state(&spec, series);
        match log_likelihood(&spec, series, init) {
            Ok(ll) => -ll,
            Err(_) => T::infinity(),
        }
    };

    let starts = starting_points::<T>(family, cfg);
    let outcomes: Vec<OptimOutcome<T>> = starts
        .par_iter()
        .map(|start| nelder_mead(objective, start, &cfg.nm))
        .collect();
    let best_start = outcomes
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.value.partial_cmp(&b.value).expect("infinity, never NaN"))
        .map(|(i, _)| i)
        .expect("at least one start");
    let best = &outcomes[best_start];

    let spec = chain.spec(&best.x);
    let ll = -best.value;
    let k = family.n_params();
    let n = series.len();
    let two = T::of(2.0);
    let k_t = T::of(k as f64);
    let (std_errors, hessian_eigenvalues) = if ll.is_finite() {
        match standard_errors(&spec, series) {
            Ok(se) => (Some(se), None),
            Err(EstimateError::HessianNotPD { eigenvalues }) => (None, Some(eigenvalues)),
            Err(e) => return Err(e),
        }
    } else {
        (None, None)
    };

    let result = FitResult {
        spec,
        log_likelihood: ll,
        n_obs: n,
        n_params: k,
        aic: two * k_t - two * ll,
        bic: k_t * T::of(n as f64).ln() - two * ll,
        std_errors,
        hessian_eigenvalues,
        convergence: Convergence {
            starts: starts.len(),
            best_start,
            iterations: best.iterations,
            evals: best.evals,
            converged: best.converged && ll.is_finite(),
            short_series: n < SHORT_SERIES_LEN,
        },
    };
    if !result.convergence.converged {
        return Err(EstimateError::NoConvergence { best: Box::new(result) });
    }
    Ok(result)
}

fn fd_steps<T: Real>(family: Family, theta: &[T]) -> Vec<T> {
    // Scale floors per parameter keep the steps meaningful when an
    // estimate sits near zero (omega routinely does).
    let floors: &[f64] = match family {
        Family::Hn => &[1e-6, 1e-6, 1.0, 1e-2, 1e-1],
        _ => &[1e-6, 1e-6, 1.0, 1e-2, 1e-6, 1.0, 1e-2, 1e-1],
    };
    theta
        .iter()
        .zip(floors)
        .map(|(&v, &floor)| T::of(HESSIAN_REL_STEP) * v.abs().max(T::of(floor)))
        .collect()
}

/// Inverts a negative log-likelihood Hessian into standard errors.
pub(crate) fn ses_from_neg_hessian<T: Real>(
    hessian: &[Vec<T>],
) -> Result<Vec<T>, EstimateError<T>> {
    let k = hessian.len();
    let mut neg = nalgebra::DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let v = -lossy(hessian[i][j]);
            if !v.is_finite() {
                return Err(EstimateError::HessianNotPD { eigenvalues: Vec::new() });
            }
            neg[(i, j)] = v;
        }
    }
    // Curvatures span many orders of magnitude across parameters, so the
    // matrix is rescaled to unit diagonal before the eigendecomposition;
    // otherwise solver round-off at the scale of the largest entry buries
    // the smallest eigenvalues. A positive definite matrix has a positive
    // diagonal, so a nonpositive entry already decides the outcome.
    if (0..k).any(|i| neg[(i, i)] <= 0.0) {
        let eigen = nalgebra::SymmetricEigen::new(neg);
        return Err(EstimateError::HessianNotPD {
            eigenvalues: eigen.eigenvalues.iter().copied().collect(),
        });
    }
    let scale: Vec<f64> = (0..k).map(|i| neg[(i, i)].sqrt()).collect();
    let mut scaled = nalgebra::DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            scaled[(i, j)] = neg[(i, j)] / (scale[i] * scale[j]);
        }
    }
    let eigen = nalgebra::SymmetricEigen::new(scaled);
    let eigenvalues: Vec<f64> = eigen.eigenvalues.iter().copied().collect();
    // Eigenvalues inside the resolution band are indistinguishable from
    // zero and are floored for the inversion, so a near-flat ridge yields
    // large standard errors rather than a failure whose sign depends on
    // round-off. Exact singularities and clearly negative curvature are
    // reported as errors.
    if eigenvalues
        .iter()
        .any(|&v| v.abs() <= STRUCTURAL_RANK_EPS || v < -CURVATURE_RESOLUTION)
    {
        return Err(EstimateError::HessianNotPD { eigenvalues });
    }
    let inv_diag = nalgebra::DMatrix::from_diagonal(
        &eigen.eigenvalues.map(|v| 1.0 / v.max(CURVATURE_RESOLUTION)),
    );
    let inverse = &eigen.eigenvectors * inv_diag * eigen.eigenvectors.transpose();
    Ok((0..k).map(|i| T::of(inverse[(i, i)].sqrt() / scale[i])).collect())
}

/// Standard errors from the inverted negative Hessian of the
/// log-likelihood at `spec`, in [`param_names`] order.
///
/// Meaningful only at an interior optimum; away from one the curvature
/// is routinely indefinite and the call reports [`EstimateError::HessianNotPD`].
pub fn standard_errors<T: Real>(
    spec: &ModelSpec<T>,
    series: &ReturnSeries<T>,
) -> Result<Vec<T>, EstimateError<T>> {
    if spec.measure != Measure::Physical {
        return Err(EstimateError::NotPhysical);
    }
    let family = spec.family();
    let theta = param_values(spec);
    let init = initial_state(spec, series);
    let f = |x: &[T]| {
        let candidate = spec_from_params(family, x);
        log_likelihood(&candidate, series, init).unwrap_or_else(|_| T::nan())
    };
    let hessian = fd_hessian(f, &theta, &fd_steps(family, &theta));
    ses_from_neg_hessian(&hessian)
}
