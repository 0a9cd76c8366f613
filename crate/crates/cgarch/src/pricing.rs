//! European option valuation by Fourier inversion, integrand diagnostics,
//! and a Monte Carlo pricing cross-check.
//!
//! A call struck at `K` with `T` trading days to expiry is valued from the
//! risk-neutral transform `f(u) = E[S_T^u]` as
//!
//! ```text
//! C = S/2 + (e^{-rT}/pi) I1 - K e^{-rT} (1/2 + I2/pi)
//! I1 = integral over phi > 0 of Re[K^{-i phi} f(1 + i phi) / (i phi)]
//! I2 = integral over phi > 0 of Re[K^{-i phi} f(i phi)     / (i phi)]
//! ```
//!
//! Puts come from put-call parity. Both integrands have finite limits at
//! zero, so integration starts at [`PHI_MIN`] instead of handling the
//! limit analytically; the truncation error is far below the quadrature
//! tolerance.
//!
//! The transform is only trustworthy while `|f(u)| <= f(Re u)` holds, and
//! two-component dynamics that can push the variance negative violate that
//! bound on parts of the contour for many (state, maturity) cells. A
//! [`MaturityPricer`] therefore scans a wide log-spaced grid of contour
//! points before pricing anything and keeps checking every quadrature node
//! against the bound, converting a violation into
//! [`PricingError::Diverged`] rather than integrating garbage. The real
//! parts of the bounds are constant along each contour leg (`f(1)` is the
//! forward, `f(0)` is one), so the check costs one comparison per node.
//!
//! Coefficient recursions depend on `phi` but not on the strike, so each
//! evaluated contour point is cached and shared by every strike at the
//! same maturity.

use std::collections::HashMap;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mgf::{self, MgfError};
use crate::models::{lossy, Measure, ModelError, ModelSpec, VolState};
use crate::quad::{integrate_to_quiet_tail, QuadConfig};
use crate::real::Real;
use crate::rng::PathNormals;
use crate::simulate::drive_path;

/// Lower integration endpoint for both pricing integrals.
pub const PHI_MIN: f64 = 1e-8;

/// Hard upper cap for the quiet-tail search.
pub const PHI_CAP: f64 = 1e4;

/// Trailing-block magnitude below which the integrand tail counts as quiet.
pub const TAIL_TOL: f64 = 1e-10;

/// Default absolute tolerance on each pricing integral.
pub const PRICE_ABS_TOL: f64 = 1e-8;

/// Divergence scan: log-spaced contour points checked before pricing.
const SWEEP_POINTS: usize = 1024;
const SWEEP_LO: f64 = 1e-2;
const SWEEP_HI: f64 = 3e4;

/// Quadrature settings used by [`price_gil_pelaez`] and the CLI.
pub fn default_quad_config<T: Real>() -> QuadConfig<T> {
    QuadConfig { abs_tol: T::of(PRICE_ABS_TOL), max_panels: 4096 }
}

/// Exercise side of a vanilla option.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

/// One European contract together with the market state it is priced from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contract<T> {
    pub strike: T,
    /// Trading days to expiry.
    pub maturity: u32,
    pub kind: OptionKind,
    pub spot: T,
    /// Per-day simple rate.
    pub rate: T,
}

impl<T: Real> Contract<T> {
    pub fn validate(&self) -> Result<(), PricingError> {
        if !(self.strike.is_finite() && self.strike > T::zero()) {
            return Err(PricingError::InvalidContract {
                detail: format!("strike must be positive and finite, got {}", self.strike),
            });
        }
        if !(self.spot.is_finite() && self.spot > T::zero()) {
            return Err(PricingError::InvalidContract {
                detail: format!("spot must be positive and finite, got {}", self.spot),
            });
        }
        if self.maturity == 0 {
            return Err(PricingError::InvalidContract {
                detail: "maturity must be at least one trading day".to_string(),
            });
        }
        if !self.rate.is_finite() {
            return Err(PricingError::InvalidContract {
                detail: format!("rate must be finite, got {}", self.rate),
            });
        }
        Ok(())
    }
}

/// Valuation failure.
#[derive(Debug, Clone, Error)]
pub enum PricingError {
    /// Transform and Monte Carlo prices are defined under the pricing
    /// measure only; risk-neutralize the spec first.
    #[error("pricing requires a risk-neutral spec")]
    NotRiskNeutral,
    /// The transform left its validity region somewhere on the contour,
    /// so no price exists at this maturity.
    #[error("transform diverges at maturity {maturity} (first failure near phi = {phi})")]
    Diverged { maturity: u32, phi: f64 },
    /// Adaptive quadrature ran out of budget before reaching tolerance.
    #[error("quadrature did not converge at maturity {maturity}")]
    QuadratureFailed { maturity: u32 },
    #[error("contract rejected: {detail}")]
    InvalidContract { detail: String },
    #[error("grid rejected: {detail}")]
    InvalidGrid { detail: String },
    /// More than half of the Monte Carlo paths hit negative variance, so
    /// the surviving average is too biased to report.
    #[error("{dead} of {total} Monte Carlo paths died before expiry")]
    TooManyDeadPaths { dead: u64, total: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mgf(#[from] MgfError),
}

/// One transform valuation with its quadrature diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct PriceResult<T> {
    pub price: T,
    /// Whether quadrature noise pushed the raw value below zero and the
    /// price was floored at zero.
    pub floored: bool,
    /// Value of the spot-leg integral `I1`.
    pub i1: T,
    /// Value of the strike-leg integral `I2`.
    pub i2: T,
    /// Total integrand evaluations across both legs.
    pub evals: usize,
}

/// The two contour legs of the inversion formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Leg {
    /// `u = 1 + i phi`, weighting by the terminal spot.
    Spot,
    /// `u = i phi`, the plain characteristic function.
    Strike,
}

/// Shared transform state for all strikes at one (maturity, spot, rate).
///
/// Construction runs the divergence scan; a pricer that exists can price.
pub struct MaturityPricer<'a, T: Real> {
    spec: &'a ModelSpec<T>,
    state: VolState<T>,
    maturity: u32,
    spot: T,
    rate: T,
    discount: T,
    /// Real-part ceilings (bound plus margin) for the two legs.
    cap_spot: T,
    cap_strike: T,
    cfg: QuadConfig<T>,
    spot_leg: HashMap<u64, Complex<T>>,
    strike_leg: HashMap<u64, Complex<T>>,
}

impl<'a, T: Real> MaturityPricer<'a, T> {
    pub fn new(
        spec: &'a ModelSpec<T>,
        state: VolState<T>,
        maturity: u32,
        spot: T,
        rate: T,
        cfg: QuadConfig<T>,
    ) -> Result<Self, PricingError> {
        if spec.measure != Measure::RiskNeutral {
            return Err(PricingError::NotRiskNeutral);
        }
        let probe = Contract {
            strike: spot,
            maturity,
            kind: OptionKind::Call,
            spot,
            rate,
        };
        probe.validate()?;
        if spec.uses_component() {
            spec.require_q(state)?;
        }
        let horizon = T::of(f64::from(maturity));
        let margin = T::of(mgf::BOUND_MARGIN);
        let mut pricer = MaturityPricer {
            spec,
            state,
            maturity,
            spot,
            rate,
            discount: (-rate * horizon).exp(),
            cap_spot: spot.ln() + rate * horizon + margin,
            cap_strike: margin,
            cfg,
            spot_leg: HashMap::new(),
            strike_leg: HashMap::new(),
        };
        pricer.divergence_scan()?;
        Ok(pricer)
    }

    /// Checks both legs on a wide log-spaced contour grid. Adaptive
    /// quadrature alone can stop in a quiet stretch below the explosion
    /// region, so this scan is what makes a finite price trustworthy.
    fn divergence_scan(&mut self) -> Result<(), PricingError> {
        let lo = SWEEP_LO.ln();
        let step = (SWEEP_HI.ln() - lo) / (SWEEP_POINTS - 1) as f64;
        for i in 0..SWEEP_POINTS {
            let phi = T::of((lo + step * i as f64).exp());
            self.leg_exponent(Leg::Spot, phi)?;
            self.leg_exponent(Leg::Strike, phi)?;
        }
        Ok(())
    }

    fn diverged_at(&self, phi: T) -> PricingError {
        PricingError::Diverged {
            maturity: self.maturity,
            phi: lossy(phi),
        }
    }

    /// Log transform value on one leg at `phi`, cached across strikes.
    fn leg_exponent(&mut self, leg: Leg, phi: T) -> Result<Complex<T>, PricingError> {
        let key = lossy(phi).to_bits();
        let cached = match leg {
            Leg::Spot => self.spot_leg.get(&key).copied(),
            Leg::Strike => self.strike_leg.get(&key).copied(),
        };
        if let Some(e) = cached {
            return Ok(e);
        }
        let u = match leg {
            Leg::Spot => Complex::new(T::one(), phi),
            Leg::Strike => Complex::new(T::zero(), phi),
        };
        let exponent =
            match mgf::log_mgf(self.spec, u, self.state, self.spot, self.maturity, self.rate) {
                Ok(e) => e,
                Err(MgfError::Diverged { .. }) => return Err(self.diverged_at(phi)),
                Err(other) => return Err(PricingError::Mgf(other)),
            };
        let cap = match leg {
            Leg::Spot => self.cap_spot,
            Leg::Strike => self.cap_strike,
        };
        if exponent.re > cap {
            return Err(self.diverged_at(phi));
        }
        match leg {
            Leg::Spot => self.spot_leg.insert(key, exponent),
            Leg::Strike => self.strike_leg.insert(key, exponent),
        };
        Ok(exponent)
    }

    /// `Re[K^{-i phi} f(u) / (i phi)]` for one leg. The bound check keeps
    /// the real part of the exponent small, so `exp` cannot overflow here.
    fn integrand(&mut self, leg: Leg, phi: T, log_strike: T) -> Result<T, PricingError> {
        let exponent = self.leg_exponent(leg, phi)?;
        let weight = (exponent - Complex::new(T::zero(), phi * log_strike)).exp();
        Ok(weight.im / phi)
    }

    /// Values a call at `strike` by the inversion formula.
    pub fn price_call(&mut self, strike: T) -> Result<PriceResult<T>, PricingError> {
        if !(strike.is_finite() && strike > T::zero()) {
            return Err(PricingError::InvalidContract {
                detail: format!("strike must be positive and finite, got {strike}"),
            });
        }
        let log_strike = strike.ln();
        let phi_min = T::of(PHI_MIN);
        let tail_tol = T::of(TAIL_TOL);
        let cap = T::of(PHI_CAP);
        let cfg = self.cfg;

        let i1 = integrate_to_quiet_tail(
            &mut |phi| self.integrand(Leg::Spot, phi, log_strike),
            phi_min,
            tail_tol,
            cap,
            &cfg,
        )?;
        let i2 = integrate_to_quiet_tail(
            &mut |phi| self.integrand(Leg::Strike, phi, log_strike),
            phi_min,
            tail_tol,
            cap,
            &cfg,
        )?;
        if !(i1.converged && i2.converged) || i1.hit_cap || i2.hit_cap {
            return Err(PricingError::QuadratureFailed { maturity: self.maturity });
        }

        let half = T::of(0.5);
        let pi = T::PI();
        let raw = half * self.spot + self.discount * i1.value / pi
            - strike * self.discount * (half + i2.value / pi);
        let floored = raw < T::zero();
        Ok(PriceResult {
            price: if floored { T::zero() } else { raw },
            floored,
            i1: i1.value,
            i2: i2.value,
            evals: i1.evals + i2.evals,
        })
    }

    /// Values a contract, routing puts through put-call parity.
    pub fn price(&mut self, contract: &Contract<T>) -> Result<PriceResult<T>, PricingError> {
        contract.validate()?;
        if contract.maturity != self.maturity
            || contract.spot != self.spot
            || contract.rate != self.rate
        {
            return Err(PricingError::InvalidContract {
                detail: format!(
                    "contract (T = {}, S = {}, r = {}) does not match this pricer (T = {}, S = {}, r = {})",
                    contract.maturity, contract.spot, contract.rate,
                    self.maturity, self.spot, self.rate
                ),
            });
        }
        let call = self.price_call(contract.strike)?;
        match contract.kind {
            OptionKind::Call => Ok(call),
            OptionKind::Put => {
                let raw = call.price - self.spot + contract.strike * self.discount;
                let floored = raw < T::zero();
                Ok(PriceResult {
                    price: if floored { T::zero() } else { raw },
                    floored: floored || call.floored,
                    ..call
                })
            }
        }
    }
}

/// Values one contract with the default quadrature settings.
pub fn price_gil_pelaez<T: Real>(
    spec: &ModelSpec<T>,
    state: VolState<T>,
    contract: &Contract<T>,
) -> Result<PriceResult<T>, PricingError> {
    contract.validate()?;
    let mut pricer = MaturityPricer::new(
        spec,
        state,
        contract.maturity,
        contract.spot,
        contract.rate,
        default_quad_config(),
    )?;
    pricer.price(contract)
}

/// Values a batch of contracts, sharing one [`MaturityPricer`] per
/// (maturity, spot, rate) group. Groups run in parallel; results keep the
/// input order and are bit-identical for any thread count.
pub fn price_contracts<T: Real>(
    spec: &ModelSpec<T>,
    state: VolState<T>,
    contracts: &[Contract<T>],
    cfg: QuadConfig<T>,
) -> Vec<Result<PriceResult<T>, PricingError>> {
    let mut groups: HashMap<(u32, u64, u64), Vec<usize>> = HashMap::new();
    for (i, c) in contracts.iter().enumerate() {
        let key = (c.maturity, lossy(c.spot).to_bits(), lossy(c.rate).to_bits());
        groups.entry(key).or_default().push(i);
    }
    let priced: Vec<(usize, Result<PriceResult<T>, PricingError>)> = groups
        .into_par_iter()
        .flat_map_iter(|(_, indices)| {
            let first = &contracts[indices[0]];
            let pricer = MaturityPricer::new(
                spec,
                state,
                first.maturity,
                first.spot,
                first.rate,
                cfg,
            );
            let results: Vec<(usize, Result<PriceResult<T>, PricingError>)> = match pricer {
                Ok(mut p) => indices
                    .into_iter()
                    .map(|i| (i, p.price(&contracts[i])))
                    .collect(),
                Err(e) => indices.into_iter().map(|i| (i, Err(e.clone()))).collect(),
            };
            results
        })
        .collect();

    let mut out: Vec<Option<Result<PriceResult<T>, PricingError>>> =
        contracts.iter().map(|_| None).collect();
    for (i, r) in priced {
        out[i] = Some(r);
    }
    out.into_iter().map(|r| r.expect("every contract priced")).collect()
}

/// Samples of both pricing integrand magnitudes over a `phi` grid at one
/// maturity. Magnitudes where a sample diverged may be infinite; entries
/// where no sample diverged are finite.
#[derive(Debug, Clone)]
pub struct IntegrandProfile<T> {
    pub maturity: u32,
    pub phi: Vec<T>,
    pub abs_i1: Vec<T>,
    pub abs_i2: Vec<T>,
    /// Per-sample verdicts from the modulus-bound check.
    pub sample_diverged: Vec<bool>,
    /// Whether any sample on the grid diverged.
    pub diverged: bool,
}

/// Log-spaced grid with `n` points from `lo` to `hi` inclusive.
pub fn log_grid<T: Real>(lo: f64, hi: f64, n: usize) -> Vec<T> {
    assert!(n >= 2 && lo > 0.0 && hi > lo, "grid needs n >= 2 and 0 < lo < hi");
    let llo = lo.ln();
    let step = (hi.ln() - llo) / (n - 1) as f64;
    (0..n).map(|i| T::of((llo + step * i as f64).exp())).collect()
}

/// Default diagnostic grid: wide enough to reach the explosion region of
/// every parameter set studied here.
pub fn default_profile_grid<T: Real>() -> Vec<T> {
    log_grid(1e-3, 3e4, 2000)
}

/// Samples `|I1|` and `|I2|` on `grid`, recording divergence as data
/// instead of failing. The magnitudes drop the oscillatory strike factor,
/// whose modulus is one: `|I_j(phi)| = |f(u_j)| / phi`.
pub fn integrand_profile<T: Real>(
    spec: &ModelSpec<T>,
    state: VolState<T>,
    contract: &Contract<T>,
    grid: &[T],
) -> Result<IntegrandProfile<T>, PricingError> {
    contract.validate()?;
    if grid.is_empty() || grid.iter().any(|p| !(p.is_finite() && *p > T::zero())) {
        return Err(PricingError::InvalidGrid {
            detail: "grid must be non-empty, finite, and strictly positive".to_string(),
        });
    }
    if spec.uses_component() {
        spec.require_q(state)?;
    }
    let n_steps = contract.maturity;
    let margin = T::of(mgf::BOUND_MARGIN);
    // Leg bounds: f(0) is one on the strike leg; the spot leg bound comes
    // from the recursion so the profile also works under the physical
    // measure, where f(1) is not the forward.
    let one = Complex::new(T::one(), T::zero());
    let cap_spot = match mgf::log_mgf(spec, one, state, contract.spot, n_steps, contract.rate) {
        Ok(e) => Some(e.re + margin),
        Err(MgfError::Diverged { .. }) => None,
        Err(other) => return Err(PricingError::Mgf(other)),
    };
    let cap_strike = Some(margin);

    let mut profile = IntegrandProfile {
        maturity: n_steps,
        phi: grid.to_vec(),
        abs_i1: Vec::with_capacity(grid.len()),
        abs_i2: Vec::with_capacity(grid.len()),
        sample_diverged: Vec::with_capacity(grid.len()),
        diverged: false,
    };
    for &phi in grid {
        let mut sample_diverged = false;
        let mut magnitudes = [T::zero(); 2];
        for (slot, (re_u, cap)) in [(T::one(), cap_spot), (T::zero(), cap_strike)]
            .into_iter()
            .enumerate()
        {
            let u = Complex::new(re_u, phi);
            let (abs, diverged) =
                match mgf::log_mgf(spec, u, state, contract.spot, n_steps, contract.rate) {
                    Ok(e) => {
                        let abs = (e.re - phi.ln()).exp();
                        let over = match cap {
                            Some(c) => e.re > c,
                            None => true,
                        };
                        (abs, over)
                    }
                    Err(MgfError::Diverged { .. }) => (T::infinity(), true),
                    Err(other) => return Err(PricingError::Mgf(other)),
                };
            magnitudes[slot] = abs;
            sample_diverged |= diverged;
        }
        profile.abs_i1.push(magnitudes[0]);
        profile.abs_i2.push(magnitudes[1]);
        profile.sample_diverged.push(sample_diverged);
        profile.diverged |= sample_diverged;
    }
    Ok(profile)
}

/// Monte Carlo valuation under the pricing measure.
#[derive(Debug, Clone, Copy)]
pub struct McPrice<T> {
    /// Discounted mean payoff over surviving paths.
    pub price: T,
    /// Standard error of the discounted mean.
    pub std_error: T,
    /// Paths that hit negative variance before expiry; they are excluded
    /// from the average, which biases it when their count is material.
    pub dead_paths: u64,
    pub n_paths: u64,
}

/// Fixed reduction block so sums are bit-identical for any thread count.
const MC_CHUNK: u64 = 4096;

/// Values a contract by simulating risk-neutral paths with per-path
/// substreams of `seed`. Dead paths are excluded and counted; more than
/// half dead is an error rather than a number.
pub fn price_monte_carlo<T: Real>(
    spec: &ModelSpec<T>,
    state: VolState<T>,
    contract: &Contract<T>,
    n_paths: u64,
    seed: u64,
) -> Result<McPrice<T>, PricingError> {
    if spec.measure != Measure::RiskNeutral {
        return Err(PricingError::NotRiskNeutral);
    }
    contract.validate()?;
    if spec.uses_component() {
        spec.require_q(state)?;
    }
    if n_paths == 0 {
        return Err(PricingError::InvalidContract {
            detail: "n_paths must be positive".to_string(),
        });
    }

    let n_chunks = n_paths.div_ceil(MC_CHUNK);
    let chunks: Vec<Result<(T, T, u64, u64), ModelError>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * MC_CHUNK;
            let end = (start + MC_CHUNK).min(n_paths);
            let mut sum = T::zero();
            let mut sum_sq = T::zero();
            let mut alive = 0u64;
            let mut dead = 0u64;
            for path in start..end {
                let mut rng = PathNormals::new(seed, path);
                let outcome =
                    drive_path(spec, state, contract.maturity, contract.rate, &mut rng, |_, _, _| {})?;
                if outcome.first_crossing.is_some() {
                    dead += 1;
                    continue;
                }
                let terminal = contract.spot * outcome.log_return.exp();
                let payoff = match contract.kind {
                    OptionKind::Call => (terminal - contract.strike).max(T::zero()),
                    OptionKind::Put => (contract.strike - terminal).max(T::zero()),
                };
                sum += payoff;
                sum_sq += payoff * payoff;
                alive += 1;
            }
            Ok((sum, sum_sq, alive, dead))
        })
        .collect();

    let mut sum = T::zero();
    let mut sum_sq = T::zero();
    let mut alive = 0u64;
    let mut dead = 0u64;
    for chunk in chunks {
        let (s, s2, a, d) = chunk?;
        sum += s;
        sum_sq += s2;
        alive += a;
        dead += d;
    }
    if dead * 2 > n_paths {
        return Err(PricingError::TooManyDeadPaths { dead, total: n_paths });
    }

    let n = T::of(alive as f64);
    let mean = sum / n;
    let variance = if alive > 1 {
        ((sum_sq - sum * mean) / (n - T::one())).max(T::zero())
    } else {
        T::zero()
    };
    let horizon = T::of(f64::from(contract.maturity));
    let discount = (-contract.rate * horizon).exp();
    Ok(McPrice {
        price: discount * mean,
        std_error: discount * (variance / n).sqrt(),
        dead_paths: dead,
        n_paths,
    })
}
