//! Black-Scholes implied volatilities and panel-level IVRMSE scoring.
//!
//! Model prices and market quotes are both inverted through the same
//! Black-Scholes formula, so IVRMSE compares the two prices on a common
//! volatility scale. Quote maturities count trading days and carry
//! per-day rates; inversion annualizes both with 252 trading days per
//! year, which keeps the discount factor identical to the one used when
//! the price was produced.
//!
//! A record ends in one of three states: `Ok` (both inversions solved),
//! `ModelDiverged` (the transform refused to price the contract), or
//! `IvUnsolvable` (a price outside the no-arbitrage band, or a model
//! price below the reporting floor, where inversion is numerically
//! meaningless and is not attempted). Any diverged record poisons the
//! panel IVRMSE to NaN; unsolvable records are only excluded.

use std::collections::HashMap;

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use crate::ingest::{OptionQuote, TRADING_DAYS_PER_YEAR};
use crate::models::{ModelSpec, VolState};
use crate::normal::{norm_cdf, norm_pdf};
use crate::pricing::{price_contracts, Contract, OptionKind, PriceResult, PricingError};
use crate::quad::QuadConfig;
use crate::real::Real;

/// Model prices below this level are not inverted: the quote screens
/// already exclude market prices this small, and inversion down there
/// says more about the solver than about fit.
pub const MODEL_PRICE_FLOOR: f64 = 3.8;

/// Volatility bracket the solver works inside, in annualized units.
const IV_BRACKET: (f64, f64) = (1e-9, 5.0);

/// Convergence tolerance on the volatility itself.
const IV_TOL: f64 = 1e-8;

const IV_MAX_ITER: usize = 128;

/// Panel evaluation failure.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("panel has no records to score")]
    EmptyPanel,
    #[error("no variance state for trade date {date}")]
    MissingState { date: NaiveDate },
    #[error(transparent)]
    Pricing(#[from] PricingError),
}

/// How far one quote made it through valuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IvStatus {
    /// Both market and model implied volatilities solved.
    Ok,
    /// The pricing transform diverged for this contract.
    ModelDiverged,
    /// A price was outside the invertible range, or the model price fell
    /// below [`MODEL_PRICE_FLOOR`].
    IvUnsolvable,
}

/// One scored quote. Fields that could not be computed hold NaN.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IvRecord<T> {
    pub quote: OptionQuote<T>,
    pub model_price: T,
    pub iv_market: T,
    pub iv_model: T,
    pub status: IvStatus,
}

/// Panel-level score with its population breakdown.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IvrmseSummary<T> {
    /// Root mean squared implied-volatility gap over `Ok` records, in
    /// volatility percentage points; NaN when any record diverged.
    pub ivrmse: T,
    pub n_total: usize,
    pub n_ok: usize,
    pub n_diverged: usize,
    pub n_unsolvable: usize,
    /// Unsolvable records whose model price priced but fell below
    /// [`MODEL_PRICE_FLOOR`]; a subset of `n_unsolvable`.
    pub n_below_floor: usize,
}

/// Black-Scholes price with annualized volatility, maturity, and rate.
///
/// Zero volatility or zero maturity degenerates to discounted forward
/// intrinsic value.
pub fn bs_price<T: Real>(spot: T, strike: T, sigma: T, tau: T, rate: T, kind: OptionKind) -> T {
    let discounted_strike = strike * (-rate * tau).exp();
    let width = sigma * tau.max(T::zero()).sqrt();
    if !(width > T::zero()) {
        let forward_gap = spot - discounted_strike;
        return match kind {
            OptionKind::Call => forward_gap.max(T::zero()),
            OptionKind::Put => (-forward_gap).max(T::zero()),
        };
    }
    let half = T::of(0.5);
    let d1 = ((spot / strike).ln() + (rate + half * sigma * sigma) * tau) / width;
    let d2 = d1 - width;
    match kind {
        OptionKind::Call => spot * norm_cdf(d1) - discounted_strike * norm_cdf(d2),
        OptionKind::Put => discounted_strike * norm_cdf(-d2) - spot * norm_cdf(-d1),
    }
}

/// Black-Scholes sensitivity to `sigma`; zero in the degenerate cases.
pub fn bs_vega<T: Real>(spot: T, strike: T, sigma: T, tau: T, rate: T) -> T {
    let sqrt_tau = tau.max(T::zero()).sqrt();
    let width = sigma * sqrt_tau;
    if !(width > T::zero()) {
        return T::zero();
    }
    let half = T::of(0.5);
    let d1 = ((spot / strike).ln() + (rate + half * sigma * sigma) * tau) / width;
    spot * sqrt_tau * norm_pdf(d1)
}

/// Inverts [`bs_price`] in `sigma`. Returns `None` when `price` sits
/// outside the open no-arbitrage band or beyond the solver bracket.
///
/// Newton steps are clipped to a maintained bisection bracket, so the
/// iteration cannot escape `[1e-9, 5]` and always shrinks the bracket.
pub fn implied_vol<T: Real>(
    price: T,
    spot: T,
    strike: T,
    tau: T,
    rate: T,
    kind: OptionKind,
) -> Option<T> {
    if !(price.is_finite() && spot > T::zero() && strike > T::zero() && tau > T::zero()) {
        return None;
    }
    let discounted_strike = strike * (-rate * tau).exp();
    let (lower, upper) = match kind {
        OptionKind::Call => ((spot - discounted_strike).max(T::zero()), spot),
        OptionKind::Put => ((discounted_strike - spot).max(T::zero()), discounted_strike),
    };
    if !(price > lower && price < upper) {
        return None;
    }
    let (mut lo, mut hi) = (T::of(IV_BRACKET.0), T::of(IV_BRACKET.1));
    if bs_price(spot, strike, lo, tau, rate, kind) > price
        || bs_price(spot, strike, hi, tau, rate, kind) < price
    {
        return None;
    }

    let half = T::of(0.5);
    let tol = T::of(IV_TOL);
    let mut sigma = half * (lo + hi);
    for _ in 0..IV_MAX_ITER {
        let diff = bs_price(spot, strike, sigma, tau, rate, kind) - price;
        if diff > T::zero() {
            hi = sigma;
        } else {
            lo = sigma;
        }
        let newton = sigma - diff / bs_vega(spot, strike, sigma, tau, rate);
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            half * (lo + hi)
        };
        if (next - sigma).abs() <= tol {
            return Some(next);
        }
        sigma = next;
    }
    Some(sigma)
}

fn annualized<T: Real>(quote: &OptionQuote<T>) -> (T, T) {
    let per_year = T::of(TRADING_DAYS_PER_YEAR);
    let tau = T::of(quote.maturity_days as f64) / per_year;
    (tau, quote.rate * per_year)
}

/// Implied volatility of `price` under a quote's own terms.
pub fn quote_implied_vol<T: Real>(price: T, quote: &OptionQuote<T>) -> Option<T> {
    let (tau, rate) = annualized(quote);
    implied_vol(price, quote.spot, quote.strike, tau, rate, quote.kind)
}

fn build_record<T: Real>(
    quote: &OptionQuote<T>,
    priced: Result<PriceResult<T>, PricingError>,
) -> Result<IvRecord<T>, EvalError> {
    let nan = T::nan();
    let iv_market = quote_implied_vol(quote.price, quote);
    let record = |model_price, iv_model: Option<T>, status| IvRecord {
        quote: *quote,
        model_price,
        iv_market: iv_market.unwrap_or(nan),
        iv_model: iv_model.unwrap_or(nan),
        status,
    };
    match priced {
        Err(PricingError::Diverged { .. }) | Err(PricingError::QuadratureFailed { .. }) => {
            Ok(record(nan, None, IvStatus::ModelDiverged))
        }
        Err(PricingError::InvalidContract { .. }) => Ok(record(nan, None, IvStatus::IvUnsolvable)),
        Err(other) => Err(EvalError::Pricing(other)),
        Ok(priced) => {
            let model_price = priced.price;
            if model_price < T::of(MODEL_PRICE_FLOOR) {
                return Ok(record(model_price, None, IvStatus::IvUnsolvable));
            }
            let iv_model = quote_implied_vol(model_price, quote);
            let status = if iv_market.is_some() && iv_model.is_some() {
                IvStatus::Ok
            } else {
                IvStatus::IvUnsolvable
            };
            Ok(record(model_price, iv_model, status))
        }
    }
}

/// Prices every quote under its trade date's variance state and inverts
/// both sides to implied volatility. Records come back in quote order.
///
/// Per-contract divergence and inversion failures land in the record
/// status; configuration-level failures (wrong measure, invalid model)
/// abort the whole evaluation.
pub fn evaluate_panel<T: Real>(
    spec: &ModelSpec<T>,
    states: &HashMap<NaiveDate, VolState<T>>,
    quotes: &[OptionQuote<T>],
    cfg: QuadConfig<T>,
) -> Result<Vec<IvRecord<T>>, EvalError> {
    let mut order: Vec<NaiveDate> = Vec::new();
    let mut groups: HashMap<NaiveDate, Vec<usize>> = HashMap::new();
    for (i, quote) in quotes.iter().enumerate() {
        groups
            .entry(quote.trade_date)
            .or_insert_with(|| {
                order.push(quote.trade_date);
                Vec::new()
            })
            .push(i);
    }

    let mut records: Vec<Option<IvRecord<T>>> = vec![None; quotes.len()];
    for date in order {
        let indices = &groups[&date];
        let state = *states.get(&date).ok_or(EvalError::MissingState { date })?;
        let contracts: Vec<Contract<T>> = indices
            .iter()
            .map(|&i| {
                let q = &quotes[i];
                Contract {
                    strike: q.strike,
                    maturity: q.maturity_days,
                    kind: q.kind,
                    spot: q.spot,
                    rate: q.rate,
                }
            })
            .collect();
        for (&i, priced) in indices.iter().zip(price_contracts(spec, state, &contracts, cfg)) {
            records[i] = Some(build_record(&quotes[i], priced)?);
        }
    }
    Ok(records
        .into_iter()
        .map(|r| r.expect("every quote belongs to exactly one date group"))
        .collect())
}

/// Scores a batch of records.
///
/// Errors on an empty batch and on a batch where nothing priced at all;
/// returns NaN whenever any record diverged, since a partial average
/// would silently overstate fit exactly where the model breaks.
pub fn ivrmse<T: Real>(records: &[IvRecord<T>]) -> Result<IvrmseSummary<T>, EvalError> {
    let mut summary = IvrmseSummary {
        ivrmse: T::nan(),
        n_total: records.len(),
        n_ok: 0,
        n_diverged: 0,
        n_unsolvable: 0,
        n_below_floor: 0,
    };
    let mut sum_sq = T::zero();
    for record in records {
        match record.status {
            IvStatus::Ok => {
                summary.n_ok += 1;
                let gap = record.iv_market - record.iv_model;
                sum_sq += gap * gap;
            }
            IvStatus::ModelDiverged => summary.n_diverged += 1,
            IvStatus::IvUnsolvable => {
                summary.n_unsolvable += 1;
                if record.model_price.is_finite()
                    && record.model_price < T::of(MODEL_PRICE_FLOOR)
                {
                    summary.n_below_floor += 1;
                }
            }
        }
    }
    if records.is_empty() || (summary.n_ok == 0 && summary.n_diverged == 0) {
        return Err(EvalError::EmptyPanel);
    }
    if summary.n_diverged == 0 {
        summary.ivrmse = T::of(100.0) * (sum_sq / T::of(summary.n_ok as f64)).sqrt();
    }
    Ok(summary)
}
