//! Return-series loading and option-panel screening.
//!
//! Two CSV shapes come in here. A returns file has columns `date`, exactly
//! one of `adj_close` or `log_return`, and `rate` (an annualized percent;
//! blank cells forward-fill from the previous row). A panel file has
//! columns `trade_date`, `expiry_date`, `kind`, `strike`,
//! `underlying_level`, `price`, and `volume`.
//!
//! [`filter_panel`] applies five screens in a fixed order: a calendar
//! maturity window, a strict out-of-the-money requirement, a per
//! (trade date, expiry) liquidity cut to the six highest-volume strikes,
//! Wednesday quotes only, and a minimum price. The moneyness boundary
//! `K/S = 1` is dropped, liquidity means reported volume, and the
//! maturity window counts calendar days while pricing maturities count
//! trading days; each screen reports how many rows it removed.

use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pricing::OptionKind;
use crate::real::Real;

/// Calendar-day maturity window kept by the first screen.
pub const MATURITY_WINDOW_DAYS: (i64, i64) = (14, 365);

/// Strikes kept per (trade date, expiry) by the liquidity screen.
pub const STRIKES_PER_EXPIRY: usize = 6;

/// Minimum quote price kept by the last screen, in price units.
pub const PRICE_FLOOR: f64 = 3.8;

/// Trading days per year, for annualized-to-daily rate conversion.
pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

/// Ingestion failure.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("header: {detail}")]
    BadHeader { detail: String },
    #[error("line {line}: {detail}")]
    MalformedRow { line: usize, detail: String },
    #[error("line {line}: dates must be strictly increasing")]
    NonMonotoneDates { line: usize },
    #[error("no rate available on or before {date}")]
    MissingRate { date: NaiveDate },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Daily log returns with their dates and per-day rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries<T> {
    /// Date each return was realized on (the later of its two prices).
    pub dates: Vec<NaiveDate>,
    /// Log returns `ln(S_t / S_{t-1})`.
    pub returns: Vec<T>,
    /// Per-day simple rates aligned to `dates`.
    pub rates: Vec<T>,
}

impl<T: Real> ReturnSeries<T> {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    /// Last known per-day rate on or before `date`.
    pub fn rate_on_or_before(&self, date: NaiveDate) -> Result<T, IngestError> {
        let idx = self.dates.partition_point(|d| *d <= date);
        if idx == 0 {
            return Err(IngestError::MissingRate { date });
        }
        Ok(self.rates[idx - 1])
    }
}

/// One unfiltered option quote as exported by a data vendor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawOptionRow<T> {
    pub trade_date: NaiveDate,
    pub expiry_date: NaiveDate,
    pub kind: OptionKind,
    pub strike: T,
    pub underlying_level: T,
    pub price: T,
    pub volume: f64,
}

/// One quote that survived every screen, ready for valuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote<T> {
    pub trade_date: NaiveDate,
    pub expiry_date: NaiveDate,
    pub kind: OptionKind,
    pub strike: T,
    pub spot: T,
    /// Market price of the quote.
    pub price: T,
    pub volume: f64,
    /// Calendar days to expiry (the maturity-window measure).
    pub calendar_days: u32,
    /// Trading days to expiry (the pricing maturity).
    pub maturity_days: u32,
    /// Per-day simple rate; zero until joined from a rate series.
    pub rate: T,
}

/// Row counts removed by each screen, in application order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExclusionReport {
    pub input: usize,
    pub dropped_maturity: usize,
    pub dropped_moneyness: usize,
    pub dropped_liquidity: usize,
    pub dropped_weekday: usize,
    pub dropped_price_floor: usize,
    pub kept: usize,
}

impl ExclusionReport {
    /// Every input row is either kept or attributed to exactly one screen.
    pub fn accounted(&self) -> bool {
        self.input
            == self.kept
                + self.dropped_maturity
                + self.dropped_moneyness
                + self.dropped_liquidity
                + self.dropped_weekday
                + self.dropped_price_floor
    }
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    name: &str,
    line: usize,
) -> Result<T, IngestError> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse().map_err(|_| IngestError::MalformedRow {
        line,
        detail: format!("cannot parse {name} from {raw:?}"),
    })
}

fn line_of(record: &csv::StringRecord, fallback: usize) -> usize {
    record.position().map_or(fallback, |p| p.line() as usize)
}

fn header_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name))
}

/// Loads a returns CSV: log returns from `adj_close` (or verbatim from
/// `log_return`), with annualized percent rates converted to per-day
/// units and blank rate cells forward-filled.
pub fn load_returns<T: Real>(path: &Path) -> Result<ReturnSeries<T>, IngestError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let date_idx = header_index(&headers, "date").ok_or_else(|| IngestError::BadHeader {
        detail: "missing column: date".to_string(),
    })?;
    let close_idx = header_index(&headers, "adj_close");
    let return_idx = header_index(&headers, "log_return");
    let rate_idx = header_index(&headers, "rate").ok_or_else(|| IngestError::BadHeader {
        detail: "missing column: rate".to_string(),
    })?;
    match (close_idx, return_idx) {
        (None, None) => {
            return Err(IngestError::BadHeader {
                detail: "need a price column: adj_close or log_return".to_string(),
            })
        }
        (Some(_), Some(_)) => {
            return Err(IngestError::BadHeader {
                detail: "ambiguous price columns: both adj_close and log_return present"
                    .to_string(),
            })
        }
        _ => {}
    }

    let mut dates = Vec::new();
    let mut returns = Vec::new();
    let mut rates = Vec::new();
    let mut previous_date: Option<NaiveDate> = None;
    let mut previous_close: Option<T> = None;
    let mut previous_rate: Option<T> = None;
    let per_day = 100.0 * TRADING_DAYS_PER_YEAR;

    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = line_of(&record, i + 2);
        let date: NaiveDate = parse_field(&record, date_idx, "date", line)?;
        if previous_date.is_some_and(|prev| date <= prev) {
            return Err(IngestError::NonMonotoneDates { line });
        }

        let rate_raw = record.get(rate_idx).unwrap_or("").trim();
        let rate = if rate_raw.is_empty() {
            previous_rate.ok_or_else(|| IngestError::MalformedRow {
                line,
                detail: "rate missing with no previous value to forward-fill".to_string(),
            })?
        } else {
            let annual_pct: f64 = parse_field(&record, rate_idx, "rate", line)?;
            T::of(annual_pct / per_day)
        };
        previous_rate = Some(rate);

        match (close_idx, return_idx) {
            (Some(ci), _) => {
                let close: f64 = parse_field(&record, ci, "adj_close", line)?;
                if !(close.is_finite() && close > 0.0) {
                    return Err(IngestError::MalformedRow {
                        line,
                        detail: format!("adj_close must be positive and finite, got {close}"),
                    });
                }
                let close = T::of(close);
                if let Some(prev) = previous_close {
                    dates.push(date);
                    returns.push((close / prev).ln());
                    rates.push(rate);
                }
                previous_close = Some(close);
            }
            (_, Some(ri)) => {
                let ret: f64 = parse_field(&record, ri, "log_return", line)?;
                if !ret.is_finite() {
                    return Err(IngestError::MalformedRow {
                        line,
                        detail: format!("log_return must be finite, got {ret}"),
                    });
                }
                dates.push(date);
                returns.push(T::of(ret));
                rates.push(rate);
            }
            (None, None) => unreachable!("header check rejects this shape"),
        }
        previous_date = Some(date);
    }
    Ok(ReturnSeries { dates, returns, rates })
}

fn parse_kind(raw: &str, line: usize) -> Result<OptionKind, IngestError> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "call" | "c" => Ok(OptionKind::Call),
        "put" | "p" => Ok(OptionKind::Put),
        other => Err(IngestError::MalformedRow {
            line,
            detail: format!("kind must be call or put, got {other:?}"),
        }),
    }
}

/// Loads a raw option-panel CSV.
pub fn load_panel<T: Real>(path: &Path) -> Result<Vec<RawOptionRow<T>>, IngestError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let idx = |name: &str| {
        header_index(&headers, name).ok_or_else(|| IngestError::BadHeader {
            detail: format!("missing column: {name}"),
        })
    };
    let trade_idx = idx("trade_date")?;
    let expiry_idx = idx("expiry_date")?;
    let kind_idx = idx("kind")?;
    let strike_idx = idx("strike")?;
    let level_idx = idx("underlying_level")?;
    let price_idx = idx("price")?;
    let volume_idx = idx("volume")?;

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = line_of(&record, i + 2);
        let strike: f64 = parse_field(&record, strike_idx, "strike", line)?;
        let level: f64 = parse_field(&record, level_idx, "underlying_level", line)?;
        let price: f64 = parse_field(&record, price_idx, "price", line)?;
        let volume: f64 = parse_field(&record, volume_idx, "volume", line)?;
        if !(strike.is_finite() && strike > 0.0 && level.is_finite() && level > 0.0) {
            return Err(IngestError::MalformedRow {
                line,
                detail: format!("strike and underlying_level must be positive, got {strike} and {level}"),
            });
        }
        if !(price.is_finite() && price >= 0.0) {
            return Err(IngestError::MalformedRow {
                line,
                detail: format!("price must be nonnegative, got {price}"),
            });
        }
        if !(volume.is_finite() && volume >= 0.0) {
            return Err(IngestError::MalformedRow {
                line,
                detail: format!("volume must be nonnegative, got {volume}"),
            });
        }
        rows.push(RawOptionRow {
            trade_date: parse_field(&record, trade_idx, "trade_date", line)?,
            expiry_date: parse_field(&record, expiry_idx, "expiry_date", line)?,
            kind: parse_kind(record.get(kind_idx).unwrap_or(""), line)?,
            strike: T::of(strike),
            underlying_level: T::of(level),
            price: T::of(price),
            volume,
        });
    }
    Ok(rows)
}

/// Trading days in `(from, to]`, counting Monday through Friday.
pub fn trading_days_between(from: NaiveDate, to: NaiveDate) -> u32 {
    let total = (to - from).num_days();
    if total <= 0 {
        return 0;
    }
    let mut count = total / 7 * 5;
    for offset in 1..=(total % 7) {
        let weekday = (from + chrono::Days::new(offset as u64)).weekday();
        if weekday != Weekday::Sat && weekday != Weekday::Sun {
            count += 1;
        }
    }
    count as u32
}

pub(crate) fn calendar_days<T>(row: &RawOptionRow<T>) -> i64 {
    (row.expiry_date - row.trade_date).num_days()
}

pub(crate) fn within_maturity_window<T>(row: &RawOptionRow<T>) -> bool {
    let days = calendar_days(row);
    (MATURITY_WINDOW_DAYS.0..=MATURITY_WINDOW_DAYS.1).contains(&days)
}

pub(crate) fn strictly_otm<T: Real>(row: &RawOptionRow<T>) -> bool {
    let moneyness = row.strike / row.underlying_level;
    match row.kind {
        OptionKind::Call => moneyness > T::one(),
        OptionKind::Put => moneyness < T::one(),
    }
}

pub(crate) fn on_wednesday<T>(row: &RawOptionRow<T>) -> bool {
    row.trade_date.weekday() == Weekday::Wed
}

pub(crate) fn above_price_floor<T: Real>(row: &RawOptionRow<T>) -> bool {
    row.price >= T::of(PRICE_FLOOR)
}

/// Ranks a liquidity group: highest volume first, ties broken by
/// closeness of `K/S` to one, then by lower strike.
fn liquidity_order<T: Real>(a: &RawOptionRow<T>, b: &RawOptionRow<T>) -> std::cmp::Ordering {
    let dist = |row: &RawOptionRow<T>| (row.strike / row.underlying_level - T::one()).abs();
    b.volume
        .partial_cmp(&a.volume)
        .expect("volumes validated finite")
        .then(dist(a).partial_cmp(&dist(b)).expect("strikes validated finite"))
        .then(a.strike.partial_cmp(&b.strike).expect("strikes validated finite"))
}

/// Applies the five screens in order and reports per-screen drop counts.
pub fn filter_panel<T: Real>(rows: &[RawOptionRow<T>]) -> (Vec<OptionQuote<T>>, ExclusionReport) {
    let mut report = ExclusionReport {
        input: rows.len(),
        dropped_maturity: 0,
        dropped_moneyness: 0,
        dropped_liquidity: 0,
        dropped_weekday: 0,
        dropped_price_floor: 0,
        kept: 0,
    };

    let stage1: Vec<&RawOptionRow<T>> = rows.iter().filter(|r| within_maturity_window(r)).collect();
    report.dropped_maturity = rows.len() - stage1.len();

    let stage2: Vec<&RawOptionRow<T>> =
        stage1.iter().copied().filter(|r| strictly_otm(r)).collect();
    report.dropped_moneyness = stage1.len() - stage2.len();

    // Liquidity cut per (trade date, expiry). Groups keep first-seen order
    // and rows inside a group are re-sorted, so the output is independent
    // of how the vendor ordered the file within a group.
    let mut groups: Vec<((NaiveDate, NaiveDate), Vec<&RawOptionRow<T>>)> = Vec::new();
    for row in &stage2 {
        let key = (row.trade_date, row.expiry_date);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(row),
            None => groups.push((key, vec![row])),
        }
    }
    let mut stage3: Vec<&RawOptionRow<T>> = Vec::new();
    for (_, mut members) in groups {
        members.sort_by(|a, b| liquidity_order(a, b));
        members.truncate(STRIKES_PER_EXPIRY);
        stage3.extend(members);
    }
    report.dropped_liquidity = stage2.len() - stage3.len();

    let stage4: Vec<&RawOptionRow<T>> =
        stage3.iter().copied().filter(|r| on_wednesday(r)).collect();
    report.dropped_weekday = stage3.len() - stage4.len();

    let stage5: Vec<&RawOptionRow<T>> =
        stage4.iter().copied().filter(|r| above_price_floor(r)).collect();
    report.dropped_price_floor = stage4.len() - stage5.len();
    report.kept = stage5.len();

    let quotes = stage5
        .into_iter()
        .map(|row| OptionQuote {
            trade_date: row.trade_date,
            expiry_date: row.expiry_date,
            kind: row.kind,
            strike: row.strike,
            spot: row.underlying_level,
            price: row.price,
            volume: row.volume,
            calendar_days: calendar_days(row) as u32,
            maturity_days: trading_days_between(row.trade_date, row.expiry_date),
            rate: T::zero(),
        })
        .collect();
    (quotes, report)
}

/// Fills each quote's per-day rate from the last series rate on or before
/// its trade date.
pub fn join_rates<T: Real>(
    quotes: &mut [OptionQuote<T>],
    series: &ReturnSeries<T>,
) -> Result<(), IngestError> {
    for quote in quotes.iter_mut() {
        quote.rate = series.rate_on_or_before(quote.trade_date)?;
    }
    Ok(())
}
