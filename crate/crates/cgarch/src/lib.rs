//! Component GARCH models with closed-form characteristic functions.
//!
//! The crate covers four discrete-time variance dynamics (`Hn`, `Cjow`, `Op`,
//! `Cpc`), Monte Carlo simulation with a negative-variance census, moment
//! generating function recursions, Gil-Pelaez option pricing, maximum
//! likelihood estimation on daily return series, and implied-volatility
//! scoring of option panels.
//!
//! Core numerics are generic over the scalar type through [`real::Real`];
//! the crate root re-exports `f64` aliases for everyday use.

pub mod estimate;
pub mod fixtures;
pub mod ingest;
pub mod mgf;
pub mod models;
pub mod normal;
pub mod optim;
pub mod options_eval;
pub mod pricing;
pub mod quad;
pub mod real;
pub mod rng;
pub mod simulate;

pub use real::Real;

/// `f64` model specification, the working type for estimation and the CLI.
pub type ModelSpec = models::ModelSpec<f64>;
/// `f64` variance state.
pub type VolState = models::VolState<f64>;
/// `f64` stationary moments.
pub type StationaryMoments = models::StationaryMoments<f64>;
/// `f64` option contract.
pub type Contract = pricing::Contract<f64>;
