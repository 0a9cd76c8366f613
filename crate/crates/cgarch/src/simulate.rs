//! Monte Carlo path engine shared by the variance census, the simulation
//! command, and the Monte Carlo pricing cross-check.
//!
//! Every path owns an independent ChaCha substream keyed by its index, so
//! results are bit-identical for a given seed regardless of thread count or
//! scheduling order. Paths use one innovation per day: the draw for day `t`
//! produces both the day-`t` return (from the variance prevailing at `t`)
//! and the variance update into day `t + 1`.
//!
//! Storage convention for a path over `horizon` days:
//!
//! * `h[0]` is the initial variance, the one prevailing for the day-1 return.
//! * `h[t]` for `t in 1..=horizon` is the variance after `t` updates, i.e.
//!   the variance prevailing for the day-`t + 1` return.
//! * `returns[t - 1]` is the day-`t` log return, built from `h[t - 1]`.
//!
//! The census counts paths whose variance goes strictly negative at any
//! `h[t]`, `t >= 1` (the initial state is not counted). A path freezes at
//! its first crossing: no further innovations are drawn, the offending
//! variance is carried forward unchanged, and returns from that day onward
//! are unavailable (stored as NaN in materialized paths).

use crate::models::{ModelError, ModelSpec, VolState};
use crate::real::Real;
use crate::rng::PathNormals;
use rayon::prelude::*;
use thiserror::Error;

/// Scalar budget for materialized path storage (about 2 GiB of f64).
pub const STORAGE_LIMIT_SCALARS: u128 = 1 << 28;

/// Simulation failure.
#[derive(Debug, Error)]
pub enum SimError {
    /// Materializing the requested paths would need `required` scalars of
    /// storage, over the [`STORAGE_LIMIT_SCALARS`] budget. Use the streaming
    /// census instead, or reduce paths or horizon.
    #[error("path storage needs {required} scalars, over the {limit} limit")]
    Capacity { required: u128, limit: u128 },
    /// The model rejected a state or was misconfigured.
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Settings shared by all simulation entry points.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig<T> {
    /// Number of independent paths.
    pub n_paths: usize,
    /// Number of daily steps per path.
    pub horizon: u32,
    /// Base seed; path `i` draws from substream `i` of this seed.
    pub seed: u64,
    /// Per-day risk-free rate used in the return equation.
    pub rate: T,
    /// Variance state at day 1. Component models need `q` set.
    pub initial: VolState<T>,
}

/// Outcome of driving a single path to its horizon (or its death).
pub(crate) struct PathOutcome<T> {
    /// Sum of daily log returns, NaN if the path died before the horizon.
    pub log_return: T,
    /// First day `t` with `h[t] < 0`, if any.
    pub first_crossing: Option<u32>,
}

/// Runs one path, invoking `record(t, return_t, state_after_step)` for each
/// day `t in 1..=horizon`. After a negative-variance crossing the callback
/// still fires for the remaining days with a NaN return and the frozen
/// state, so materialized buffers are always fully written.
pub(crate) fn drive_path<T: Real>(
    spec: &ModelSpec<T>,
    initial: VolState<T>,
    horizon: u32,
    rate: T,
    rng: &mut PathNormals,
    mut record: impl FnMut(u32, T, VolState<T>),
) -> Result<PathOutcome<T>, ModelError> {
    let mut state = initial;
    let mut log_return = T::zero();
    for t in 1..=horizon {
        let z = rng.next_normal::<T>();
        let ret = spec.return_step(rate, state.h, z)?;
        let next = spec.step(state, z)?;
        record(t, ret, next);
        log_return += ret;
        if next.h < T::zero() {
            for frozen_t in t + 1..=horizon {
                record(frozen_t, T::nan(), next);
            }
            return Ok(PathOutcome {
                log_return: T::nan(),
                first_crossing: Some(t),
            });
        }
        state = next;
    }
    Ok(PathOutcome {
        log_return,
        first_crossing: None,
    })
}

/// Counts of negative-variance events across a batch of paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CensusResult {
    /// Number of paths simulated.
    pub n_paths: usize,
    /// Horizon the paths were driven to.
    pub horizon: u32,
    /// `first_crossing[t - 1]` is the number of paths whose variance first
    /// went negative on day `t`.
    pub first_crossing: Vec<u64>,
}

impl CensusResult {
    /// Paths that crossed on or before day `t`.
    pub fn crossed_by(&self, t: u32) -> u64 {
        let t = t.min(self.horizon) as usize;
        self.first_crossing[..t].iter().sum()
    }

    /// Total paths that ever crossed.
    pub fn n_negative(&self) -> u64 {
        self.crossed_by(self.horizon)
    }

    /// Fraction of paths that crossed on or before day `t`.
    pub fn proportion_by(&self, t: u32) -> f64 {
        self.crossed_by(t) as f64 / self.n_paths as f64
    }

    /// Fraction of paths that ever crossed.
    pub fn proportion(&self) -> f64 {
        self.proportion_by(self.horizon)
    }
}

/// Streams `config.n_paths` paths and tallies negative-variance crossings
/// without materializing any path data. Because the result is a per-day
/// first-crossing histogram, one run at the longest horizon of interest
/// answers every shorter horizon via [`CensusResult::crossed_by`].
pub fn census<T: Real>(
    spec: &ModelSpec<T>,
    config: &SimConfig<T>,
) -> Result<CensusResult, SimError> {
    if spec.uses_component() {
        spec.require_q(config.initial)?;
    }
    let horizon = config.horizon as usize;
    let hist = (0..config.n_paths)
        .into_par_iter()
        .try_fold(
            || vec![0u64; horizon],
            |mut acc, i| -> Result<Vec<u64>, ModelError> {
                let mut rng = PathNormals::new(config.seed, i as u64);
                let out = drive_path(
                    spec,
                    config.initial,
                    config.horizon,
                    config.rate,
                    &mut rng,
                    |_, _, _| {},
                )?;
                if let Some(t) = out.first_crossing {
                    acc[(t - 1) as usize] += 1;
                }
                Ok(acc)
            },
        )
        .try_reduce(
            || vec![0u64; horizon],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    *x += y;
                }
                Ok(a)
            },
        )?;
    Ok(CensusResult {
        n_paths: config.n_paths,
        horizon: config.horizon,
        first_crossing: hist,
    })
}

/// Materialized simulation output in row-major layout.
#[derive(Debug, Clone)]
pub struct PathSet<T> {
    /// Number of paths.
    pub n_paths: usize,
    /// Days per path.
    pub horizon: u32,
    /// `h` values, `horizon + 1` per path; entry 0 is the initial state.
    /// After a crossing the offending value is carried to the horizon.
    pub h: Vec<T>,
    /// Long-run component values, same layout as `h`; `None` for models
    /// without a component.
    pub q: Option<Vec<T>>,
    /// Daily log returns, `horizon` per path; NaN from the first crossing
    /// day onward.
    pub returns: Vec<T>,
    /// Per-path day of the first negative-variance crossing, if any.
    pub first_crossing: Vec<Option<u32>>,
}

impl<T: Real> PathSet<T> {
    /// Variance prevailing for the day-`t + 1` return of `path`.
    pub fn h_at(&self, path: usize, t: u32) -> T {
        self.h[path * (self.horizon as usize + 1) + t as usize]
    }

    /// Day-`t` log return of `path` (`t` is 1-based), NaN if unavailable.
    pub fn return_at(&self, path: usize, t: u32) -> T {
        self.returns[path * self.horizon as usize + t as usize - 1]
    }

    /// Sum of the daily log returns of `path`, NaN if the path died.
    pub fn total_return(&self, path: usize) -> T {
        let row = &self.returns[path * self.horizon as usize..][..self.horizon as usize];
        row.iter().fold(T::zero(), |acc, &r| acc + r)
    }
}

/// Simulates and materializes full paths. Refuses workloads whose storage
/// would exceed [`STORAGE_LIMIT_SCALARS`].
pub fn simulate_paths<T: Real>(
    spec: &ModelSpec<T>,
    config: &SimConfig<T>,
) -> Result<PathSet<T>, SimError> {
    if spec.uses_component() {
        spec.require_q(config.initial)?;
    }
    let n = config.n_paths;
    let horizon = config.horizon as usize;
    let state_len = horizon + 1;
    let per_path = state_len as u128 * if spec.uses_component() { 2 } else { 1 } + horizon as u128;
    let required = per_path * n as u128;
    if required > STORAGE_LIMIT_SCALARS {
        return Err(SimError::Capacity {
            required,
            limit: STORAGE_LIMIT_SCALARS,
        });
    }

    let mut h = vec![T::zero(); n * state_len];
    let mut returns = vec![T::zero(); n * horizon];
    let mut crossings = vec![None; n];

    let run_row = |i: usize,
                   h_row: &mut [T],
                   q_row: Option<&mut [T]>,
                   ret_row: &mut [T],
                   crossing: &mut Option<u32>|
     -> Result<(), ModelError> {
        h_row[0] = config.initial.h;
        let mut q_row = q_row;
        if let Some(q_row) = q_row.as_deref_mut() {
            q_row[0] = config.initial.q.expect("component presence checked above");
        }
        let mut rng = PathNormals::new(config.seed, i as u64);
        let out = drive_path(
            spec,
            config.initial,
            config.horizon,
            config.rate,
            &mut rng,
            |t, ret, state| {
                h_row[t as usize] = state.h;
                if let Some(q_row) = q_row.as_deref_mut() {
                    q_row[t as usize] = state.q.expect("component model emits q");
                }
                ret_row[t as usize - 1] = ret;
            },
        )?;
        *crossing = out.first_crossing;
        Ok(())
    };

    let q = if spec.uses_component() {
        let mut q = vec![T::zero(); n * state_len];
        h.par_chunks_mut(state_len)
            .zip(q.par_chunks_mut(state_len))
            .zip(returns.par_chunks_mut(horizon))
            .zip(crossings.par_iter_mut())
            .enumerate()
            .try_for_each(|(i, (((h_row, q_row), ret_row), crossing))| {
                run_row(i, h_row, Some(q_row), ret_row, crossing)
            })?;
        Some(q)
    } else {
        h.par_chunks_mut(state_len)
            .zip(returns.par_chunks_mut(horizon))
            .zip(crossings.par_iter_mut())
            .enumerate()
            .try_for_each(|(i, ((h_row, ret_row), crossing))| {
                run_row(i, h_row, None, ret_row, crossing)
            })?;
        None
    };

    Ok(PathSet {
        n_paths: n,
        horizon: config.horizon,
        h,
        q,
        returns,
        first_crossing: crossings,
    })
}
