//! Adaptive Gauss-Kronrod quadrature over fallible integrands.
//!
//! A 7-15 point pair drives interval bisection; semi-infinite domains are
//! handled by marching fixed blocks until the integrand magnitude stays below
//! a quiet-tail threshold for a whole block, or a hard cap is reached.

use crate::real::Real;

// 15-point Kronrod abscissae (positive half, descending) and weights, with
// the embedded 7-point Gauss weights on the odd-indexed abscissae.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_17,
    0.207_784_955_007_898_47,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_69,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

/// Tolerances and limits for one adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig<T> {
    /// Absolute tolerance on the integral over the requested interval.
    pub abs_tol: T,
    /// Bisection budget; exceeding it marks the result as not converged.
    pub max_panels: usize,
}

impl<T: Real> Default for QuadConfig<T> {
    fn default() -> Self {
        QuadConfig { abs_tol: T::of(1e-10), max_panels: 4096 }
    }
}

/// Integral value with diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult<T> {
    pub value: T,
    pub error_estimate: T,
    pub evals: usize,
    /// Largest integrand magnitude sampled anywhere in the interval.
    pub max_abs_sample: T,
    pub converged: bool,
}

struct Panel<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

fn kronrod_panel<T: Real, E>(
    f: &mut impl FnMut(T) -> Result<T, E>,
    a: T,
    b: T,
    max_abs: &mut T,
) -> Result<(T, T), E> {
    let half = T::of(0.5);
    let c = (a + b) * half;
    let hl = (b - a) * half;
    let fc = f(c)?;
    *max_abs = max_abs.max(fc.abs());
    let mut k15 = T::of(WGK[7]) * fc;
    let mut g7 = T::of(WG[3]) * fc;
    for (j, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate().take(7) {
        let dx = hl * T::of(x);
        let f1 = f(c - dx)?;
        let f2 = f(c + dx)?;
        *max_abs = max_abs.max(f1.abs()).max(f2.abs());
        k15 += T::of(wk) * (f1 + f2);
        if j % 2 == 1 {
            g7 += T::of(WG[j / 2]) * (f1 + f2);
        }
    }
    Ok((k15 * hl, (k15 - g7).abs() * hl))
}

/// Adaptively integrates `f` over `[a, b]`.
///
/// The first integrand error aborts the whole integration.
pub fn integrate<T: Real, E>(
    f: &mut impl FnMut(T) -> Result<T, E>,
    a: T,
    b: T,
    cfg: &QuadConfig<T>,
) -> Result<QuadResult<T>, E> {
    let mut max_abs = T::zero();
    let mut evals = 0usize;
    let (v0, e0) = kronrod_panel(f, a, b, &mut max_abs)?;
    evals += 15;
    let mut stack = vec![Panel { a, b, value: v0, error: e0 }];
    let mut done_value = T::zero();
    let mut done_error = T::zero();
    let mut panels = 1usize;
    let mut converged = true;
    let total_len = b - a;
    while let Some(p) = stack.pop() {
        let local_tol = cfg.abs_tol * ((p.b - p.a) / total_len).abs();
        if p.error <= local_tol.max(T::of(1e-300)) {
            done_value += p.value;
            done_error += p.error;
            continue;
        }
        if panels >= cfg.max_panels {
            converged = false;
            done_value += p.value;
            done_error += p.error;
            continue;
        }
        let mid = (p.a + p.b) * T::of(0.5);
        let (lv, le) = kronrod_panel(f, p.a, mid, &mut max_abs)?;
        let (rv, re) = kronrod_panel(f, mid, p.b, &mut max_abs)?;
        evals += 30;
        panels += 1;
        stack.push(Panel { a: p.a, b: mid, value: lv, error: le });
        stack.push(Panel { a: mid, b: p.b, value: rv, error: re });
    }
    Ok(QuadResult {
        value: done_value,
        error_estimate: done_error,
        evals,
        max_abs_sample: max_abs,
        converged,
    })
}

/// Result of a semi-infinite integration with a quiet-tail stopping rule.
#[derive(Debug, Clone, Copy)]
pub struct TailResult<T> {
    pub value: T,
    pub error_estimate: T,
    pub evals: usize,
    /// Upper integration limit actually used.
    pub cutoff: T,
    /// Whether the hard cap was reached before the tail went quiet.
    pub hit_cap: bool,
    pub converged: bool,
}

/// Integrates `f` from `a` towards infinity, stopping after the first block
/// on which every sampled magnitude is below `tail_tol`, or at `cap`.
pub fn integrate_to_quiet_tail<T: Real, E>(
    f: &mut impl FnMut(T) -> Result<T, E>,
    a: T,
    tail_tol: T,
    cap: T,
    cfg: &QuadConfig<T>,
) -> Result<TailResult<T>, E> {
    let mut lo = a;
    let mut width = T::of(20.0);
    let width_max = T::of(400.0);
    let mut value = T::zero();
    let mut error = T::zero();
    let mut evals = 0usize;
    let mut converged = true;
    loop {
        let hi = (lo + width).min(cap);
        let block = integrate(f, lo, hi, cfg)?;
        value += block.value;
        error += block.error_estimate;
        evals += block.evals;
        converged &= block.converged;
        if block.max_abs_sample < tail_tol {
            return Ok(TailResult { value, error_estimate: error, evals, cutoff: hi, hit_cap: false, converged });
        }
        if hi >= cap {
            return Ok(TailResult { value, error_estimate: error, evals, cutoff: cap, hit_cap: true, converged });
        }
        lo = hi;
        width = (width * T::of(1.6)).min(width_max);
    }
}
