//! Derivative-free simplex minimization and finite-difference curvature.
//!
//! The minimizer is the classic reflect/expand/contract/shrink simplex
//! method. Objectives may return infinity (or NaN, which is treated as
//! infinity) to mark infeasible points; the simplex simply moves away
//! from them, which is how hard feasibility rejections are implemented
//! by callers.

use crate::real::Real;

/// Tuning knobs for [`nelder_mead`]. Tolerances are absolute: callers
/// optimize in reparameterized coordinates where unit scale is natural.
#[derive(Debug, Clone, Copy)]
pub struct NelderMeadConfig {
    pub max_iters: usize,
    /// Convergence threshold on the simplex diameter per coordinate.
    pub x_tol: f64,
    /// Convergence threshold on the value spread across vertices.
    pub f_tol: f64,
    /// Initial vertex displacement relative to each nonzero coordinate.
    pub relative_step: f64,
    /// Initial vertex displacement for zero coordinates.
    pub zero_step: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig {
            max_iters: 4000,
            x_tol: 1e-8,
            f_tol: 1e-10,
            relative_step: 0.05,
            zero_step: 0.00025,
        }
    }
}

/// Where the minimization stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimOutcome<T> {
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub evals: usize,
    pub converged: bool,
}

fn finite_or_inf<T: Real>(v: T) -> T {
    if v.is_nan() {
        T::infinity()
    } else {
        v
    }
}

/// Minimizes `f` from `start` and reports the best vertex found.
pub fn nelder_mead<T: Real>(
    mut f: impl FnMut(&[T]) -> T,
    start: &[T],
    cfg: &NelderMeadConfig,
) -> OptimOutcome<T> {
    let dim = start.len();
    assert!(dim > 0, "cannot optimize a zero-dimensional point");
    let mut evals = 0usize;
    let mut eval = |x: &[T]| {
        evals += 1;
        finite_or_inf(f(x))
    };

    let mut simplex: Vec<Vec<T>> = Vec::with_capacity(dim + 1);
    simplex.push(start.to_vec());
    for i in 0..dim {
        let mut v = start.to_vec();
        v[i] = if v[i] == T::zero() {
            T::of(cfg.zero_step)
        } else {
            v[i] * (T::one() + T::of(cfg.relative_step))
        };
        simplex.push(v);
    }
    let mut values: Vec<T> = simplex.iter().map(|v| eval(v)).collect();

    let half = T::of(0.5);
    let two = T::of(2.0);
    let x_tol = T::of(cfg.x_tol);
    let f_tol = T::of(cfg.f_tol);
    let mut iterations = 0usize;
    let mut converged = false;

    let order = |simplex: &mut Vec<Vec<T>>, values: &mut Vec<T>| {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("NaN mapped to inf"));
        *simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        *values = idx.iter().map(|&i| values[i]).collect();
    };

    order(&mut simplex, &mut values);
    while iterations < cfg.max_iters {
        let f_spread = values[dim] - values[0];
        let x_spread = (0..dim)
            .map(|j| {
                simplex[1..]
                    .iter()
                    .map(|v| (v[j] - simplex[0][j]).abs())
                    .fold(T::zero(), T::max)
            })
            .fold(T::zero(), T::max);
        if f_spread <= f_tol && x_spread <= x_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<T> = (0..dim)
            .map(|j| {
                simplex[..dim].iter().map(|v| v[j]).fold(T::zero(), |a, b| a + b)
                    / T::of(dim as f64)
            })
            .collect();
        let blend = |a: &[T], wa: T, b: &[T], wb: T| -> Vec<T> {
            a.iter().zip(b).map(|(&x, &y)| wa * x + wb * y).collect()
        };

        let reflected = blend(&centroid, two, &simplex[dim], -T::one());
        let f_reflected = eval(&reflected);
        if f_reflected < values[0] {
            let expanded = blend(&centroid, -T::one(), &reflected, two);
            let f_expanded = eval(&expanded);
            if f_expanded < f_reflected {
                simplex[dim] = expanded;
                values[dim] = f_expanded;
            } else {
                simplex[dim] = reflected;
                values[dim] = f_reflected;
            }
        } else if f_reflected < values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = f_reflected;
        } else {
            let (toward, f_toward) = if f_reflected < values[dim] {
                (reflected.clone(), f_reflected)
            } else {
                (simplex[dim].clone(), values[dim])
            };
            let contracted = blend(&centroid, half, &toward, half);
            let f_contracted = eval(&contracted);
            if f_contracted < f_toward {
                simplex[dim] = contracted;
                values[dim] = f_contracted;
            } else {
                for i in 1..=dim {
                    simplex[i] = blend(&simplex[0], half, &simplex[i], half);
                    values[i] = eval(&simplex[i]);
                }
            }
        }
        order(&mut simplex, &mut values);
    }

    OptimOutcome {
        x: simplex[0].clone(),
        value: values[0],
        iterations,
        evals,
        converged,
    }
}

fn central_hessian<T: Real>(
    f: &mut impl FnMut(&[T]) -> T,
    x: &[T],
    steps: &[T],
    scale: T,
) -> Vec<Vec<T>> {
    let dim = x.len();
    let f0 = f(x);
    let mut at = |offsets: &[(usize, T)]| {
        let mut p = x.to_vec();
        for &(i, d) in offsets {
            p[i] += d;
        }
        f(&p)
    };
    let mut hess = vec![vec![T::zero(); dim]; dim];
    for i in 0..dim {
        let si = steps[i] * scale;
        hess[i][i] = (at(&[(i, si)]) - f0 - f0 + at(&[(i, -si)])) / (si * si);
        for j in (i + 1)..dim {
            let sj = steps[j] * scale;
            let cross = at(&[(i, si), (j, sj)]) - at(&[(i, si), (j, -sj)])
                - at(&[(i, -si), (j, sj)])
                + at(&[(i, -si), (j, -sj)]);
            let value = cross / (T::of(4.0) * si * sj);
            hess[i][j] = value;
            hess[j][i] = value;
        }
    }
    hess
}

/// Central-difference Hessian of `f` at `x` with per-coordinate `steps`,
/// refined by one Richardson extrapolation (full and half step sizes),
/// which cancels the leading quadratic truncation term.
pub fn fd_hessian<T: Real>(
    mut f: impl FnMut(&[T]) -> T,
    x: &[T],
    steps: &[T],
) -> Vec<Vec<T>> {
    let full = central_hessian(&mut f, x, steps, T::one());
    let half = central_hessian(&mut f, x, steps, T::of(0.5));
    let third = T::of(3.0).recip();
    full.iter()
        .zip(&half)
        .map(|(fr, hr)| {
            fr.iter()
                .zip(hr)
                .map(|(&a, &b)| (T::of(4.0) * b - a) * third)
                .collect()
        })
        .collect()
}
