//! Affine moment-generating-function engine.
//!
//! For every family the conditional expectation `E[S_T^u | F_t]` has the
//! affine form `exp(u ln S_t + A + B1 (h - q) + B2 q)` in the variance
//! state prevailing at `t + 1`, with complex coefficients obtained by a
//! backward recursion from zero terminal values. Each recursion step
//! integrates the one-day Gaussian innovation in closed form; the identity
//! used is valid only while `Re(1 - 2a) > 0` for the quadratic coefficient
//! `a` collected in front of `z^2`.
//!
//! Two distinct failure modes are surfaced:
//!
//! * the recursion itself leaves the valid region (`Re(1 - 2a) <= 0`), in
//!   which case it aborts with the offending step rather than pushing a
//!   complex logarithm through a negative-real-part argument, and
//! * the recursion stays formally valid but the evaluated transform breaks
//!   the modulus bound `|E[S_T^u]| <= E[S_T^{Re u}]` that any genuine
//!   expectation must satisfy. This is the fingerprint of dynamics whose
//!   variance can turn negative: the probabilistic object no longer
//!   exists, and the formal recursion produces astronomically large
//!   values. [`mgf`] checks the bound (with a 10x margin for roundoff)
//!   and reports such evaluations as diverged instead of returning them.
//!
//! The recursion honors the measure tag of the spec: the return drift is
//! `lambda h` under the physical measure and `-h/2` under the risk-neutral
//! one, with the stored leverage parameters used as-is.

use crate::models::{lossy, FamilyParams, ModelError, ModelSpec, VolState};
use crate::real::Real;
use num_complex::Complex;
use thiserror::Error;

/// Guard band for the validity precondition `Re(1 - 2a) > 0`.
const GUARD_BAND: f64 = 1e-12;

/// Log-scale margin for the modulus bound check (a factor of 10).
pub(crate) const BOUND_MARGIN: f64 = std::f64::consts::LN_10;

/// MGF evaluation failure.
#[derive(Debug, Clone, Error)]
pub enum MgfError {
    /// The Gaussian step integral stopped converging at `step` (counted
    /// backward from maturity, 1-based).
    #[error("coefficient recursion left the valid region at step {step}")]
    Diverged { step: u32 },
    /// The transform needs a positive spot to take its logarithm.
    #[error("spot must be positive, got {spot}")]
    NonPositiveSpot { spot: f64 },
    /// The model rejected the state or was misconfigured.
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Coefficients `(A, B1, B2)` of the affine transform exponent after some
/// number of backward steps. `b2` is zero for single-component models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoeffTriple<T> {
    pub a: Complex<T>,
    pub b1: Complex<T>,
    pub b2: Complex<T>,
}

impl<T: Real> CoeffTriple<T> {
    fn zero() -> Self {
        let z = Complex::new(T::zero(), T::zero());
        CoeffTriple { a: z, b1: z, b2: z }
    }

    /// Exponent of the transform at a given state and log spot.
    fn exponent(&self, u: Complex<T>, log_spot: T, h: T, q: T) -> Complex<T> {
        u * log_spot + self.a + self.b1 * (h - q) + self.b2 * q
    }
}

/// One MGF evaluation. `diverged` carries the recursion step at which the
/// evaluation stopped being trustworthy; when it is set (or when the
/// exponential overflows) `value` is absent rather than garbage.
#[derive(Debug, Clone, Copy)]
pub struct MgfResult<T> {
    /// `E[S_T^u | state]`, present only for trustworthy evaluations.
    pub value: Option<Complex<T>>,
    /// Number of daily steps the recursion ran.
    pub steps: u32,
    /// Step index of the failure: the guard step for a recursion abort, or
    /// the final step for a modulus-bound violation or overflow.
    pub diverged: Option<u32>,
}

impl<T> MgfResult<T> {
    pub fn is_diverged(&self) -> bool {
        self.diverged.is_some()
    }
}

/// Runs the backward coefficient recursion for `n_steps` days at transform
/// argument `u` with per-day rate `rate`.
pub fn coefficients<T: Real>(
    spec: &ModelSpec<T>,
    u: Complex<T>,
    n_steps: u32,
    rate: T,
) -> Result<CoeffTriple<T>, MgfError> {
    let mut c = CoeffTriple::zero();
    let guard = T::of(GUARD_BAND);
    let half = T::of(0.5);
    let two = T::of(2.0);
    let one = Complex::new(T::one(), T::zero());
    let u_delta = u * spec.drift_coeff();
    let u_rate = u * rate;

    for step in 1..=n_steps {
        let (gauss, theta) = match &spec.params {
            FamilyParams::Hn(p) => (c.b1 * p.alpha, c.b1 * (p.alpha * p.gamma1) - u * half),
            FamilyParams::Cjow(p) | FamilyParams::Op(p) | FamilyParams::Cpc(p) => (
                c.b1 * p.alpha + c.b2 * p.varphi,
                c.b1 * (p.alpha * p.gamma1) + c.b2 * (p.varphi * p.gamma2) - u * half,
            ),
        };
        let valid = one - gauss * two;
        if valid.re <= guard {
            return Err(MgfError::Diverged { step });
        }
        let two_q = theta * theta / valid * two;
        let log_term = valid.ln() * -half;

        match &spec.params {
            FamilyParams::Hn(p) => {
                c.a = c.a + u_rate + c.b1 * p.omega + log_term;
                c.b1 = u_delta + c.b1 * (p.beta_tilde + p.alpha * p.gamma1 * p.gamma1) + two_q;
            }
            FamilyParams::Cjow(p) => {
                c.a = c.a + u_rate + c.b2 * p.omega - gauss + log_term;
                c.b1 = u_delta + c.b1 * p.beta_tilde + two_q;
                c.b2 = u_delta + c.b2 * p.rho + two_q;
            }
            FamilyParams::Op(p) => {
                c.a = c.a + u_rate + (c.b2 - c.b1) * p.omega + log_term;
                let spill = p.varphi * p.gamma2 * p.gamma2;
                c.b1 = u_delta + c.b1 * p.beta_tilde + c.b2 * spill + two_q;
                c.b2 = u_delta + c.b2 * (p.rho + spill) + two_q;
            }
            FamilyParams::Cpc(p) => {
                c.a = c.a + u_rate + c.b2 * p.omega + log_term;
                let spill = p.varphi * p.gamma2 * p.gamma2;
                c.b1 = u_delta
                    + c.b1 * (p.beta_tilde + p.alpha * p.gamma1 * p.gamma1)
                    + c.b2 * spill
                    + two_q;
                c.b2 = u_delta + c.b2 * (p.rho + spill) + two_q;
            }
        }
    }
    Ok(c)
}

/// Exponent of the transform: `u ln(spot) + A + B1 (h - q) + B2 q`,
/// where the state is the one prevailing at the step after the valuation
/// date. Returns the raw exponent with no validity screening beyond the
/// recursion guard; use [`mgf`] for screened values.
pub fn log_mgf<T: Real>(
    spec: &ModelSpec<T>,
    u: Complex<T>,
    state: VolState<T>,
    spot: T,
    n_steps: u32,
    rate: T,
) -> Result<Complex<T>, MgfError> {
    if !state.is_finite() {
        return Err(MgfError::Model(ModelError::NonFiniteState {
            h: lossy(state.h),
            q: state.q.map(lossy),
        }));
    }
    if !(spot > T::zero()) {
        return Err(MgfError::NonPositiveSpot { spot: lossy(spot) });
    }
    let q = if spec.uses_component() {
        spec.require_q(state)?
    } else {
        T::zero()
    };
    let c = coefficients(spec, u, n_steps, rate)?;
    Ok(c.exponent(u, spot.ln(), state.h, q))
}

/// Evaluates `E[S_T^u | state]` with divergence screening.
///
/// The value is withheld (and the result marked diverged) when the
/// recursion aborts, when the modulus bound `|f(u)| <= 10 f(Re u)` fails,
/// or when the exponential is not finite. Errors are reserved for
/// misconfiguration; divergence is data.
pub fn mgf<T: Real>(
    spec: &ModelSpec<T>,
    u: Complex<T>,
    state: VolState<T>,
    spot: T,
    n_steps: u32,
    rate: T,
) -> Result<MgfResult<T>, MgfError> {
    let diverged_at = |step| MgfResult { value: None, steps: n_steps, diverged: Some(step) };
    let exponent = match log_mgf(spec, u, state, spot, n_steps, rate) {
        Ok(e) => e,
        Err(MgfError::Diverged { step }) => return Ok(diverged_at(step)),
        Err(other) => return Err(other),
    };
    if u.im != T::zero() {
        let real_u = Complex::new(u.re, T::zero());
        let bound = if u.re == T::zero() {
            T::zero()
        } else {
            match log_mgf(spec, real_u, state, spot, n_steps, rate) {
                Ok(e) => e.re,
                Err(MgfError::Diverged { step }) => return Ok(diverged_at(step)),
                Err(other) => return Err(other),
            }
        };
        if exponent.re > bound + T::of(BOUND_MARGIN) {
            return Ok(diverged_at(n_steps));
        }
    }
    let value = exponent.exp();
    if !(value.re.is_finite() && value.im.is_finite()) {
        return Ok(diverged_at(n_steps));
    }
    Ok(MgfResult {
        value: Some(value),
        steps: n_steps,
        diverged: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const RATE: f64 = 1e-5;
    const H10: f64 = 0.01 / 252.0;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn state10() -> VolState<f64> {
        VolState::component(H10, H10)
    }

    fn close(got: Complex<f64>, want: Complex<f64>, tol: f64) {
        let scale = want.norm().max(1e-12);
        assert!(
            (got - want).norm() / scale < tol,
            "got {got}, want {want}"
        );
    }

    // Frozen triples from an independent implementation of the recursion,
    // itself validated against nested Gauss-Hermite integration of the raw
    // dynamics to 1e-15 relative accuracy.
    #[test]
    fn physical_measure_triples_match_reference() {
        let u = c(1.5, 0.0);
        let cases: [(ModelSpec<f64>, f64, f64, f64); 4] = [
            (fixtures::cpc_p1(), 7.020516608717843e-05, 3.1321144574159727, 5.297892404326246),
            (fixtures::cjow08(), 5.545366892686288e-05, 8.749204390718038, 12.62862057522504),
            (fixtures::op_p1(), 6.913444472093161e-05, 5.718426847529635, 6.923707413493587),
            (fixtures::hn_cclt23(), 9.141410720631883e-05, 9.453284149543167, 0.0),
        ];
        for (spec, a, b1, b2) in cases {
            let t = coefficients(&spec, u, 3, RATE).unwrap();
            assert_relative_eq!(t.a.re, a, max_relative = 1e-12);
            assert_relative_eq!(t.b1.re, b1, max_relative = 1e-12);
            if b2 == 0.0 {
                assert_eq!(t.b2.re, 0.0);
            } else {
                assert_relative_eq!(t.b2.re, b2, max_relative = 1e-12);
            }
            assert_eq!(t.a.im, 0.0);
            assert_eq!(t.b1.im, 0.0);
        }
    }

    #[test]
    fn risk_neutral_triples_match_reference() {
        let u = c(0.0, 1.0);
        let cases: [(ModelSpec<f64>, Complex<f64>, Complex<f64>, Complex<f64>); 4] = [
            (
                fixtures::cpc_p1(),
                c(-0.00023359643592329193, -3.126871612831798e-05),
                c(-1.3806029245898743, -1.3559354225936382),
                c(-7.358750748040474, -7.256824524408164),
            ),
            (
                fixtures::cjow08(),
                c(-7.365963982790035e-05, 0.00012703813767017967),
                c(-1.4153820610735695, -1.3904760585417373),
                c(-9.127116028615953, -9.013617886089612),
            ),
            (
                fixtures::op_p1(),
                c(-0.000219817314849908, -1.7562627811028606e-05),
                c(-2.45197767320134, -2.410987746918888),
                c(-7.510187454230361, -7.408439498919848),
            ),
            (
                fixtures::hn_cclt23(),
                c(-0.00041513296504957695, -0.00021151369159342595),
                c(-8.500992369740134, -8.384351255105539),
                c(0.0, 0.0),
            ),
        ];
        for (spec, a, b1, b2) in cases {
            let t = coefficients(&spec.risk_neutralize(), u, 20, RATE).unwrap();
            close(t.a, a, 1e-11);
            close(t.b1, b1, 1e-11);
            if b2.norm() == 0.0 {
                assert_eq!(t.b2.norm(), 0.0);
            } else {
                close(t.b2, b2, 1e-11);
            }
        }
    }

    // Frozen values of E[S_T^u] from nested Gauss-Hermite integration of
    // the raw one-day dynamics (96 nodes per day), h = q = (10%)^2/252,
    // S = 100, r = 1e-5.
    #[test]
    fn values_match_quadrature_references() {
        let rn_u2: [(ModelSpec<f64>, f64); 4] = [
            (fixtures::cpc_p1(), 10001.23017521668),
            (fixtures::cjow08(), 10001.19650382826),
            (fixtures::op_p1(), 10001.214709820708),
            (fixtures::hn_cclt23(), 10001.234311621767),
        ];
        for (spec, want) in rn_u2 {
            let got = mgf(&spec.risk_neutralize(), c(2.0, 0.0), state10(), 100.0, 2, RATE)
                .unwrap()
                .value
                .unwrap();
            close(got, c(want, 0.0), 1e-12);
        }

        let rn_u_half: [(ModelSpec<f64>, f64); 4] = [
            (fixtures::cpc_p1(), 9.999989162151751),
            (fixtures::cjow08(), 9.999999776441575),
            (fixtures::op_p1(), 9.999993394640883),
            (fixtures::hn_cclt23(), 9.9999858986199),
        ];
        for (spec, want) in rn_u_half {
            let got = mgf(&spec.risk_neutralize(), c(0.5, 0.0), state10(), 100.0, 3, RATE)
                .unwrap()
                .value
                .unwrap();
            close(got, c(want, 0.0), 1e-12);
        }

        let rn_complex: [(ModelSpec<f64>, Complex<f64>); 4] = [
            (fixtures::cpc_p1(), c(-2334.330272055526, 928.0839645087193)),
            (fixtures::cjow08(), c(-2334.324772279362, 928.0883316318763)),
            (fixtures::op_p1(), c(-2334.327741725483, 928.085968300977)),
            (fixtures::hn_cclt23(), c(-2334.3309162706814, 928.0834132266461)),
        ];
        for (spec, want) in rn_complex {
            let got = mgf(&spec.risk_neutralize(), c(1.7, 0.6), state10(), 100.0, 2, RATE)
                .unwrap()
                .value
                .unwrap();
            close(got, want, 1e-12);
        }

        let physical: [(ModelSpec<f64>, Complex<f64>); 4] = [
            (fixtures::cpc_p1(), c(-106.7161788947543, -383.595503881542)),
            (fixtures::cjow08(), c(-106.7524830592662, -383.6528758805582)),
            (fixtures::op_p1(), c(-106.72436444838394, -383.6085960673861)),
            (fixtures::hn_cclt23(), c(-106.7388193846531, -383.63076415471835)),
        ];
        for (spec, want) in physical {
            let got = mgf(&spec, c(1.3, -0.4), state10(), 100.0, 2, RATE)
                .unwrap()
                .value
                .unwrap();
            close(got, want, 1e-12);
        }
    }

    #[test]
    fn zero_argument_evaluates_to_one() {
        for name in fixtures::all_names() {
            let spec = fixtures::by_name::<f64>(name).unwrap();
            let state = VolState::component(2e-4, 1.5e-4);
            let e = log_mgf(&spec, c(0.0, 0.0), state, 87.5, 60, RATE).unwrap();
            assert_abs_diff_eq!(e.norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn unit_argument_recovers_the_forward_under_pricing_drift() {
        let rate = 1e-4;
        for name in ["CPC-P1", "CJOW08", "OP-P1", "HN-CCLT23"] {
            let spec = fixtures::by_name::<f64>(name).unwrap().risk_neutralize();
            let state = VolState::component(2e-4, 1.2e-4);
            let e = log_mgf(&spec, c(1.0, 0.0), state, 100.0, 252, rate).unwrap();
            let want = 100.0f64.ln() + rate * 252.0;
            assert_relative_eq!(e.re, want, max_relative = 1e-12);
            assert_abs_diff_eq!(e.im, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn one_step_value_matches_the_gaussian_closed_form() {
        let u = c(0.9, 0.3);
        let h = 3e-4;
        let spot = 95.0;
        for name in ["CPC-P1", "CJOW08", "OP-P1", "HN-CCLT23"] {
            for neutralize in [false, true] {
                let mut spec = fixtures::by_name::<f64>(name).unwrap();
                if neutralize {
                    spec = spec.risk_neutralize();
                }
                let state = VolState::component(h, 2e-4);
                let got = log_mgf(&spec, u, state, spot, 1, RATE).unwrap();
                let drift = spec.drift_coeff();
                let want = u * (spot.ln() + RATE + drift * h) + u * u * (h / 2.0);
                close(got.exp(), want.exp(), 1e-13);
            }
        }
    }

    #[test]
    fn conjugate_arguments_give_conjugate_coefficients() {
        let u = c(1.1, 7.3);
        for name in ["CPC-P2", "CJOW08", "OP23", "HN-CJOW08"] {
            let spec = fixtures::by_name::<f64>(name).unwrap().risk_neutralize();
            let t = coefficients(&spec, u, 40, RATE).unwrap();
            let tc = coefficients(&spec, u.conj(), 40, RATE).unwrap();
            close(tc.a, t.a.conj(), 1e-14);
            close(tc.b1, t.b1.conj(), 1e-14);
            if t.b2.norm() > 0.0 {
                close(tc.b2, t.b2.conj(), 1e-14);
            }
        }
    }

    // With omega = 0 and a switched-off second component, the two-component
    // recursion collapses onto the single-component one.
    #[test]
    fn hn_embeds_in_cpc_when_the_component_is_frozen() {
        use crate::models::{ComponentParams, HnParams};
        let hn = ModelSpec::hn(HnParams {
            omega: 0.0,
            alpha: 3.1e-6,
            gamma1: 121.0,
            beta_tilde: 0.93,
            lambda: 1.4,
        });
        let cpc = ModelSpec::cpc(ComponentParams {
            omega: 0.0,
            alpha: 3.1e-6,
            gamma1: 121.0,
            beta_tilde: 0.93,
            varphi: 0.0,
            gamma2: 0.0,
            rho: 0.0,
            lambda: 1.4,
        });
        let u = c(1.2, 2.5);
        let t_hn = coefficients(&hn, u, 40, RATE).unwrap();
        let t_cpc = coefficients(&cpc, u, 40, RATE).unwrap();
        close(t_cpc.b1, t_hn.b1, 1e-14);
        close(t_cpc.a, t_hn.a, 1e-14);
        let e_hn = log_mgf(&hn, u, VolState::single(2e-4), 100.0, 40, RATE).unwrap();
        let e_cpc = log_mgf(&cpc, u, VolState::component(2e-4, 0.0), 100.0, 40, RATE).unwrap();
        close(e_hn.exp(), e_cpc.exp(), 1e-13);
    }

    // The two-component recursions at 5% vols break the modulus bound
    // |E[S^u]| <= E[S^(Re u)] along the pricing contour for longer
    // maturities, while short maturities at 10% vols stay clean.
    #[test]
    fn pricing_contour_divergence_is_state_and_maturity_dependent() {
        let spec = fixtures::cjow08::<f64>().risk_neutralize();
        let h5 = 0.0025 / 252.0;
        let five = VolState::component(h5, h5);
        for phi in [400.0, 700.0, 1000.0] {
            let r = mgf(&spec, c(1.0, phi), five, 100.0, 80, RATE).unwrap();
            assert!(r.is_diverged(), "phi={phi} should diverge at T=80, 5%");
            assert!(r.value.is_none());
        }
        for phi in [0.5, 5.0, 50.0, 500.0] {
            for re in [0.0, 1.0] {
                let r = mgf(&spec, c(re, phi), state10(), 100.0, 15, RATE).unwrap();
                assert!(!r.is_diverged(), "phi={phi} clean at T=15, 10%");
                assert!(r.value.unwrap().norm().is_finite());
            }
        }
    }

    // A synthetic single-component spec with alpha >= 1/2 pushes the
    // Gaussian quadratic coefficient past its convergence bound in two
    // steps at u = 2.
    #[test]
    fn recursion_guard_aborts_with_the_offending_step() {
        use crate::models::HnParams;
        let spec = ModelSpec::hn(HnParams {
            omega: 1e-6,
            alpha: 0.6,
            gamma1: 0.0,
            beta_tilde: 0.1,
            lambda: 0.0,
        })
        .risk_neutralize();
        match coefficients(&spec, c(2.0, 0.0), 5, RATE) {
            Err(MgfError::Diverged { step }) => assert_eq!(step, 2),
            other => panic!("expected guard abort, got {other:?}"),
        }
        let r = mgf(&spec, c(2.0, 0.0), VolState::single(1e-4), 100.0, 5, RATE).unwrap();
        assert_eq!(r.diverged, Some(2));
        assert!(r.value.is_none());
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let spec = fixtures::cpc_p1::<f64>();
        assert!(matches!(
            log_mgf(&spec, c(1.0, 0.0), VolState::single(1e-4), 100.0, 5, RATE),
            Err(MgfError::Model(ModelError::MissingComponent { .. }))
        ));
        assert!(matches!(
            log_mgf(&spec, c(1.0, 0.0), state10(), 0.0, 5, RATE),
            Err(MgfError::NonPositiveSpot { .. })
        ));
        assert!(matches!(
            log_mgf(&spec, c(1.0, 0.0), VolState::component(f64::NAN, 1e-4), 100.0, 5, RATE),
            Err(MgfError::Model(ModelError::NonFiniteState { .. }))
        ));
    }

    #[test]
    fn f32_recursion_runs() {
        let spec = fixtures::cpc_p1::<f32>();
        let u = Complex::new(1.5f32, 0.0);
        let t = coefficients(&spec, u, 3, 1e-5f32).unwrap();
        assert_relative_eq!(t.b1.re, 3.132_114_5, max_relative = 1e-4);
    }
}
