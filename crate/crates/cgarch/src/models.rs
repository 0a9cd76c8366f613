//! Model families, parameter sets, one-step dynamics, validation, and
//! stationary moments.
//!
//! All four families share the return equation
//! `R_{t+1} = r + drift(h_{t+1}) + sqrt(h_{t+1}) Z_{t+1}` and differ in the
//! variance recursion. `Hn` carries a single variance `h`; the component
//! families carry the pair `(h, q)` with `q` the long-run component.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::real::Real;

/// Model family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Family {
    Hn,
    Cjow,
    Op,
    Cpc,
}

impl Family {
    /// Number of free parameters under this family.
    pub fn n_params(self) -> usize {
        match self {
            Family::Hn => 5,
            _ => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Hn => "HN",
            Family::Cjow => "CJOW",
            Family::Op => "OP",
            Family::Cpc => "CPC",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hn" => Ok(Family::Hn),
            "cjow" => Ok(Family::Cjow),
            "op" => Ok(Family::Op),
            "cpc" => Ok(Family::Cpc),
            other => Err(format!("unknown family '{other}' (expected hn, cjow, op, cpc)")),
        }
    }
}

/// Probability measure the stored parameters refer to.
///
/// A spec tagged `RiskNeutral` stores the starred leverage parameters and
/// prices with drift `r - h/2`; a `Physical` spec uses drift `r + lambda h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Physical,
    RiskNeutral,
}

impl Default for Measure {
    fn default() -> Self {
        Measure::Physical
    }
}

/// Parameters of the single-component family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HnParams<T> {
    pub omega: T,
    pub alpha: T,
    pub gamma1: T,
    pub beta_tilde: T,
    pub lambda: T,
}

/// Parameters of the two-component families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentParams<T> {
    pub omega: T,
    pub alpha: T,
    pub gamma1: T,
    pub beta_tilde: T,
    pub varphi: T,
    pub gamma2: T,
    pub rho: T,
    pub lambda: T,
}

/// Family-tagged parameter union.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyParams<T> {
    Hn(HnParams<T>),
    Cjow(ComponentParams<T>),
    Op(ComponentParams<T>),
    Cpc(ComponentParams<T>),
}

/// A complete model specification: parameters plus the measure they live under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec<T> {
    pub params: FamilyParams<T>,
    pub measure: Measure,
}

/// Variance state `(h, q)`; `q` is `None` for the single-component family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolState<T> {
    pub h: T,
    pub q: Option<T>,
}

impl<T: Real> VolState<T> {
    pub fn single(h: T) -> Self {
        VolState { h, q: None }
    }

    pub fn component(h: T, q: T) -> Self {
        VolState { h, q: Some(q) }
    }

    /// Builds the state a spec expects from annualized volatility percents,
    /// `h = (pct/100)^2 / 252`.
    pub fn from_annual_vol_pct(spec: &ModelSpec<T>, h_pct: T, q_pct: T) -> Self {
        let conv = |pct: T| {
            let v = pct / T::of(100.0);
            v * v / T::of(252.0)
        };
        match spec.family() {
            Family::Hn => VolState::single(conv(h_pct)),
            _ => VolState::component(conv(h_pct), conv(q_pct)),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.h.is_finite() && self.q.map_or(true, |q| q.is_finite())
    }
}

/// Long-run means of the variance components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryMoments<T> {
    pub mean_h: T,
    /// `None` for the single-component family.
    pub mean_q: Option<T>,
    /// Long-run mean of `h - q`; `None` for the single-component family.
    pub hbar: Option<T>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("state is not finite (h = {h}, q = {q:?})")]
    NonFiniteState { h: f64, q: Option<f64> },
    #[error("negative variance h = {h} has no square root; the path is dead")]
    NegativeVarianceForSqrt { h: f64 },
    #[error("{family} dynamics require a long-run component q in the state")]
    MissingComponent { family: Family },
    #[error("variance dynamics are not stationary (spectral radius {radius})")]
    NonStationary { radius: f64 },
}

pub(crate) fn lossy<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

impl<T: Real> ModelSpec<T> {
    pub fn hn(params: HnParams<T>) -> Self {
        ModelSpec { params: FamilyParams::Hn(params), measure: Measure::Physical }
    }

    pub fn cjow(params: ComponentParams<T>) -> Self {
        ModelSpec { params: FamilyParams::Cjow(params), measure: Measure::Physical }
    }

    pub fn op(params: ComponentParams<T>) -> Self {
        ModelSpec { params: FamilyParams::Op(params), measure: Measure::Physical }
    }

    pub fn cpc(params: ComponentParams<T>) -> Self {
        ModelSpec { params: FamilyParams::Cpc(params), measure: Measure::Physical }
    }

    pub fn family(&self) -> Family {
        match self.params {
            FamilyParams::Hn(_) => Family::Hn,
            FamilyParams::Cjow(_) => Family::Cjow,
            FamilyParams::Op(_) => Family::Op,
            FamilyParams::Cpc(_) => Family::Cpc,
        }
    }

    pub fn lambda(&self) -> T {
        match &self.params {
            FamilyParams::Hn(p) => p.lambda,
            FamilyParams::Cjow(p) | FamilyParams::Op(p) | FamilyParams::Cpc(p) => p.lambda,
        }
    }

    pub fn component(&self) -> Option<&ComponentParams<T>> {
        match &self.params {
            FamilyParams::Cjow(p) | FamilyParams::Op(p) | FamilyParams::Cpc(p) => Some(p),
            FamilyParams::Hn(_) => None,
        }
    }

    pub fn hn_params(&self) -> Option<&HnParams<T>> {
        match &self.params {
            FamilyParams::Hn(p) => Some(p),
            _ => None,
        }
    }

    /// Advances the variance state by one day using innovation `z`.
    pub fn step(&self, state: VolState<T>, z: T) -> Result<VolState<T>, ModelError> {
        if !state.is_finite() {
            return Err(ModelError::NonFiniteState {
                h: lossy(state.h),
                q: state.q.map(lossy),
            });
        }
        let h = state.h;
        if h < T::zero() {
            return Err(ModelError::NegativeVarianceForSqrt { h: lossy(h) });
        }
        let sqrt_h = h.sqrt();
        let one = T::one();
        let two = T::of(2.0);
        match &self.params {
            FamilyParams::Hn(p) => {
                let e = z - p.gamma1 * sqrt_h;
                Ok(VolState::single(p.omega + p.beta_tilde * h + p.alpha * e * e))
            }
            FamilyParams::Cjow(p) => {
                let q = self.require_q(state)?;
                let news = |g: T| z * z - one - two * g * sqrt_h * z;
                let q_next = p.omega + p.rho * q + p.varphi * news(p.gamma2);
                let h_next = q_next + p.beta_tilde * (h - q) + p.alpha * news(p.gamma1);
                Ok(VolState::component(h_next, q_next))
            }
            FamilyParams::Op(p) => {
                let q = self.require_q(state)?;
                let e1 = z - p.gamma1 * sqrt_h;
                let e2 = z - p.gamma2 * sqrt_h;
                let q_next = p.omega + p.rho * q + p.varphi * e2 * e2;
                let h_next = q_next + p.beta_tilde * (h - q) + p.alpha * e1 * e1
                    - p.omega
                    - p.alpha * p.gamma1 * p.gamma1 * h;
                Ok(VolState::component(h_next, q_next))
            }
            FamilyParams::Cpc(p) => {
                let q = self.require_q(state)?;
                let e1 = z - p.gamma1 * sqrt_h;
                let e2 = z - p.gamma2 * sqrt_h;
                let q_next = p.omega + p.rho * q + p.varphi * e2 * e2;
                let h_next = q_next
                    + p.beta_tilde * (h - q)
                    + p.alpha * (e1 * e1 - p.gamma1 * p.gamma1 * q);
                Ok(VolState::component(h_next, q_next))
            }
        }
    }

    /// Extracts the long-run component from a state, erroring for a state
    /// that lacks one while the model needs it.
    pub fn require_q(&self, state: VolState<T>) -> Result<T, ModelError> {
        state.q.ok_or(ModelError::MissingComponent { family: self.family() })
    }

    /// Whether the variance dynamics carry a long-run component `q`.
    pub fn uses_component(&self) -> bool {
        !matches!(self.params, FamilyParams::Hn(_))
    }

    /// One-day log return given the prevailing variance `h` and innovation `z`.
    pub fn return_step(&self, rate: T, h: T, z: T) -> Result<T, ModelError> {
        if !h.is_finite() {
            return Err(ModelError::NonFiniteState { h: lossy(h), q: None });
        }
        if h < T::zero() {
            return Err(ModelError::NegativeVarianceForSqrt { h: lossy(h) });
        }
        Ok(rate + self.drift_coeff() * h + h.sqrt() * z)
    }

    /// Coefficient on `h` in the conditional mean of the daily return.
    pub fn drift_coeff(&self) -> T {
        match self.measure {
            Measure::Physical => self.lambda(),
            Measure::RiskNeutral => -T::of(0.5),
        }
    }

    /// Shifts every leverage parameter by `1/2 + lambda` and tags the result
    /// risk-neutral. This is a pure parameter map: applying it twice shifts
    /// twice.
    pub fn risk_neutralize(&self) -> Self {
        let shift = T::of(0.5) + self.lambda();
        let mut out = *self;
        out.shift_gammas(shift);
        out.measure = Measure::RiskNeutral;
        out
    }

    /// Re-expresses the spec under `target`, mapping the leverage parameters
    /// when the stored convention differs.
    pub fn in_measure(&self, target: Measure) -> Self {
        match (self.measure, target) {
            (a, b) if a == b => *self,
            (Measure::Physical, Measure::RiskNeutral) => self.risk_neutralize(),
            _ => {
                let shift = -(T::of(0.5) + self.lambda());
                let mut out = *self;
                out.shift_gammas(shift);
                out.measure = Measure::Physical;
                out
            }
        }
    }

    fn shift_gammas(&mut self, shift: T) {
        match &mut self.params {
            FamilyParams::Hn(p) => p.gamma1 += shift,
            FamilyParams::Cjow(p) | FamilyParams::Op(p) | FamilyParams::Cpc(p) => {
                p.gamma1 += shift;
                p.gamma2 += shift;
            }
        }
    }

    /// Eigenvalues of the mean-recursion matrix: the short-run one and, for
    /// component families, the long-run one.
    pub fn variance_eigenvalues(&self) -> (T, Option<T>) {
        match &self.params {
            FamilyParams::Hn(p) => (p.beta_tilde + p.alpha * p.gamma1 * p.gamma1, None),
            FamilyParams::Cjow(p) => (p.beta_tilde, Some(p.rho)),
            FamilyParams::Op(p) => {
                (p.beta_tilde, Some(p.rho + p.varphi * p.gamma2 * p.gamma2))
            }
            FamilyParams::Cpc(p) => (
                p.beta_tilde + p.alpha * p.gamma1 * p.gamma1,
                Some(p.rho + p.varphi * p.gamma2 * p.gamma2),
            ),
        }
    }

    /// Spectral radius of the mean-recursion matrix.
    pub fn spectral_radius(&self) -> T {
        let (a, b) = self.variance_eigenvalues();
        match b {
            Some(b) => a.abs().max(b.abs()),
            None => a.abs(),
        }
    }

    /// Mean-recursion system `m = P m + R` for the component families.
    fn mean_system(&self) -> Option<([[T; 2]; 2], [T; 2])> {
        let z = T::zero();
        match &self.params {
            FamilyParams::Hn(_) => None,
            FamilyParams::Cjow(p) => Some((
                [[p.beta_tilde, p.rho - p.beta_tilde], [z, p.rho]],
                [p.omega, p.omega],
            )),
            FamilyParams::Op(p) => {
                let pg = p.varphi * p.gamma2 * p.gamma2;
                Some((
                    [[p.beta_tilde + pg, p.rho - p.beta_tilde], [pg, p.rho]],
                    [p.alpha + p.varphi, p.omega + p.varphi],
                ))
            }
            FamilyParams::Cpc(p) => {
                let ag = p.alpha * p.gamma1 * p.gamma1;
                let pg = p.varphi * p.gamma2 * p.gamma2;
                Some((
                    [[p.beta_tilde + ag + pg, p.rho - p.beta_tilde - ag], [pg, p.rho]],
                    [p.omega + p.alpha + p.varphi, p.omega + p.varphi],
                ))
            }
        }
    }

    /// Long-run means of `(h, q)`, solved from the linear mean recursion.
    pub fn stationary_moments(&self) -> Result<StationaryMoments<T>, ModelError> {
        let radius = self.spectral_radius();
        if radius >= T::one() {
            return Err(ModelError::NonStationary { radius: lossy(radius) });
        }
        match self.mean_system() {
            None => {
                let p = self.hn_params().expect("single-component family");
                let mean_h =
                    (p.omega + p.alpha) / (T::one() - p.beta_tilde - p.alpha * p.gamma1 * p.gamma1);
                Ok(StationaryMoments { mean_h, mean_q: None, hbar: None })
            }
            Some((p, r)) => {
                let a11 = T::one() - p[0][0];
                let a12 = -p[0][1];
                let a21 = -p[1][0];
                let a22 = T::one() - p[1][1];
                let det = a11 * a22 - a12 * a21;
                let mean_h = (r[0] * a22 - a12 * r[1]) / det;
                let mean_q = (a11 * r[1] - a21 * r[0]) / det;
                Ok(StationaryMoments { mean_h, mean_q: Some(mean_q), hbar: Some(mean_h - mean_q) })
            }
        }
    }

    /// Runs every parameter-domain check for the family.
    pub fn validate(&self) -> ValidationReport {
        let mut checks = Vec::new();
        let mut push = |name: &'static str, passed: bool, detail: String| {
            checks.push(ConstraintCheck { name, passed, detail });
        };
        let one = T::one();
        let zero = T::zero();
        match &self.params {
            FamilyParams::Hn(p) => {
                push("omega_nonnegative", p.omega >= zero, format!("omega = {}", p.omega));
                push("alpha_positive", p.alpha > zero, format!("alpha = {}", p.alpha));
            }
            FamilyParams::Cjow(p) => {
                push("omega_nonnegative", p.omega >= zero, format!("omega = {}", p.omega));
                push("alpha_positive", p.alpha > zero, format!("alpha = {}", p.alpha));
                push("varphi_positive", p.varphi > zero, format!("varphi = {}", p.varphi));
                push(
                    "beta_tilde_below_one",
                    p.beta_tilde < one,
                    format!("beta_tilde = {}", p.beta_tilde),
                );
                push("rho_below_one", p.rho < one, format!("rho = {}", p.rho));
            }
            FamilyParams::Op(p) => {
                push("alpha_positive", p.alpha > zero, format!("alpha = {}", p.alpha));
                push("varphi_positive", p.varphi > zero, format!("varphi = {}", p.varphi));
                push(
                    "beta_tilde_below_one",
                    p.beta_tilde < one,
                    format!("beta_tilde = {}", p.beta_tilde),
                );
                push("rho_below_one", p.rho < one, format!("rho = {}", p.rho));
            }
            FamilyParams::Cpc(p) => {
                let short = p.beta_tilde + p.alpha * p.gamma1 * p.gamma1;
                push("omega_nonnegative", p.omega >= zero, format!("omega = {}", p.omega));
                push("alpha_positive", p.alpha > zero, format!("alpha = {}", p.alpha));
                push("varphi_positive", p.varphi > zero, format!("varphi = {}", p.varphi));
                push(
                    "beta_tilde_nonnegative",
                    p.beta_tilde >= zero,
                    format!("beta_tilde = {}", p.beta_tilde),
                );
                push(
                    "short_run_persistence_below_rho",
                    short < p.rho,
                    format!("beta_tilde + alpha*gamma1^2 = {} vs rho = {}", short, p.rho),
                );
                push("rho_below_one", p.rho < one, format!("rho = {}", p.rho));
            }
        }
        let radius = self.spectral_radius();
        checks.push(ConstraintCheck {
            name: "stationary_spectral_radius_below_one",
            passed: radius < one,
            detail: format!("spectral radius = {radius}"),
        });
        ValidationReport { checks }
    }
}

/// Outcome of a single parameter constraint check.
#[derive(Debug, Clone)]
pub struct ConstraintCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Every check the family defines, in a fixed order.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<ConstraintCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Flat serialized form: one `family` tag plus the parameter keys, with the
/// component-only keys omitted for the single-component family.
#[derive(Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: serde::Deserialize<'de>"
))]
struct FlatSpec<T> {
    family: Family,
    omega: T,
    alpha: T,
    gamma1: T,
    beta_tilde: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    varphi: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma2: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<T>,
    lambda: T,
    #[serde(default, skip_serializing_if = "measure_is_physical")]
    measure: Measure,
}

fn measure_is_physical(m: &Measure) -> bool {
    *m == Measure::Physical
}

impl<T: Real + Serialize> Serialize for ModelSpec<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let flat = match &self.params {
            FamilyParams::Hn(p) => FlatSpec {
                family: Family::Hn,
                omega: p.omega,
                alpha: p.alpha,
                gamma1: p.gamma1,
                beta_tilde: p.beta_tilde,
                varphi: None,
                gamma2: None,
                rho: None,
                lambda: p.lambda,
                measure: self.measure,
            },
            FamilyParams::Cjow(p) | FamilyParams::Op(p) | FamilyParams::Cpc(p) => FlatSpec {
                family: self.family(),
                omega: p.omega,
                alpha: p.alpha,
                gamma1: p.gamma1,
                beta_tilde: p.beta_tilde,
                varphi: Some(p.varphi),
                gamma2: Some(p.gamma2),
                rho: Some(p.rho),
                lambda: p.lambda,
                measure: self.measure,
            },
        };
        flat.serialize(serializer)
    }
}

impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for ModelSpec<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let flat = FlatSpec::<T>::deserialize(deserializer)?;
        let params = match flat.family {
            Family::Hn => {
                if flat.varphi.is_some() || flat.gamma2.is_some() || flat.rho.is_some() {
                    return Err(D::Error::custom(
                        "family HN takes no varphi/gamma2/rho fields",
                    ));
                }
                FamilyParams::Hn(HnParams {
                    omega: flat.omega,
                    alpha: flat.alpha,
                    gamma1: flat.gamma1,
                    beta_tilde: flat.beta_tilde,
                    lambda: flat.lambda,
                })
            }
            fam => {
                let missing = |k: &str| D::Error::custom(format!("family {fam} requires {k}"));
                let p = ComponentParams {
                    omega: flat.omega,
                    alpha: flat.alpha,
                    gamma1: flat.gamma1,
                    beta_tilde: flat.beta_tilde,
                    varphi: flat.varphi.ok_or_else(|| missing("varphi"))?,
                    gamma2: flat.gamma2.ok_or_else(|| missing("gamma2"))?,
                    rho: flat.rho.ok_or_else(|| missing("rho"))?,
                    lambda: flat.lambda,
                };
                match fam {
                    Family::Cjow => FamilyParams::Cjow(p),
                    Family::Op => FamilyParams::Op(p),
                    Family::Cpc => FamilyParams::Cpc(p),
                    Family::Hn => unreachable!(),
                }
            }
        };
        Ok(ModelSpec { params, measure: flat.measure })
    }
}
