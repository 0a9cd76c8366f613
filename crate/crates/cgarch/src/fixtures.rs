//! Published parameter sets used as fixtures across the crate and the CLI.
//!
//! The first three are return-fitted component-model estimates commonly used
//! to exercise negative-variance behaviour; the `hn_*` pair are the matching
//! single-component estimates; the `*_p1`/`*_p2` sets are joint estimates on
//! two sample periods.

use crate::models::{ComponentParams, HnParams, ModelSpec};
use crate::real::Real;

pub fn cjow08<T: Real>() -> ModelSpec<T> {
    ModelSpec::cjow(ComponentParams {
        omega: T::of(8.208e-7),
        alpha: T::of(1.580e-6),
        gamma1: T::of(415.100),
        beta_tilde: T::of(0.6437),
        varphi: T::of(2.480e-6),
        gamma2: T::of(63.240),
        rho: T::of(0.9896),
        lambda: T::of(2.092),
    })
}

pub fn cclt23<T: Real>() -> ModelSpec<T> {
    ModelSpec::cjow(ComponentParams {
        omega: T::of(7.776e-7),
        alpha: T::of(1.380e-6),
        gamma1: T::of(402.352),
        beta_tilde: T::of(0.862),
        varphi: T::of(1.795e-6),
        gamma2: T::of(73.205),
        rho: T::of(0.991),
        lambda: T::of(1.357),
    })
}

pub fn op23<T: Real>() -> ModelSpec<T> {
    ModelSpec::op(ComponentParams {
        omega: T::of(-1.57e-6),
        alpha: T::of(1.9e-7),
        gamma1: T::of(7050.0),
        beta_tilde: T::of(0.922),
        varphi: T::of(2.62e-6),
        gamma2: T::of(89.0),
        rho: T::of(0.983),
        lambda: T::of(-7.88),
    })
}

pub fn hn_cjow08<T: Real>() -> ModelSpec<T> {
    ModelSpec::hn(HnParams {
        omega: T::of(2.101e-17),
        alpha: T::of(3.317e-6),
        gamma1: T::of(127.6),
        beta_tilde: T::of(0.9552),
        lambda: T::of(2.231),
    })
}

pub fn hn_cclt23<T: Real>() -> ModelSpec<T> {
    ModelSpec::hn(HnParams {
        omega: T::of(1.744e-6),
        alpha: T::of(3.098e-6),
        gamma1: T::of(120.967),
        beta_tilde: T::of(0.935),
        lambda: T::of(1.395),
    })
}

pub fn cpc_p1<T: Real>() -> ModelSpec<T> {
    ModelSpec::cpc(ComponentParams {
        omega: T::of(1.546e-16),
        alpha: T::of(2.923e-6),
        gamma1: T::of(140.269),
        beta_tilde: T::of(0.374),
        varphi: T::of(2.205e-6),
        gamma2: T::of(134.469),
        rho: T::of(0.925),
        lambda: T::of(0.472),
    })
}

pub fn op_p1<T: Real>() -> ModelSpec<T> {
    ModelSpec::op(ComponentParams {
        omega: T::of(8.678e-12),
        alpha: T::of(1.337e-6),
        gamma1: T::of(438.588),
        beta_tilde: T::of(0.776),
        varphi: T::of(2.152e-6),
        gamma2: T::of(58.924),
        rho: T::of(0.960),
        lambda: T::of(0.843),
    })
}

pub fn cjow_p1<T: Real>() -> ModelSpec<T> {
    cjow08()
}

pub fn cpc_p2<T: Real>() -> ModelSpec<T> {
    ModelSpec::cpc(ComponentParams {
        omega: T::of(6.177e-14),
        alpha: T::of(1.003e-6),
        gamma1: T::of(343.652),
        beta_tilde: T::of(0.626),
        varphi: T::of(5.146e-6),
        gamma2: T::of(148.223),
        rho: T::of(0.836),
        lambda: T::of(-2.957),
    })
}

pub fn op_p2<T: Real>() -> ModelSpec<T> {
    ModelSpec::op(ComponentParams {
        omega: T::of(6.689e-9),
        alpha: T::of(3.004e-6),
        gamma1: T::of(337.450),
        beta_tilde: T::of(0.887),
        varphi: T::of(1.684e-6),
        gamma2: T::of(120.697),
        rho: T::of(0.949),
        lambda: T::of(-3.957),
    })
}

pub fn cjow_p2<T: Real>() -> ModelSpec<T> {
    ModelSpec::cjow(ComponentParams {
        omega: T::of(7.735e-7),
        alpha: T::of(3.520e-6),
        gamma1: T::of(227.209),
        beta_tilde: T::of(0.704),
        varphi: T::of(1.510e-6),
        gamma2: T::of(188.654),
        rho: T::of(0.993),
        lambda: T::of(-3.412),
    })
}

/// Every fixture name accepted by [`by_name`].
pub fn all_names() -> &'static [&'static str] {
    &[
        "cjow08", "cclt23", "op23", "hn-cjow08", "hn-cclt23", "cpc-p1", "op-p1", "cjow-p1",
        "cpc-p2", "op-p2", "cjow-p2",
    ]
}

/// Looks a fixture up by its CLI name.
pub fn by_name<T: Real>(name: &str) -> Option<ModelSpec<T>> {
    match name.to_ascii_lowercase().as_str() {
        "cjow08" => Some(cjow08()),
        "cclt23" => Some(cclt23()),
        "op23" => Some(op23()),
        "hn-cjow08" => Some(hn_cjow08()),
        "hn-cclt23" => Some(hn_cclt23()),
        "cpc-p1" => Some(cpc_p1()),
        "op-p1" => Some(op_p1()),
        "cjow-p1" => Some(cjow_p1()),
        "cpc-p2" => Some(cpc_p2()),
        "op-p2" => Some(op_p2()),
        "cjow-p2" => Some(cjow_p2()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_is_complete() {
        for name in all_names() {
            assert!(by_name::<f64>(name).is_some(), "missing fixture {name}");
        }
        assert!(by_name::<f64>("nope").is_none());
        assert!(by_name::<f64>("CPC-P1").is_some());
    }

    #[test]
    fn period_one_cjow_alias() {
        assert_eq!(cjow_p1::<f64>(), cjow08::<f64>());
    }
}
