#![allow(dead_code)]

use harvest_core::diffusion::DiffusionSpec;
use harvest_core::payoff::{PayoffSpec, PayoffTag};
use harvest_core::problem::Problem;

pub fn problem(d: DiffusionSpec, tag: PayoffTag, c: f64) -> Problem {
    let p = PayoffSpec::from_tag(&tag, &d.tag, c).unwrap();
    Problem::new(d, p).unwrap()
}

/// b = 1/4, σ = 1/√2, r = 1: φ = x⁻², ψ = x².
pub fn quartic_gbm() -> DiffusionSpec {
    DiffusionSpec::gbm(0.25, 0.5f64.sqrt(), 1.0)
}

/// b = 0, σ = 1, r = 1, h = √x, k ≡ 1.
pub fn power_h(c: f64) -> Problem {
    problem(DiffusionSpec::gbm(0.0, 1.0, 1.0), PayoffTag::PowerH { alpha: 0.5, k: 1.0 }, c)
}

pub fn linear_capped(c: f64) -> Problem {
    problem(DiffusionSpec::gbm(0.5, 0.5, 0.25), PayoffTag::LinearCapped { alpha: 0.5 }, c)
}

pub fn power_capped(c: f64) -> Problem {
    problem(DiffusionSpec::gbm(0.5, 0.5, 0.5), PayoffTag::PowerCapped { a: 0.5, alpha: 1.5 }, c)
}

pub fn piecewise(slope: f64, c: f64) -> Problem {
    problem(quartic_gbm(), PayoffTag::PiecewiseLinear { slope }, c)
}

pub fn sqrt_mr(gamma: f64, kappa: f64, c: f64) -> Problem {
    problem(DiffusionSpec::mean_rev_sqrt(1.0), PayoffTag::ExpCapped { gamma, kappa }, c)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
