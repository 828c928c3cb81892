//! Payoff data (h, k, K, c), the catalogue, and the effective payoff Θ.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionSpec, ModelTag, RealFn};
use crate::error::{Error, Result};
use crate::numeric::{golden_max, log_grid, probe_limit, Extended};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PayoffTag {
    /// h = x^α, k ≡ k.
    PowerH { alpha: f64, k: f64 },
    /// h = −αx capped at −α beyond 1; k = 3 − 2x, then x⁻².
    LinearCapped { alpha: f64 },
    /// h = a x^α capped at a beyond 1; k = 4 − 2x, then x⁻² + 1.
    PowerCapped { a: f64, alpha: f64 },
    /// h = eˣ − 1, then e + e^γ − 1 − e^{γx}; k ≡ κ.
    ExpCapped { gamma: f64, kappa: f64 },
    /// h = s·x, then (s − 1) + x⁻⁴; k = 6 − 5x, then x⁻⁵.
    PiecewiseLinear { slope: f64 },
    Custom,
}

impl PayoffTag {
    pub fn name(&self) -> &'static str {
        match self {
            PayoffTag::PowerH { .. } => "power-h",
            PayoffTag::LinearCapped { .. } => "linear-capped",
            PayoffTag::PowerCapped { .. } => "power-capped",
            PayoffTag::ExpCapped { .. } => "exp-capped",
            PayoffTag::PiecewiseLinear { .. } => "piecewise-linear",
            PayoffTag::Custom => "custom",
        }
    }
}

#[derive(Clone)]
pub struct PayoffSpec {
    pub h: RealFn,
    pub k: RealFn,
    /// a.e. derivative of k (one-sided at kinks).
    pub k_prime: RealFn,
    /// K(x) = ∫₀ˣ k.
    pub cum_k: RealFn,
    pub cost: f64,
    /// Declared lower bound of h; `None` when h is unbounded below.
    pub h_lower_bound: Option<f64>,
    pub cum_k_lower_bound: f64,
    /// Declared lim h/r at 0.
    pub h_over_r_zero_limit: f64,
    /// Points where h or k is not smooth.
    pub kinks: Vec<f64>,
    pub tag: PayoffTag,
}

impl std::fmt::Debug for PayoffSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PayoffSpec").field("tag", &self.tag).field("cost", &self.cost).finish()
    }
}

fn f(g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> RealFn {
    Arc::new(g)
}

fn gbm_params(model: &ModelTag, payoff: &str) -> Result<(f64, f64, f64)> {
    match *model {
        ModelTag::Gbm { b, sigma, r } => Ok((b, sigma, r)),
        _ => Err(Error::InvalidParameter(format!("payoff {payoff} is defined for the gbm model only"))),
    }
}

fn check(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg.into()))
    }
}

impl PayoffSpec {
    /// Build a catalogue payoff, checking the parameter ranges under which
    /// the corresponding model/payoff pair satisfies the standing assumptions.
    pub fn from_tag(tag: &PayoffTag, model: &ModelTag, cost: f64) -> Result<Self> {
        check(cost > 0.0 && cost.is_finite(), format!("fixed cost must be positive, got {cost}"))?;
        let spec = match *tag {
            PayoffTag::PowerH { alpha, k } => {
                let (b, _, r) = gbm_params(model, "power-h")?;
                check(alpha > 0.0 && alpha < 1.0, "power-h needs alpha in (0, 1)")?;
                check(k > 0.0, "power-h needs k > 0")?;
                check(r > b, "power-h needs r > b")?;
                PayoffSpec {
                    h: f(move |x| x.powf(alpha)),
                    k: f(move |_| k),
                    k_prime: f(|_| 0.0),
                    cum_k: f(move |x| k * x),
                    cost,
                    h_lower_bound: Some(0.0),
                    cum_k_lower_bound: 0.0,
                    h_over_r_zero_limit: 0.0,
                    kinks: vec![],
                    tag: tag.clone(),
                }
            }
            PayoffTag::LinearCapped { alpha } => {
                let (b, sigma, r) = gbm_params(model, "linear-capped")?;
                check(r + b - sigma * sigma > 0.0, "linear-capped needs r + b - sigma^2 > 0 (m < -1)")?;
                check(b > r, "linear-capped needs b > r")?;
                check(alpha < 3.0 * (b - r), "linear-capped needs alpha < 3(b - r)")?;
                Self::capped(-alpha, 1.0, 0.0, cost, tag.clone())
            }
            PayoffTag::PowerCapped { a, alpha } => {
                let (b, sigma, r) = gbm_params(model, "power-capped")?;
                check((b - r).abs() <= 1e-12 * r.abs().max(1.0), "power-capped needs b = r")?;
                check(b > 0.5 * sigma * sigma, "power-capped needs b > sigma^2/2")?;
                check(alpha > 1.0 && alpha <= 2.0, "power-capped needs alpha in (1, 2]")?;
                let amax = 1.5 * (2.0 * b + sigma * sigma) * (alpha - 1.0);
                check(a > 0.0 && a < amax, format!("power-capped needs a in (0, {amax})"))?;
                Self::capped(a, alpha, 1.0, cost, tag.clone())
            }
            PayoffTag::ExpCapped { gamma, kappa } => {
                let alpha = match *model {
                    ModelTag::MeanRevSqrt { alpha } => alpha,
                    _ => return Err(Error::InvalidParameter("exp-capped is defined for mean-rev-sqrt only".into())),
                };
                check(gamma > 0.0 && gamma < 1.0, "exp-capped needs gamma in (0, 1)")?;
                check(kappa > 0.0 && kappa < 0.5 / alpha, "exp-capped needs kappa in (0, 1/(2 alpha))")?;
                let top = std::f64::consts::E + gamma.exp() - 1.0;
                PayoffSpec {
                    h: f(move |x| if x < 1.0 { x.exp_m1() } else { top - (gamma * x).exp() }),
                    k: f(move |_| kappa),
                    k_prime: f(|_| 0.0),
                    cum_k: f(move |x| kappa * x),
                    cost,
                    h_lower_bound: None,
                    cum_k_lower_bound: 0.0,
                    h_over_r_zero_limit: 0.0,
                    kinks: vec![1.0],
                    tag: tag.clone(),
                }
            }
            PayoffTag::PiecewiseLinear { slope } => {
                gbm_params(model, "piecewise-linear")?;
                check(slope > 1.0, "piecewise-linear needs slope > 1")?;
                PayoffSpec {
                    h: f(move |x| if x <= 1.0 { slope * x } else { slope - 1.0 + x.powi(-4) }),
                    k: f(|x| if x <= 1.0 { 6.0 - 5.0 * x } else { x.powi(-5) }),
                    k_prime: f(|x| if x <= 1.0 { -5.0 } else { -5.0 * x.powi(-6) }),
                    cum_k: f(|x| if x <= 1.0 { 6.0 * x - 2.5 * x * x } else { 3.75 - 0.25 * x.powi(-4) }),
                    cost,
                    h_lower_bound: Some(0.0),
                    cum_k_lower_bound: 0.0,
                    h_over_r_zero_limit: 0.0,
                    kinks: vec![1.0],
                    tag: tag.clone(),
                }
            }
            PayoffTag::Custom => {
                return Err(Error::InvalidParameter("custom payoffs need explicit functions".into()))
            }
        };
        Ok(spec)
    }

    /// h = a·x^p below 1 and a beyond; k = (3 + q) − 2x below 1 and x⁻² + q beyond.
    fn capped(a: f64, p: f64, q: f64, cost: f64, tag: PayoffTag) -> PayoffSpec {
        PayoffSpec {
            h: f(move |x| if x < 1.0 { a * x.powf(p) } else { a }),
            k: f(move |x| if x < 1.0 { 3.0 + q - 2.0 * x } else { x.powi(-2) + q }),
            k_prime: f(|x| if x < 1.0 { -2.0 } else { -2.0 * x.powi(-3) }),
            cum_k: f(move |x| if x < 1.0 { (3.0 + q) * x - x * x } else { 3.0 - 1.0 / x + q * x }),
            cost,
            h_lower_bound: Some(a.min(0.0)),
            cum_k_lower_bound: 0.0,
            h_over_r_zero_limit: 0.0,
            kinks: vec![1.0],
            tag,
        }
    }

    pub fn with_cost(&self, cost: f64) -> Self {
        PayoffSpec { cost, ..self.clone() }
    }

    pub fn h(&self, x: f64) -> f64 {
        (self.h)(x)
    }

    pub fn k(&self, x: f64) -> f64 {
        (self.k)(x)
    }

    pub fn cum_k(&self, x: f64) -> f64 {
        (self.cum_k)(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnimodalityCertificate {
    pub grid_min: f64,
    pub grid_max: f64,
    pub points: usize,
    /// Index of the last increasing step on the grid.
    pub peak_index: usize,
    pub ignored_steps: usize,
}

#[derive(Clone)]
pub struct ThetaFunction {
    pub theta: RealFn,
    pub xi: f64,
    pub certificate: UnimodalityCertificate,
    /// lim Θ/r at 0, equal to lim G_Θ at 0.
    pub ratio_at_zero: Extended,
    /// lim Θ/r at ∞, equal to lim G_Θ at ∞.
    pub ratio_at_infinity: Extended,
    discount: RealFn,
}

impl std::fmt::Debug for ThetaFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ThetaFunction")
            .field("xi", &self.xi)
            .field("ratio_at_zero", &self.ratio_at_zero)
            .field("ratio_at_infinity", &self.ratio_at_infinity)
            .finish()
    }
}

impl ThetaFunction {
    pub fn eval(&self, x: f64) -> f64 {
        (self.theta)(x)
    }

    pub fn ratio(&self, x: f64) -> f64 {
        (self.theta)(x) / (self.discount)(x)
    }

    /// Θ + K·r for a constant K.
    pub fn shifted(&self, k: f64) -> ThetaFunction {
        let (th, r) = (self.theta.clone(), self.discount.clone());
        ThetaFunction {
            theta: Arc::new(move |x| th(x) + k * r(x)),
            ratio_at_zero: Extended::from_f64(self.ratio_at_zero.value() + k),
            ratio_at_infinity: Extended::from_f64(self.ratio_at_infinity.value() + k),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThetaConfig {
    pub probe_min: f64,
    pub probe_max: f64,
    pub points: usize,
    /// Lowest point used for limits at 0.
    pub zero_probe: f64,
}

impl Default for ThetaConfig {
    fn default() -> Self {
        Self { probe_min: 1e-6, probe_max: 1e6, points: 1000, zero_probe: 1e-8 }
    }
}

/// Θ = h + ½σ²k′ + bk − rK.
pub fn theta_function(d: &DiffusionSpec, p: &PayoffSpec) -> RealFn {
    let (d, p) = (d.clone(), p.clone());
    Arc::new(move |x| {
        let s = d.sigma(x);
        p.h(x) + 0.5 * s * s * (p.k_prime)(x) + d.b(x) * p.k(x) - d.r(x) * p.cum_k(x)
    })
}

pub fn theta_from_payoffs(d: &DiffusionSpec, p: &PayoffSpec) -> Result<ThetaFunction> {
    theta_from_payoffs_with(d, p, &ThetaConfig::default())
}

pub fn theta_from_payoffs_with(d: &DiffusionSpec, p: &PayoffSpec, cfg: &ThetaConfig) -> Result<ThetaFunction> {
    certify_theta(theta_function(d, p), d.discount.clone(), cfg)
}

/// Locate ξ and certify that Θ/r rises then falls on the probe grid.
pub fn certify_theta(theta: RealFn, discount: RealFn, cfg: &ThetaConfig) -> Result<ThetaFunction> {
    let grid = log_grid(cfg.probe_min, cfg.probe_max, cfg.points);
    let ratio = |x: f64| theta(x) / discount(x);
    let vals: Vec<f64> = grid.iter().map(|&x| ratio(x)).collect();
    if vals.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::UnimodalityViolated("theta/r is not evaluable on the probe grid".into()));
    }
    // +1 rising, -1 falling, 0 below resolution
    let signs: Vec<i8> = vals
        .windows(2)
        .map(|w| {
            if w[0] == f64::NEG_INFINITY && w[1] == f64::NEG_INFINITY {
                0
            } else if w[1] == f64::NEG_INFINITY {
                -1
            } else {
                let d = w[1] - w[0];
                if d.abs() <= 1e-13 * (w[0].abs() + w[1].abs()) {
                    0
                } else if d > 0.0 {
                    1
                } else {
                    -1
                }
            }
        })
        .collect();
    let ignored = signs.iter().filter(|&&s| s == 0).count();
    let strict: Vec<(usize, i8)> = signs.iter().copied().enumerate().filter(|&(_, s)| s != 0).collect();
    if strict.is_empty() {
        return Err(Error::UnimodalityViolated("theta/r is constant on the probe grid".into()));
    }
    let changes = strict.windows(2).filter(|w| w[0].1 != w[1].1).count();
    let first = strict[0].1;
    let last = strict[strict.len() - 1].1;
    if changes != 1 || first != 1 || last != -1 {
        return Err(Error::UnimodalityViolated(format!(
            "{changes} sign changes, first step {first}, last step {last}"
        )));
    }
    let peak = strict.iter().rev().find(|&&(_, s)| s == 1).unwrap().0;
    let lo = grid[peak.saturating_sub(1)];
    let hi = grid[(peak + 2).min(grid.len() - 1)];
    let xi = golden_max(|x| Ok(ratio(x)), lo, hi, 1e-10, true)?;
    let zero_samples: Vec<f64> = log_grid(cfg.zero_probe, 1e-3, 6).iter().rev().map(|&x| ratio(x)).collect();
    let inf_samples: Vec<f64> = log_grid(10.0, cfg.probe_max, 6).iter().map(|&x| ratio(x)).collect();
    let ratio_at_zero = probe_limit(&zero_samples, 1e-9, 1e-12).map_err(Error::LimitNotStabilized)?;
    let ratio_at_infinity = probe_limit(&inf_samples, 1e-9, 1e-12).map_err(Error::LimitNotStabilized)?;
    Ok(ThetaFunction {
        theta,
        xi,
        certificate: UnimodalityCertificate {
            grid_min: cfg.probe_min,
            grid_max: cfg.probe_max,
            points: cfg.points,
            peak_index: peak,
            ignored_steps: ignored,
        },
        ratio_at_zero,
        ratio_at_infinity,
        discount,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::make_diffusion;

    fn quartic(slope: f64) -> (DiffusionSpec, PayoffSpec) {
        let d = make_diffusion(DiffusionSpec::gbm(0.25, 0.5f64.sqrt(), 1.0)).unwrap();
        let p = PayoffSpec::from_tag(&PayoffTag::PiecewiseLinear { slope }, &d.tag, 0.1).unwrap();
        (d, p)
    }

    #[test]
    fn piecewise_theta_values() {
        let (d, p) = quartic(7.0);
        let th = theta_from_payoffs(&d, &p).unwrap();
        assert!((th.eval(2.0) - 2.265625).abs() < 1e-14);
        assert!((th.eval(0.4) - 1.0).abs() < 1e-14);
        assert!((th.xi - 1.0).abs() < 1e-8);
        assert_eq!(th.ratio_at_zero.finite().map(|v| v.abs() < 1e-7), Some(true));
        assert!((th.ratio_at_infinity.finite().unwrap() - 2.25).abs() < 1e-9);
        let (d, p) = quartic(5.0);
        let th = theta_from_payoffs(&d, &p).unwrap();
        assert!((th.eval(0.4) - 0.2).abs() < 1e-14);
        assert!((th.eval(3.0) - (0.25 + 0.25 / 81.0)).abs() < 1e-14);
    }

    #[test]
    fn power_h_theta_closed_form() {
        let d = make_diffusion(DiffusionSpec::gbm(0.0, 1.0, 1.0)).unwrap();
        let p = PayoffSpec::from_tag(&PayoffTag::PowerH { alpha: 0.5, k: 1.0 }, &d.tag, 0.1).unwrap();
        let th = theta_from_payoffs(&d, &p).unwrap();
        for x in [0.01f64, 0.3, 2.0, 40.0] {
            assert!((th.eval(x) - (x.sqrt() - x)).abs() < 1e-14 * (1.0 + x));
        }
        assert!((th.xi - 0.25).abs() < 1e-8);
        assert_eq!(th.ratio_at_infinity, Extended::NegInf);
    }

    #[test]
    fn capped_theta_closed_forms() {
        let (b, s, r, al) = (0.5, 0.5, 0.25, 0.5);
        let d = make_diffusion(DiffusionSpec::gbm(b, s, r)).unwrap();
        let p = PayoffSpec::from_tag(&PayoffTag::LinearCapped { alpha: al }, &d.tag, 1.0).unwrap();
        let th = theta_from_payoffs(&d, &p).unwrap();
        for x in [0.2f64, 0.7, 1.5, 9.0] {
            let e = if x < 1.0 {
                (r - 2.0 * b - s * s) * x * x + (3.0 * b - 3.0 * r - al) * x
            } else {
                (r + b - s * s) / x - 3.0 * r - al
            };
            assert!((th.eval(x) - e).abs() < 1e-13);
        }
        assert!((th.ratio_at_infinity.finite().unwrap() - (-3.0 - al / r)).abs() < 1e-9);
        let (b, s, a, al) = (0.5, 0.5, 0.5, 1.5);
        let d = make_diffusion(DiffusionSpec::gbm(b, s, b)).unwrap();
        let p = PayoffSpec::from_tag(&PayoffTag::PowerCapped { a, alpha: al }, &d.tag, 1.0).unwrap();
        let th = theta_from_payoffs(&d, &p).unwrap();
        for x in [0.2f64, 0.7, 1.5, 9.0] {
            let e = if x < 1.0 {
                (b - 2.0 * b - s * s) * x * x + a * x.powf(al)
            } else {
                (2.0 * b - s * s) / x - 3.0 * b + a
            };
            assert!((th.eval(x) - e).abs() < 1e-13);
        }
    }

    #[test]
    fn exp_capped_theta_uses_growing_exponential() {
        let (al, g, ka) = (1.0, 0.5, 0.2);
        let d = make_diffusion(DiffusionSpec::mean_rev_sqrt(al)).unwrap();
        let p = PayoffSpec::from_tag(&PayoffTag::ExpCapped { gamma: g, kappa: ka }, &d.tag, 1.0).unwrap();
        let th = theta_from_payoffs(&d, &p).unwrap();
        let e = std::f64::consts::E;
        for x in [0.3f64, 0.9, 1.0, 2.0, 5.0] {
            let ex = if x < 1.0 {
                2.0 * al * ka - 1.0 - 2.0 * al * ka * x + x.exp()
            } else {
                2.0 * al * ka + e + g.exp() - 1.0 - 2.0 * al * ka * x - (g * x).exp()
            };
            assert!((th.eval(x) - ex).abs() < 1e-12, "{x}");
        }
        assert!((th.xi - 1.0).abs() < 1e-8);
        assert_eq!(th.ratio_at_infinity, Extended::NegInf);
    }

    #[test]
    fn zero_payoff_is_not_unimodal() {
        let d = make_diffusion(DiffusionSpec::gbm(0.0, 1.0, 1.0)).unwrap();
        let z: RealFn = Arc::new(|_| 0.0);
        let p = PayoffSpec {
            h: z.clone(),
            k: z.clone(),
            k_prime: z.clone(),
            cum_k: z,
            cost: 1.0,
            h_lower_bound: Some(0.0),
            cum_k_lower_bound: 0.0,
            h_over_r_zero_limit: 0.0,
            kinks: vec![],
            tag: PayoffTag::Custom,
        };
        assert!(matches!(theta_from_payoffs(&d, &p), Err(Error::UnimodalityViolated(_))));
    }

    #[test]
    fn parameter_ranges_enforced() {
        let g = ModelTag::Gbm { b: 0.5, sigma: 0.5, r: 0.25 };
        assert!(PayoffSpec::from_tag(&PayoffTag::LinearCapped { alpha: 0.8 }, &g, 1.0).is_err());
        assert!(PayoffSpec::from_tag(&PayoffTag::PowerH { alpha: 0.5, k: 1.0 }, &g, 1.0).is_err());
        assert!(PayoffSpec::from_tag(&PayoffTag::LinearCapped { alpha: 0.5 }, &g, 0.0).is_err());
        let sq = ModelTag::MeanRevSqrt { alpha: 1.0 };
        assert!(PayoffSpec::from_tag(&PayoffTag::ExpCapped { gamma: 0.5, kappa: 0.6 }, &sq, 1.0).is_err());
        assert!(PayoffSpec::from_tag(&PayoffTag::ExpCapped { gamma: 0.5, kappa: 0.2 }, &g, 1.0).is_err());
    }
}
