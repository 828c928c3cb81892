//! Value function assembly and HJB verification.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::BoundaryKind;
use crate::error::{Error, Result};
use crate::free_boundary::{Case, FreeBoundarySolution};
use crate::numeric::{golden_max, log_grid, probe_limit, Extended};
use crate::problem::Problem;

/// Below this state w is only available as a limit (Case II) or not at all.
pub const X_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct ValueFunction {
    pub case: Case,
    pub cost: f64,
    /// w = R_h + A·ψ below the switch point.
    pub coefficient_a: f64,
    /// β⋆, β°, or ∞.
    pub switch_point: Extended,
    /// γ⋆ in Case I, 0 in Case II.
    pub anchor: Option<f64>,
    /// w at the anchor (the limit at 0 in Case II).
    pub anchor_value: f64,
    /// K at the anchor.
    pub anchor_k: f64,
    /// Declared lower bound of w, from the lower bound of h.
    pub lower_bound: Option<f64>,
    pb: Problem,
}

fn limit_at_zero(f: impl Fn(f64) -> Result<f64>, what: &str) -> Result<f64> {
    let xs: Vec<f64> = (3..=8).map(|k| 10f64.powi(-k)).collect();
    let vals = xs.iter().map(|&x| f(x)).collect::<Result<Vec<_>>>()?;
    match probe_limit(&vals, 1e-6, 1e-12) {
        Ok(Extended::Finite(v)) => Ok(v),
        Ok(other) => Err(Error::LimitNotStabilized(format!("{what} tends to {other} at 0"))),
        Err(e) => Err(Error::LimitNotStabilized(format!("{what} at 0: {e}"))),
    }
}

impl ValueFunction {
    pub fn problem(&self) -> &Problem {
        &self.pb
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if x < X_FLOOR {
            if self.case == Case::II && x >= 0.0 {
                return Ok(self.anchor_value);
            }
            return Err(Error::Precondition(format!("w is not evaluated below {X_FLOOR:e} (x = {x:e})")));
        }
        if x >= self.switch_point.value() {
            return Ok(self.anchor_value + self.pb.payoff.cum_k(x) - self.anchor_k - self.cost);
        }
        Ok(self.pb.r_h()?.value(x)? + self.coefficient_a * self.pb.pair.psi(x))
    }

    /// w′(x); left derivative at the switch point.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        if x < X_FLOOR {
            return Err(Error::Precondition(format!("w' is not evaluated below {X_FLOOR:e}")));
        }
        if x > self.switch_point.value() {
            return Ok(self.pb.payoff.k(x));
        }
        Ok(self.pb.r_h()?.derivative(x)? + self.coefficient_a * self.pb.pair.psi_prime(x))
    }

    /// w − K, constant above the switch point.
    fn v(&self, x: f64) -> Result<f64> {
        Ok(self.eval(x)? - self.pb.payoff.cum_k(x))
    }
}

/// w for the classified case.
pub fn build_value_function(pb: &Problem, sol: &FreeBoundarySolution) -> Result<ValueFunction> {
    let p = pb.with_cost(sol.cost);
    let lower_bound = p.payoff.h_lower_bound.map(|hb| {
        if hb >= 0.0 {
            hb / p.diffusion.r_cap
        } else {
            hb / p.diffusion.r_floor
        }
    });
    let k_inf = sol.k_infinity;
    let (a, switch, anchor, anchor_value, anchor_k) = match sol.case {
        Case::I => {
            let (g, b) = match (sol.gamma_star, sol.beta_star) {
                (Some(g), Some(b)) => (g, b),
                _ => return Err(Error::WrongCase("Case I without boundaries".into())),
            };
            let a = k_inf - p.d_ratio(b)?;
            let wg = p.r_h()?.value(g)? + a * p.pair.psi(g);
            (a, Extended::Finite(b), Some(g), wg, p.payoff.cum_k(g))
        }
        Case::II => {
            let b = sol.beta_circ.ok_or_else(|| Error::WrongCase("Case II without beta_circ".into()))?;
            let a = k_inf - p.d_ratio(b)?;
            // R_h(0) = R_Θ(0) − K∞ψ(0) by the decomposition R_h = R_Θ + K − K∞ψ
            let r0 = p.zero.r_theta.finite().ok_or_else(|| Error::LimitNotStabilized("R_theta at 0".into()))?;
            let rh0 = r0 - k_inf * p.zero.psi;
            (a, Extended::Finite(b), Some(0.0), rh0 + a * p.zero.psi, 0.0)
        }
        Case::III | Case::IV => (k_inf, Extended::PosInf, None, f64::NAN, 0.0),
    };
    Ok(ValueFunction {
        case: sol.case,
        cost: sol.cost,
        coefficient_a: a,
        switch_point: switch,
        anchor,
        anchor_value,
        anchor_k,
        lower_bound,
        pb: p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HjbResidual {
    pub x: f64,
    pub w: f64,
    /// 𝓛w + h.
    pub ode: f64,
    /// −c + sup over u ≤ x of (w − K)(u) − (w − K)(x).
    pub intervention: f64,
    /// Maximizing u = x − z.
    pub argmax_u: f64,
}

/// Number of z points (linear) and u points (logarithmic) in the intervention sup.
pub const SUP_GRID: usize = 1000;

/// Both HJB residuals at x.
pub fn hjb_residuals(w: &ValueFunction, x: f64) -> Result<HjbResidual> {
    if !(x >= X_FLOOR) {
        return Err(Error::Precondition(format!("HJB residual needs x >= {X_FLOOR:e}")));
    }
    let pb = &w.pb;
    let wx = w.eval(x)?;
    let ode = if x > w.switch_point.value() {
        let level = w.anchor_value - w.anchor_k - w.cost;
        pb.theta.eval(x) - pb.diffusion.r(x) * level
    } else {
        0.0
    };
    let vx = wx - pb.payoff.cum_k(x);
    let u_min = X_FLOOR.min(x);
    let mut us: Vec<f64> = (1..=SUP_GRID).map(|i| u_min + (x - u_min) * i as f64 / SUP_GRID as f64).collect();
    us.extend(log_grid(u_min, x, SUP_GRID));
    if let Some(g) = w.anchor.filter(|&g| g >= u_min && g <= x) {
        us.push(g);
    }
    us.sort_by(|a, b| a.partial_cmp(b).unwrap());
    us.dedup();
    let mut vs = us.iter().map(|&u| w.v(u)).collect::<Result<Vec<_>>>()?;
    if w.case == Case::II {
        // the sup is attained in the limit u ↓ 0
        us.insert(0, 0.0);
        vs.insert(0, w.anchor_value);
    }
    let (mut best_i, mut best) = (us.len() - 1, vs[us.len() - 1]);
    for (i, &v) in vs.iter().enumerate() {
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut best_u = us[best_i];
    if best_i > 0 && best_i + 1 < us.len() {
        let (a, b) = (us[best_i - 1], us[best_i + 1]);
        let u = golden_max(|u| w.v(u), a, b, 1e-12, a > 0.0)?;
        let v = w.v(u)?;
        if v > best {
            best = v;
            best_u = u;
        }
    }
    let intervention = -w.cost + (best - vx);
    Ok(HjbResidual { x, w: wx, ode, intervention, argmax_u: best_u })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothFitReport {
    /// |w′(β−) − k(β)|.
    pub beta_gap: Option<f64>,
    /// |w′(γ⋆) − k(γ⋆)|, Case I only.
    pub gamma_gap: Option<f64>,
    /// |w(β−) − w(β+)|.
    pub value_gap: Option<f64>,
}

pub fn smooth_fit_report(w: &ValueFunction) -> Result<SmoothFitReport> {
    let b = match w.switch_point {
        Extended::Finite(b) => b,
        _ => return Ok(SmoothFitReport { beta_gap: None, gamma_gap: None, value_gap: None }),
    };
    let k = |x: f64| w.pb.payoff.k(x);
    let beta_gap = (w.derivative(b)? - k(b)).abs();
    let below = w.pb.r_h()?.value(b)? + w.coefficient_a * w.pb.pair.psi(b);
    let value_gap = (below - w.eval(b)?).abs();
    let gamma_gap = match (w.case, w.anchor) {
        (Case::I, Some(g)) => Some((w.derivative(g)? - k(g)).abs()),
        _ => None,
    };
    Ok(SmoothFitReport { beta_gap: Some(beta_gap), gamma_gap, value_gap: Some(value_gap) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntranceAdvisory {
    pub at_zero: BoundaryKind,
    /// lim w at 0 and lim h/r at 0.
    pub w_zero: Option<f64>,
    pub h_over_r_zero: Option<f64>,
    /// Switching the system off may beat every admissible strategy.
    pub switch_off_may_dominate: bool,
}

/// At an entrance 0, compare w(0) with h(0)/r(0).
pub fn entrance_boundary_diagnostic(w: &ValueFunction) -> Result<EntranceAdvisory> {
    let pb = &w.pb;
    let at_zero = pb.boundaries.at_zero;
    let w0 = match w.case {
        Case::II => w.anchor_value,
        _ => limit_at_zero(|x| w.eval(x), "w")?,
    };
    let hr0 = limit_at_zero(|x| Ok(pb.payoff.h(x) / pb.diffusion.r(x)), "h/r")?;
    if at_zero == BoundaryKind::Natural {
        return Ok(EntranceAdvisory { at_zero, w_zero: Some(w0), h_over_r_zero: Some(hr0), switch_off_may_dominate: false });
    }
    Ok(EntranceAdvisory { at_zero, w_zero: Some(w0), h_over_r_zero: Some(hr0), switch_off_may_dominate: w0 < hr0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub points: usize,
    /// HJB residual tolerance.
    pub tolerance: f64,
    pub smooth_fit_tolerance: f64,
    pub transversality_x: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { points: 500, tolerance: 1e-6, smooth_fit_tolerance: 1e-6, transversality_x: 1e5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub case: Case,
    pub grid_min: f64,
    pub grid_max: f64,
    pub points: usize,
    pub tolerance: f64,
    pub max_ode_residual: f64,
    pub max_intervention_residual: f64,
    /// max over the grid of |max(ode, intervention)|.
    pub max_hjb_defect: f64,
    pub smooth_fit: SmoothFitReport,
    pub min_w: f64,
    pub lower_bound: Option<f64>,
    pub bounded_below: bool,
    /// |w(X)|/ψ(X) and its allowance 10·K∞ + 1e-3.
    pub transversality_ratio: f64,
    pub transversality_limit: f64,
    /// Reported only; not part of `passed`.
    pub transversality_ok: bool,
    pub advisory: Option<EntranceAdvisory>,
    pub passed: bool,
    pub rows: Vec<HjbResidual>,
}

/// The verification grid: [1e-3·γ⋆, 10·β⋆] in Case I, [1e-3·β°, 10·β°] in
/// Case II, [1e-3, 1e3] otherwise.
pub fn verification_grid(w: &ValueFunction, points: usize) -> (f64, f64, Vec<f64>) {
    let (a, b) = match (w.case, w.switch_point) {
        (Case::I, Extended::Finite(b)) => (1e-3 * w.anchor.unwrap_or(b), 10.0 * b),
        (Case::II, Extended::Finite(b)) => (1e-3 * b, 10.0 * b),
        _ => (1e-3, 1e3),
    };
    let (a, b) = (a.max(X_FLOOR), b);
    (a, b, log_grid(a, b, points))
}

pub fn verify(w: &ValueFunction, cfg: &VerifyConfig) -> Result<VerificationReport> {
    let (lo, hi, grid) = verification_grid(w, cfg.points);
    let rows = grid.par_iter().map(|&x| hjb_residuals(w, x)).collect::<Result<Vec<_>>>()?;
    let max_ode = rows.iter().map(|r| r.ode).fold(f64::NEG_INFINITY, f64::max);
    let max_int = rows.iter().map(|r| r.intervention).fold(f64::NEG_INFINITY, f64::max);
    let defect = rows.iter().map(|r| r.ode.max(r.intervention).abs()).fold(0.0, f64::max);
    let smooth = smooth_fit_report(w)?;
    let min_w = rows.iter().map(|r| r.w).fold(f64::INFINITY, f64::min);
    let bounded = w.lower_bound.is_none_or(|lb| min_w >= lb - 1e-9);
    let xt = cfg.transversality_x;
    let t_ratio = w.eval(xt)?.abs() / w.pb.pair.psi(xt);
    let t_limit = 10.0 * w.pb.k_infinity + 1e-3;
    let advisory = match w.pb.boundaries.at_zero {
        BoundaryKind::Entrance => Some(entrance_boundary_diagnostic(w)?),
        BoundaryKind::Natural => None,
    };
    let gaps_ok = [smooth.beta_gap, smooth.gamma_gap, smooth.value_gap]
        .iter()
        .flatten()
        .all(|&g| g <= cfg.smooth_fit_tolerance);
    let passed = defect <= cfg.tolerance && gaps_ok && bounded;
    Ok(VerificationReport {
        case: w.case,
        grid_min: lo,
        grid_max: hi,
        points: cfg.points,
        tolerance: cfg.tolerance,
        max_ode_residual: max_ode,
        max_intervention_residual: max_int,
        max_hjb_defect: defect,
        smooth_fit: smooth,
        min_w,
        lower_bound: w.lower_bound,
        bounded_below: bounded,
        transversality_ratio: t_ratio,
        transversality_limit: t_limit,
        transversality_ok: t_ratio < t_limit,
        advisory,
        passed,
        rows,
    })
}
