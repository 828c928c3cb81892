//! Structural points x̲, x̄, thresholds c⋆, c°, the boundary system and case classification.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{bisect, probe_limit, Extended};
use crate::problem::Problem;
use crate::resolvent::q_theta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    I,
    II,
    III,
    IV,
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Case::I => "I",
            Case::II => "II",
            Case::III => "III",
            Case::IV => "IV",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralPoints {
    pub xi: f64,
    pub x_lower: Extended,
    pub x_upper: Extended,
    /// lim R′_Θ/ψ′ at 0; `None` when x̲ = ∞ (not needed).
    pub l0: Option<Extended>,
    pub q_infinity: Extended,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub c_star: Extended,
    pub c_circ: Extended,
    /// lim G_Θ at 0 and ∞.
    pub g_zero: Extended,
    pub g_infinity: Extended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeBoundarySolution {
    pub case: Case,
    pub cost: f64,
    pub gamma_star: Option<f64>,
    pub beta_star: Option<f64>,
    pub beta_circ: Option<f64>,
    pub thresholds: Thresholds,
    pub k_infinity: f64,
    pub structural: StructuralPoints,
    /// |D(γ) − D(β)| (Case I) and |F(γ, β) + c| (Cases I, II).
    pub residual_1: Option<f64>,
    pub residual_2: Option<f64>,
}

impl FreeBoundarySolution {
    /// β⋆ in Case I, β° in Case II.
    pub fn switch_point(&self) -> Option<f64> {
        self.beta_star.or(self.beta_circ)
    }
}

fn q_at(pb: &Problem, x: f64) -> Result<f64> {
    q_theta(&pb.r_theta, &pb.theta, x)
}

fn decades_up(from: f64, to: f64) -> Vec<f64> {
    let a = from.log10().ceil() as i32;
    let b = to.log10().round() as i32;
    (a..=b).map(|k| 10f64.powi(k)).collect()
}

/// lim Q_Θ at ∞ from decade probes.
pub fn q_infinity(pb: &Problem) -> Result<Extended> {
    // Θ/r → −∞ forces Q_Θ → ∞
    if pb.theta.ratio_at_infinity == Extended::NegInf {
        return Ok(Extended::PosInf);
    }
    let xs = decades_up(1e3f64.max(10.0 * pb.theta.xi), pb.numerics.x_infinity);
    let xs = if xs.len() < 3 { decades_up(pb.theta.xi * 10.0, pb.theta.xi * 1e4) } else { xs };
    // probes end at the first point where Θ is too noisy to integrate
    let mut vals = Vec::new();
    for &x in &xs {
        match q_at(pb, x) {
            Ok(v) => vals.push(v),
            Err(Error::QuadratureFailure { .. }) if vals.len() >= 3 => break,
            Err(e) => return Err(e),
        }
    }
    probe_limit(&vals, 1e-6, 1e-12).map_err(|e| Error::LimitNotStabilized(format!("Q_theta at infinity: {e}")))
}

/// Unique zero of Q_Θ on ]ξ, ∞[, or ∞.
pub fn find_x_lower(pb: &Problem) -> Result<(Extended, Extended)> {
    let xi = pb.theta.xi;
    let tol = pb.numerics.root_rel_tol;
    let q_xi = q_at(pb, xi)?;
    let q_inf = q_infinity(pb)?;
    let limit_pos = q_inf.value() > 0.0;
    let cap = if limit_pos { pb.numerics.x_infinity * 1e6 } else { pb.numerics.x_infinity };
    let (mut a, mut qa) = (xi, q_xi);
    if qa > 0.0 {
        return Err(Error::BracketNotFound(format!("Q_theta(xi) = {qa} is not negative")));
    }
    let mut x = xi * 2.0;
    while x <= cap {
        let qx = match q_at(pb, x) {
            Ok(v) => v,
            Err(Error::QuadratureFailure { .. }) if x > 1e3 * xi => break,
            Err(e) => return Err(e),
        };
        if qx > 0.0 {
            let root = bisect(|s| q_at(pb, s), a, x, qa, qx, tol)?;
            return Ok((Extended::Finite(root), q_inf));
        }
        a = x;
        qa = qx;
        x *= 2.0;
    }
    match q_inf {
        Extended::Finite(v) if v.abs() <= 1e-9 => {
            Err(Error::BracketNotFound(format!("lim Q_theta = {v:e} is indistinguishable from 0")))
        }
        _ if !limit_pos => Ok((Extended::PosInf, q_inf)),
        _ => Err(Error::LimitNotStabilized(format!("Q_theta stays negative up to {cap:e} but tends to {q_inf}"))),
    }
}

/// lim R′_Θ/ψ′ at 0 from decade probes down to `x_zero`.
pub fn l0_limit(pb: &Problem) -> Result<Extended> {
    let top = -3;
    let bottom = pb.numerics.x_zero.log10().round() as i32;
    let xs: Vec<f64> = (bottom..=top).rev().map(|k| 10f64.powi(k)).collect();
    let vals = xs.iter().map(|&x| pb.d_ratio(x)).collect::<Result<Vec<_>>>()?;
    probe_limit(&vals, 1e-4, 1e-10).map_err(|e| Error::LimitNotStabilized(format!("R'/psi' at 0: {e}")))
}

/// x̄ given x̲ and l0.
pub fn find_x_upper(pb: &Problem, x_lower: f64, l0: Extended) -> Result<Extended> {
    let l = match l0 {
        Extended::PosInf => return Ok(Extended::PosInf),
        Extended::NegInf => return Err(Error::LimitNotStabilized("R'/psi' tends to -inf at 0".into())),
        Extended::Finite(v) if v >= -1e-8 => return Ok(Extended::PosInf),
        Extended::Finite(v) => v,
    };
    let f = |s: f64| Ok(pb.d_ratio(s)? - l);
    let (mut a, mut fa) = (x_lower, f(x_lower)?);
    let mut x = x_lower * 2.0;
    while x <= pb.numerics.x_infinity * 1e6 {
        let fx = f(x)?;
        if fx > 0.0 {
            return Ok(Extended::Finite(bisect(f, a, x, fa, fx, pb.numerics.root_rel_tol)?));
        }
        a = x;
        fa = fx;
        x *= 2.0;
    }
    Err(Error::BracketNotFound(format!("R'/psi' does not return to {l} above {x_lower}")))
}

pub fn structural_points(pb: &Problem) -> Result<StructuralPoints> {
    let (x_lower, q_infinity) = find_x_lower(pb)?;
    let (l0, x_upper) = match x_lower {
        Extended::Finite(xl) => {
            let l0 = l0_limit(pb)?;
            (Some(l0), find_x_upper(pb, xl, l0)?)
        }
        _ => (None, Extended::PosInf),
    };
    Ok(StructuralPoints { xi: pb.theta.xi, x_lower, x_upper, l0, q_infinity })
}

/// Smallest γ probed by [`gamma_of_beta`].
const GAMMA_FLOOR: f64 = 1e-14;

/// γ ∈ ]0, x̲[ with R′_Θ(γ)/ψ′(γ) equal to the same ratio at β.
pub fn gamma_of_beta(pb: &Problem, sp: &StructuralPoints, beta: f64) -> Result<f64> {
    let xl = sp.x_lower.finite().ok_or_else(|| Error::RootNotBracketed("x_lower is infinite".into()))?;
    if beta <= xl || beta >= sp.x_upper.value() {
        return Err(Error::RootNotBracketed(format!("beta = {beta} outside ]{xl}, {}[", sp.x_upper)));
    }
    let target = pb.d_ratio(beta)?;
    let f = |s: f64| Ok(pb.d_ratio(s)? - target);
    let (mut hi, mut fhi) = (xl, f(xl)?);
    if fhi > 0.0 {
        return Err(Error::RootNotBracketed(format!("R'/psi' at x_lower exceeds its value at {beta}")));
    }
    let mut lo = xl * 0.5;
    loop {
        let flo = f(lo)?;
        if flo >= 0.0 {
            return bisect(f, lo, hi, flo, fhi, pb.numerics.root_rel_tol);
        }
        if lo < GAMMA_FLOOR {
            return Err(Error::RootNotBracketed(format!("no gamma above {GAMMA_FLOOR:e} for beta = {beta}")));
        }
        hi = lo;
        fhi = flo;
        lo *= if lo < xl * 1e-3 { 0.01 } else { 0.5 };
    }
}

/// F(γ, β) = G_Θ(β) − G_Θ(γ). For γ = 0 the integral form is used, which
/// reduces to G_Θ(β) − lim G_Θ at a natural 0.
pub fn f_gamma_beta(pb: &Problem, gamma: f64, beta: f64) -> Result<f64> {
    if !(gamma >= 0.0 && gamma < beta) {
        return Err(Error::Precondition(format!("F needs 0 <= gamma < beta, got ({gamma}, {beta})")));
    }
    if gamma > 0.0 {
        return Ok(pb.g(beta)? - pb.g(gamma)?);
    }
    f_integral(pb, 0.0, beta)
}

/// ∫_γ^β (R′_Θ/ψ′(s) − R′_Θ/ψ′(β)) ψ′(s) ds = R_Θ(β) − R_Θ(γ) − R′_Θ(β)/ψ′(β)·(ψ(β) − ψ(γ)).
/// Equal to [`f_gamma_beta`] when R′_Θ/ψ′ takes the same value at γ and β.
pub fn f_integral(pb: &Problem, gamma: f64, beta: f64) -> Result<f64> {
    if !(gamma >= 0.0 && gamma < beta) {
        return Err(Error::Precondition(format!("F needs 0 <= gamma < beta, got ({gamma}, {beta})")));
    }
    let (r, psi) = if gamma == 0.0 {
        let r0 = pb.zero.r_theta.finite().ok_or_else(|| Error::LimitNotStabilized("R_theta has no finite limit at 0".into()))?;
        (r0, pb.zero.psi)
    } else {
        (pb.r_theta.value(gamma)?, pb.pair.psi(gamma))
    };
    let mut f = pb.g(beta)? - r;
    if psi != 0.0 {
        f += pb.d_ratio(beta)? * psi;
    }
    Ok(f)
}

/// F(Γ(β), β), falling back to F(0, β) once Γ(β) is below the search floor.
fn f_along_gamma(pb: &Problem, sp: &StructuralPoints, beta: f64) -> Result<(f64, f64)> {
    match gamma_of_beta(pb, sp, beta) {
        Ok(g) => Ok((g, f_gamma_beta(pb, g, beta)?)),
        Err(Error::RootNotBracketed(_)) if sp.x_upper.is_finite() => Ok((0.0, f_gamma_beta(pb, 0.0, beta)?)),
        Err(e) => Err(e),
    }
}

pub fn c_thresholds(pb: &Problem, sp: &StructuralPoints) -> Result<Thresholds> {
    let g0 = pb.theta.ratio_at_zero;
    let ginf = pb.theta.ratio_at_infinity;
    let c_circ = Extended::from_f64(pb.zero.r_theta.value() - ginf.value());
    let c_star = match (sp.x_lower, sp.x_upper, sp.l0) {
        (Extended::Finite(_), Extended::Finite(xu), _) => Extended::Finite(-f_gamma_beta(pb, 0.0, xu)?),
        (Extended::Finite(_), _, _) if ginf == Extended::NegInf => Extended::PosInf,
        (Extended::Finite(_), _, Some(Extended::Finite(l))) if l.abs() <= 1e-8 => c_circ,
        (Extended::Finite(xl), _, Some(_)) => {
            // Γ(β) → γ∞ with R′_Θ(γ∞)/ψ′(γ∞) = 0 as β → ∞
            let f = |s: f64| pb.d_ratio(s);
            let f_hi = f(xl)?;
            let mut lo = xl * 0.5;
            let mut f_lo = f(lo)?;
            let mut hi = xl;
            while f_lo < 0.0 {
                if lo < GAMMA_FLOOR {
                    return Err(Error::LimitNotStabilized("lim Gamma at infinity not bracketed".into()));
                }
                hi = lo;
                lo *= 0.5;
                f_lo = f(lo)?;
            }
            let f_hi = if hi == xl { f_hi } else { f(hi)? };
            let g_inf = bisect(f, lo, hi, f_lo, f_hi, pb.numerics.root_rel_tol)?;
            Extended::Finite(pb.g(g_inf)? - ginf.value())
        }
        _ => Extended::PosInf,
    };
    Ok(Thresholds { c_star, c_circ, g_zero: g0, g_infinity: ginf })
}

fn no_intervention(pb: &Problem) -> Case {
    if pb.k_infinity > 0.0 {
        Case::IV
    } else {
        Case::III
    }
}

fn ambiguity(pb: &Problem, name: &'static str, value: Extended) -> Result<()> {
    let c = pb.cost();
    match value {
        Extended::Finite(v) if (c - v).abs() <= pb.numerics.threshold_tol => {
            Err(Error::ThresholdAmbiguity { c, name, value: v })
        }
        _ => Ok(()),
    }
}

/// Case classification and optimal boundaries at the problem's own cost.
pub fn solve_boundaries(pb: &Problem) -> Result<FreeBoundarySolution> {
    let sp = structural_points(pb)?;
    let th = c_thresholds(pb, &sp)?;
    solve_with(pb, &sp, &th)
}

/// As [`solve_boundaries`], reusing precomputed structural points and thresholds.
pub fn solve_with(pb: &Problem, sp: &StructuralPoints, th: &Thresholds) -> Result<FreeBoundarySolution> {
    let c = pb.cost();
    let mut sol = FreeBoundarySolution {
        case: no_intervention(pb),
        cost: c,
        gamma_star: None,
        beta_star: None,
        beta_circ: None,
        thresholds: *th,
        k_infinity: pb.k_infinity,
        structural: *sp,
        residual_1: None,
        residual_2: None,
    };
    let xl = match sp.x_lower {
        Extended::Finite(v) => v,
        _ => return Ok(sol),
    };
    ambiguity(pb, "c_star", th.c_star)?;
    if c < th.c_star.value() {
        let tol = pb.numerics.root_rel_tol;
        let f = |b: f64| Ok(f_along_gamma(pb, sp, b)?.1 + c);
        let (mut a, mut fa) = (xl, c);
        let beta = match sp.x_upper {
            Extended::Finite(xu) => {
                let fu = f_gamma_beta(pb, 0.0, xu)? + c;
                bisect(f, xl, xu, c, fu, tol)?
            }
            _ => {
                let mut x = xl * 1.5;
                loop {
                    let fx = f(x)?;
                    if fx < 0.0 {
                        break bisect(f, a, x, fa, fx, tol)?;
                    }
                    if x > pb.numerics.x_infinity * 1e6 {
                        return Err(Error::BracketNotFound(format!("F(Gamma(beta), beta) stays above -{c}")));
                    }
                    a = x;
                    fa = fx;
                    x *= 2.0;
                }
            }
        };
        let gamma = gamma_of_beta(pb, sp, beta)?;
        sol.case = Case::I;
        sol.beta_star = Some(beta);
        sol.gamma_star = Some(gamma);
        sol.residual_1 = Some((pb.d_ratio(gamma)? - pb.d_ratio(beta)?).abs());
        sol.residual_2 = Some((f_gamma_beta(pb, gamma, beta)? + c).abs());
        return Ok(sol);
    }
    let xu = match sp.x_upper {
        Extended::Finite(v) => v,
        _ => return Ok(sol),
    };
    ambiguity(pb, "c_circ", th.c_circ)?;
    if c < th.c_circ.value() {
        let f = |b: f64| Ok(f_gamma_beta(pb, 0.0, b)? + c);
        let (mut a, mut fa) = (xu, f(xu)?);
        let mut x = xu * 2.0;
        let beta = loop {
            let fx = f(x)?;
            if fx < 0.0 {
                break bisect(f, a, x, fa, fx, pb.numerics.root_rel_tol)?;
            }
            if x > pb.numerics.x_infinity * 1e6 {
                return Err(Error::BracketNotFound(format!("F(0, beta) stays above -{c}")));
            }
            a = x;
            fa = fx;
            x *= 2.0;
        };
        sol.case = Case::II;
        sol.beta_circ = Some(beta);
        sol.residual_2 = Some(f(beta)?.abs());
    }
    Ok(sol)
}

/// ε-optimal (β, γ) schedule for Cases II and IV. `x` sets γ in Case IV (default 1).
pub fn epsilon_sequence(sol: &FreeBoundarySolution, n: usize, x: Option<f64>) -> Result<Vec<(f64, f64)>> {
    match sol.case {
        Case::II => {
            let b = sol.beta_circ.ok_or_else(|| Error::WrongCase("Case II without beta_circ".into()))?;
            Ok((1..=n).map(|i| (b, b * 0.5f64.powi(i as i32 + 1))).collect())
        }
        Case::IV => {
            let g = x.unwrap_or(1.0);
            Ok((1..=n).map(|i| (g * 2f64.powi(i as i32 + 1), g)).collect())
        }
        other => Err(Error::WrongCase(format!("epsilon sequence needs Case II or IV, got {other}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub c: f64,
    pub solution: std::result::Result<FreeBoundarySolution, String>,
}

impl SweepRow {
    pub fn case(&self) -> Option<Case> {
        self.solution.as_ref().ok().map(|s| s.case)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub structural: StructuralPoints,
    pub thresholds: Thresholds,
    pub rows: Vec<SweepRow>,
    /// β⋆ strictly increasing and γ⋆ strictly decreasing along Case I rows.
    pub monotone: bool,
}

/// Solve for every c in an increasing grid. Rows are computed in parallel and
/// returned in grid order; a failing row records its error.
pub fn sweep_c(pb: &Problem, c_grid: &[f64]) -> Result<Sweep> {
    if c_grid.windows(2).any(|w| w[1] <= w[0]) || c_grid.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::Precondition("c grid must be positive and strictly increasing".into()));
    }
    let sp = structural_points(pb)?;
    let th = c_thresholds(pb, &sp)?;
    let rows: Vec<SweepRow> = c_grid
        .par_iter()
        .map(|&c| SweepRow { c, solution: solve_with(&pb.with_cost(c), &sp, &th).map_err(|e| e.to_string()) })
        .collect();
    let case1: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.solution.as_ref().ok())
        .filter_map(|s| Some((s.gamma_star?, s.beta_star?)))
        .collect();
    let monotone = case1.windows(2).all(|w| w[1].1 > w[0].1 && w[1].0 < w[0].0);
    Ok(Sweep { structural: sp, thresholds: th, rows, monotone })
}
