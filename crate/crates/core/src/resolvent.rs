//! Resolvent tables R_F = φ·∫₀ˣFΨ + ψ·∫ₓ^∞FΦ and the functions built on them.

use serde::{Deserialize, Serialize};

use crate::diffusion::{FundamentalPair, RealFn};
use crate::error::{Error, Result};
use crate::numeric::{integrate, log_grid, probe_limit, Extended, NeumaierSum, QuadConfig};
use crate::payoff::{PayoffSpec, ThetaFunction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResolventConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub nodes_per_decade: usize,
    pub rel_tol: f64,
    /// A tail panel counts as negligible below this fraction of the running value.
    pub tail_rel: f64,
}

impl Default for ResolventConfig {
    fn default() -> Self {
        Self { x_min: 1e-8, x_max: 1e8, nodes_per_decade: 32, rel_tol: 1e-13, tail_rel: 1e-17 }
    }
}

impl ResolventConfig {
    fn quad(&self) -> QuadConfig {
        QuadConfig { rel_tol: self.rel_tol, abs_tol: 1e-300, max_segments: 400 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    /// Range covered by tabulated nodes.
    pub x_min: f64,
    pub x_max: f64,
    /// ∫₀^{x_min} FΨ and the point where its panel sum was stopped.
    pub lower_tail: f64,
    pub lower_cutoff: f64,
    /// ∫_{x_max}^∞ FΦ and the point where its panel sum was stopped.
    pub upper_tail: f64,
    pub upper_cutoff: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Density {
    /// Ψ, used for ∫₀ˣ.
    Lower,
    /// Φ, used for ∫ₓ^∞.
    Upper,
}

#[derive(Clone)]
pub struct ResolventTable {
    pair: FundamentalPair,
    f: RealFn,
    nodes: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    lower_abs: Vec<f64>,
    upper_abs: Vec<f64>,
    pub tail: TailReport,
    cfg: ResolventConfig,
}

impl std::fmt::Debug for ResolventTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResolventTable").field("nodes", &self.nodes.len()).field("tail", &self.tail).finish()
    }
}

fn weighted(pair: &FundamentalPair, g: &dyn Fn(f64) -> f64, which: Density, u: f64, offset: f64) -> f64 {
    let x = u.exp();
    let gv = g(x);
    if gv == 0.0 {
        return 0.0;
    }
    let ln_w = match which {
        Density::Lower => pair.ln_big_psi(x),
        Density::Upper => pair.ln_big_phi(x),
    };
    gv * (ln_w + u + offset).exp()
}

struct Integrator<'a> {
    pair: &'a FundamentalPair,
    cfg: &'a ResolventConfig,
}

impl Integrator<'_> {
    /// ∫ₐᵇ g·(Ψ or Φ) ds, integrated in u = ln s.
    fn panel(&self, g: &dyn Fn(f64) -> f64, which: Density, a: f64, b: f64, scale: f64) -> Result<(f64, f64)> {
        self.panel_scaled(g, which, a, b, scale, 0.0)
    }

    /// Same, with the integrand multiplied by e^offset.
    fn panel_scaled(&self, g: &dyn Fn(f64) -> f64, which: Density, a: f64, b: f64, scale: f64, offset: f64) -> Result<(f64, f64)> {
        let h = |u: f64| weighted(self.pair, g, which, u, offset);
        let q = integrate(&h, a.ln(), b.ln(), scale, &self.cfg.quad())?;
        Ok((q.value, q.abs_value))
    }

    /// Sum doubling panels from `from` toward 0 (`down`) or ∞ until they are
    /// negligible, extrapolating a geometric remainder if the range runs out.
    fn tail(&self, g: &dyn Fn(f64) -> f64, which: Density, from: f64, down: bool) -> Result<(f64, f64)> {
        self.tail_scaled(g, which, from, down, 0.0)
    }

    fn tail_scaled(&self, g: &dyn Fn(f64) -> f64, which: Density, from: f64, down: bool, offset: f64) -> Result<(f64, f64)> {
        let mut sum = NeumaierSum::new();
        let mut x = from;
        let mut quiet = 0;
        let mut prev: Option<f64> = None;
        let mut last = 0.0;
        let mut ratio = 1.0;
        let mut peak = 0f64;
        let mut abs_sum = 0.0;
        for _ in 0..2100 {
            let y = if down { x * 0.5 } else { x * 2.0 };
            if !(1e-300..=1e300).contains(&y) {
                break;
            }
            let (a, b) = if down { (y, x) } else { (x, y) };
            let v = match self.panel_scaled(g, which, a, b, abs_sum, offset) {
                Ok((v, av)) => {
                    abs_sum += av;
                    v
                }
                Err(_) => {
                    // integrand no longer representable; accept if it has already died out
                    let edge = weighted(self.pair, g, which, x.ln(), offset).abs();
                    if edge <= 1e-13 * sum.value().abs().max(peak) {
                        return Ok((sum.value(), x));
                    }
                    break;
                }
            };
            sum.add(v);
            peak = peak.max(v.abs());
            if let Some(p) = prev {
                if p != 0.0 {
                    ratio = (v / p).abs();
                }
            }
            prev = Some(v);
            last = v;
            x = y;
            if v.abs() <= self.cfg.tail_rel * sum.value().abs().max(peak) || v == 0.0 {
                quiet += 1;
                if quiet >= 2 {
                    return Ok((sum.value(), x));
                }
            } else {
                quiet = 0;
            }
        }
        // range exhausted or integrand no longer representable
        if last.abs() <= 1e-13 * sum.value().abs().max(peak) {
            return Ok((sum.value(), x));
        }
        if ratio < 0.95 {
            sum.add(last * ratio / (1.0 - ratio));
            return Ok((sum.value(), x));
        }
        Err(Error::TailBoundUnattainable(x))
    }
}

impl ResolventTable {
    pub fn build(pair: &FundamentalPair, f: RealFn, kinks: &[f64], cfg: &ResolventConfig) -> Result<Self> {
        let (pa, pb) = pair.domain();
        let lo = cfg.x_min.max(pa);
        let hi = cfg.x_max.min(pb);
        let decades = (hi / lo).log10();
        let n = ((decades * cfg.nodes_per_decade as f64).round() as usize).max(2) + 1;
        let mut nodes = log_grid(lo, hi, n);
        nodes.extend(kinks.iter().copied().filter(|&k| k > lo && k < hi));
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        nodes.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
        let usable = |x: f64| {
            let (lp, lf) = (pair.ln_psi(x), pair.ln_phi(x));
            let fx = f(x);
            fx.is_finite() && lp.abs() < 690.0 && lf.abs() < 690.0 && pair.ln_scale_prime(x).abs() < 690.0
        };
        let start = nodes.iter().position(|&x| usable(x));
        let start = start.ok_or_else(|| Error::IntegrabilityCheckFailed("no usable node".into()))?;
        let mut end = start;
        while end + 1 < nodes.len() && usable(nodes[end + 1]) {
            end += 1;
        }
        let nodes: Vec<f64> = nodes[start..=end].to_vec();
        if nodes.len() < 2 {
            return Err(Error::IntegrabilityCheckFailed("table range collapsed".into()));
        }
        let it = Integrator { pair, cfg };
        let g = |x: f64| f(x);
        let wrap = |e: Error| match e {
            Error::TailBoundUnattainable(x) => Error::IntegrabilityCheckFailed(format!("tail diverges near x = {x:e}")),
            other => other,
        };
        let (lower_tail, lower_cutoff) = it.tail(&g, Density::Lower, nodes[0], true).map_err(wrap)?;
        let (upper_tail, upper_cutoff) = it.tail(&g, Density::Upper, nodes[nodes.len() - 1], false).map_err(wrap)?;
        let m = nodes.len();
        let mut lower = vec![0.0; m];
        let mut lower_abs = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut upper_abs = vec![0.0; m];
        let mut acc = NeumaierSum::new();
        acc.add(lower_tail);
        let mut acc_abs = lower_tail.abs();
        lower[0] = lower_tail;
        lower_abs[0] = acc_abs;
        for i in 0..m - 1 {
            let (v, a) = it.panel(&g, Density::Lower, nodes[i], nodes[i + 1], acc_abs)?;
            acc.add(v);
            acc_abs += a;
            lower[i + 1] = acc.value();
            lower_abs[i + 1] = acc_abs;
        }
        let mut acc = NeumaierSum::new();
        acc.add(upper_tail);
        let mut acc_abs = upper_tail.abs();
        upper[m - 1] = upper_tail;
        upper_abs[m - 1] = acc_abs;
        for i in (0..m - 1).rev() {
            let (v, a) = it.panel(&g, Density::Upper, nodes[i], nodes[i + 1], acc_abs)?;
            acc.add(v);
            acc_abs += a;
            upper[i] = acc.value();
            upper_abs[i] = acc_abs;
        }
        if lower.iter().chain(upper.iter()).any(|v| !v.is_finite()) {
            return Err(Error::IntegrabilityCheckFailed("non-finite resolvent integral".into()));
        }
        let tail = TailReport { x_min: nodes[0], x_max: nodes[m - 1], lower_tail, lower_cutoff, upper_tail, upper_cutoff };
        Ok(ResolventTable { pair: pair.clone(), f, nodes, lower, upper, lower_abs, upper_abs, tail, cfg: *cfg })
    }

    pub fn pair(&self) -> &FundamentalPair {
        &self.pair
    }

    pub fn f(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    fn integrator(&self) -> Integrator<'_> {
        Integrator { pair: &self.pair, cfg: &self.cfg }
    }

    /// Index of the node nearest to x in ln-distance.
    fn nearest(&self, x: f64) -> usize {
        let i = self.nodes.partition_point(|&n| n <= x);
        if i == 0 {
            return 0;
        }
        if i >= self.nodes.len() {
            return self.nodes.len() - 1;
        }
        if (x / self.nodes[i - 1]).ln() <= (self.nodes[i] / x).ln() {
            i - 1
        } else {
            i
        }
    }

    fn check_x(x: f64) -> Result<()> {
        if x > 0.0 && x.is_finite() {
            Ok(())
        } else {
            Err(Error::Precondition(format!("resolvent evaluated at x = {x}")))
        }
    }

    /// ∫₀ˣ F·Ψ.
    pub fn lower_integral(&self, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        let it = self.integrator();
        let g = |s: f64| (self.f)(s);
        let (n0, nn) = (self.nodes[0], self.nodes[self.nodes.len() - 1]);
        if x < n0 {
            return Ok(it.tail(&g, Density::Lower, x, true)?.0);
        }
        if x > nn {
            let last = self.nodes.len() - 1;
            let (v, _) = it.panel(&g, Density::Lower, nn, x, self.lower_abs[last])?;
            return Ok(self.lower[last] + v);
        }
        let i = self.nearest(x);
        let (v, _) = it.panel(&g, Density::Lower, self.nodes[i], x, self.lower_abs[i])?;
        Ok(self.lower[i] + v)
    }

    /// ∫ₓ^∞ F·Φ.
    pub fn upper_integral(&self, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        let it = self.integrator();
        let g = |s: f64| (self.f)(s);
        let (n0, nn) = (self.nodes[0], self.nodes[self.nodes.len() - 1]);
        if x > nn {
            return Ok(it.tail(&g, Density::Upper, x, false)?.0);
        }
        if x < n0 {
            let (v, _) = it.panel(&g, Density::Upper, x, n0, self.upper_abs[0])?;
            return Ok(self.upper[0] + v);
        }
        let i = self.nearest(x);
        let (v, _) = it.panel(&g, Density::Upper, self.nodes[i], x, self.upper_abs[i])?;
        Ok(self.upper[i] - v)
    }

    /// s·e^{ln_lo}·∫₀ˣ F·Ψ + e^{ln_up}·∫ₓ^∞ F·Φ. Outside the node range the
    /// coefficients are folded into the integrands so that neither factor
    /// has to be representable on its own.
    fn combine(&self, x: f64, ln_lo: f64, sign_lo: f64, ln_up: f64) -> Result<f64> {
        Self::check_x(x)?;
        let (n0, nn) = (self.nodes[0], self.nodes[self.nodes.len() - 1]);
        let it = self.integrator();
        let g = |s: f64| (self.f)(s);
        let scaled = |v: f64, ln: f64| if v == 0.0 { 0.0 } else { v * ln.exp() };
        if x > nn {
            let last = self.nodes.len() - 1;
            let base = scaled(self.lower[last], ln_lo);
            let (v, _) = it.panel_scaled(&g, Density::Lower, nn, x, scaled(self.lower_abs[last], ln_lo), ln_lo)?;
            if ln_up == f64::NEG_INFINITY {
                return Ok(sign_lo * (base + v));
            }
            let (u, _) = it.tail_scaled(&g, Density::Upper, x, false, ln_up)?;
            return Ok(sign_lo * (base + v) + u);
        }
        if x < n0 {
            let (l, _) = it.tail_scaled(&g, Density::Lower, x, true, ln_lo)?;
            let base = scaled(self.upper[0], ln_up);
            let (v, _) = it.panel_scaled(&g, Density::Upper, x, n0, scaled(self.upper_abs[0], ln_up), ln_up)?;
            return Ok(sign_lo * l + base + v);
        }
        let (l, u) = (self.lower_integral(x)?, self.upper_integral(x)?);
        Ok(sign_lo * scaled(l, ln_lo) + scaled(u, ln_up))
    }

    /// R_F(x).
    pub fn value(&self, x: f64) -> Result<f64> {
        let p = &self.pair;
        self.combine(x, p.ln_phi(x), 1.0, p.ln_psi(x))
    }

    /// R′_F(x) = φ′L + ψ′U.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        let p = &self.pair;
        let (vf, vp) = (p.v_phi(x), p.v_psi(x));
        let lx = x.ln();
        self.combine(x, p.ln_phi(x) + vf.abs().ln() - lx, vf.signum(), p.ln_psi(x) + vp.ln() - lx)
    }

    /// R′_F(x)/ψ′(x).
    pub fn d_ratio(&self, x: f64) -> Result<f64> {
        let p = &self.pair;
        let q = p.v_phi(x) / p.v_psi(x);
        self.combine(x, p.ln_phi(x) - p.ln_psi(x) + q.abs().ln(), q.signum(), 0.0)
    }

    /// G_F(x) = C p′(x)/ψ′(x) · ∫₀ˣ F·Ψ.
    pub fn g(&self, x: f64) -> Result<f64> {
        let p = &self.pair;
        if x <= self.nodes[self.nodes.len() - 1] {
            return Ok(p.c_p_over_psi_prime(x) * self.lower_integral(x)?);
        }
        let ln_c = p.wronskian_c.ln() + p.ln_scale_prime(x) - p.ln_psi(x) + x.ln() - p.v_psi(x).ln();
        self.combine(x, ln_c, 1.0, f64::NEG_INFINITY)
    }

    /// ∫₀ˣ g·Ψ for an arbitrary integrand, on this table's panel layout.
    pub fn integrate_lower_with(&self, g: &dyn Fn(f64) -> f64, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        let it = self.integrator();
        let n0 = self.nodes[0];
        if x <= n0 {
            return Ok(it.tail(g, Density::Lower, x, true)?.0);
        }
        let mut sum = NeumaierSum::new();
        let (t, _) = it.tail(g, Density::Lower, n0, true)?;
        let mut scale = t.abs();
        sum.add(t);
        let mut a = n0;
        for &b in self.nodes[1..].iter().take_while(|&&b| b < x) {
            let (v, abs) = it.panel(g, Density::Lower, a, b, scale)?;
            sum.add(v);
            scale += abs;
            a = b;
        }
        let (v, _) = it.panel(g, Density::Lower, a, x, scale)?;
        sum.add(v);
        Ok(sum.value())
    }
}

/// R_F as a table for F.
pub fn resolvent(pair: &FundamentalPair, f: RealFn, kinks: &[f64], cfg: &ResolventConfig) -> Result<ResolventTable> {
    ResolventTable::build(pair, f, kinks, cfg)
}

/// G_F(x) from a resolvent table of F.
pub fn g_function(table: &ResolventTable, x: f64) -> Result<f64> {
    table.g(x)
}

/// Q_Θ(x) = ∫₀ˣ (Θ(s)/r(s) − Θ(x)/r(x)) r(s)Ψ(s) ds, which equals
/// ∫₀ˣΘΨ − (Θ(x)/r(x))·ψ′(x)/(C p′(x)) without the cancellation.
pub fn q_theta(table: &ResolventTable, theta: &ThetaFunction, x: f64) -> Result<f64> {
    let level = theta.ratio(x);
    let d = table.pair().diffusion().clone();
    let th = theta.theta.clone();
    let g = move |s: f64| th(s) - level * d.r(s);
    table.integrate_lower_with(&g, x)
}

/// K∞ = lim K(x)/ψ(x), probed at the decades from 10³ up to `x_inf`.
pub fn k_infinity(pair: &FundamentalPair, p: &PayoffSpec, x_inf: f64) -> Result<f64> {
    let top = x_inf.log10().round() as i32;
    let xs: Vec<f64> = (3..=top.max(5)).map(|k| 10f64.powi(k)).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| p.cum_k(x) * (-pair.ln_psi(x)).exp()).collect();
    match probe_limit(&vals, 1e-4, 1e-10) {
        Ok(Extended::Finite(v)) => {
            let peak = vals.iter().fold(0f64, |m, x| m.max(x.abs()));
            Ok(if v.abs() < 1e-8 || v.abs() <= 1e-4 * peak { 0.0 } else { v })
        }
        Ok(other) => Err(Error::LimitNotStabilized(format!("K/psi tends to {other}"))),
        Err(e) => Err(Error::LimitNotStabilized(format!("K/psi: {e}"))),
    }
}
