//! Uncontrolled diffusion, scale density, fundamental solutions and boundary
//! classification.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{integrate, log_grid, probe_limit, Extended, QuadConfig};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Catalogue identifier with parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelTag {
    Gbm { b: f64, sigma: f64, r: f64 },
    Logistic { kappa: f64, gamma: f64, sigma: f64, ell: f64, r: f64 },
    LogOu { kappa: f64, gamma: f64, sigma: f64, r: f64 },
    MeanRevSqrt { alpha: f64 },
    Custom,
}

impl ModelTag {
    pub fn name(&self) -> &'static str {
        match self {
            ModelTag::Gbm { .. } => "gbm",
            ModelTag::Logistic { .. } => "logistic",
            ModelTag::LogOu { .. } => "log-ou",
            ModelTag::MeanRevSqrt { .. } => "mean-rev-sqrt",
            ModelTag::Custom => "custom",
        }
    }

    /// GBM exponents (m, n) with m < 0 < n.
    pub fn gbm_exponents(b: f64, sigma: f64, r: f64) -> (f64, f64) {
        let s2 = sigma * sigma;
        let a = 0.5 - b / s2;
        let disc = (a * a + 2.0 * r / s2).sqrt();
        (snap(a - disc), snap(a + disc))
    }
}

#[derive(Clone)]
pub struct DiffusionSpec {
    pub drift: RealFn,
    pub volatility: RealFn,
    pub discount: RealFn,
    pub tag: ModelTag,
    /// Declared floor r0 of the discount rate.
    pub r_floor: f64,
    /// Declared cap of the discount rate.
    pub r_cap: f64,
    validated: bool,
}

impl std::fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("tag", &self.tag)
            .field("r_floor", &self.r_floor)
            .field("r_cap", &self.r_cap)
            .field("validated", &self.validated)
            .finish()
    }
}

/// Round to the nearest multiple of 2^-10 when within a few ulps of it, so
/// that parameters like σ = 1/√2 give the exact exponents.
fn snap(v: f64) -> f64 {
    let k = (v * 1024.0).round() / 1024.0;
    if (v - k).abs() <= 8.0 * f64::EPSILON * v.abs().max(1.0) {
        k
    } else {
        v
    }
}

fn constant(v: f64) -> RealFn {
    Arc::new(move |_| v)
}

impl DiffusionSpec {
    pub fn gbm(b: f64, sigma: f64, r: f64) -> Self {
        DiffusionSpec {
            drift: Arc::new(move |x| b * x),
            volatility: Arc::new(move |x| sigma * x),
            discount: constant(r),
            tag: ModelTag::Gbm { b, sigma, r },
            r_floor: r,
            r_cap: r,
            validated: false,
        }
    }

    /// dX = κ(γ − X)X dt + σX^ℓ dW.
    pub fn logistic(kappa: f64, gamma: f64, sigma: f64, ell: f64, r: f64) -> Self {
        DiffusionSpec {
            drift: Arc::new(move |x| kappa * (gamma - x) * x),
            volatility: Arc::new(move |x| sigma * x.powf(ell)),
            discount: constant(r),
            tag: ModelTag::Logistic { kappa, gamma, sigma, ell, r },
            r_floor: r,
            r_cap: r,
            validated: false,
        }
    }

    /// Exponential of an Ornstein-Uhlenbeck process.
    pub fn log_ou(kappa: f64, gamma: f64, sigma: f64, r: f64) -> Self {
        DiffusionSpec {
            drift: Arc::new(move |x| (kappa * gamma + 0.5 * sigma * sigma - kappa * x.ln()) * x),
            volatility: Arc::new(move |x| sigma * x),
            discount: constant(r),
            tag: ModelTag::LogOu { kappa, gamma, sigma, r },
            r_floor: r,
            r_cap: r,
            validated: false,
        }
    }

    /// dX = α(2 − X) dt + √(2αX) dW with r ≡ α.
    pub fn mean_rev_sqrt(alpha: f64) -> Self {
        DiffusionSpec {
            drift: Arc::new(move |x| alpha * (2.0 - x)),
            volatility: Arc::new(move |x| (2.0 * alpha * x).sqrt()),
            discount: constant(alpha),
            tag: ModelTag::MeanRevSqrt { alpha },
            r_floor: alpha,
            r_cap: alpha,
            validated: false,
        }
    }

    pub fn custom(drift: RealFn, volatility: RealFn, discount: RealFn, r_floor: f64, r_cap: f64) -> Self {
        DiffusionSpec { drift, volatility, discount, tag: ModelTag::Custom, r_floor, r_cap, validated: false }
    }

    pub fn from_tag(tag: &ModelTag) -> Result<Self> {
        match *tag {
            ModelTag::Gbm { b, sigma, r } => Ok(Self::gbm(b, sigma, r)),
            ModelTag::Logistic { kappa, gamma, sigma, ell, r } => {
                if !(1.0..=1.5).contains(&ell) {
                    return Err(Error::InvalidParameter(format!("logistic ell = {ell} outside [1, 1.5]")));
                }
                if kappa <= 0.0 || gamma <= 0.0 || sigma <= 0.0 {
                    return Err(Error::InvalidParameter("logistic kappa, gamma, sigma must be positive".into()));
                }
                if ell == 1.0 && kappa * gamma - 0.5 * sigma * sigma <= 0.0 {
                    return Err(Error::InvalidParameter("logistic with ell = 1 needs kappa*gamma > sigma^2/2".into()));
                }
                Ok(Self::logistic(kappa, gamma, sigma, ell, r))
            }
            ModelTag::LogOu { kappa, gamma, sigma, r } => {
                if kappa <= 0.0 || gamma <= 0.0 || sigma <= 0.0 {
                    return Err(Error::InvalidParameter("log-ou kappa, gamma, sigma must be positive".into()));
                }
                Ok(Self::log_ou(kappa, gamma, sigma, r))
            }
            ModelTag::MeanRevSqrt { alpha } => {
                if alpha <= 0.0 {
                    return Err(Error::InvalidParameter("mean-rev-sqrt alpha must be positive".into()));
                }
                Ok(Self::mean_rev_sqrt(alpha))
            }
            ModelTag::Custom => Err(Error::InvalidParameter("custom models need explicit coefficient functions".into())),
        }
    }

    pub fn is_validated(&self) -> bool {
        self.validated
    }

    pub fn b(&self, x: f64) -> f64 {
        (self.drift)(x)
    }

    pub fn sigma(&self, x: f64) -> f64 {
        (self.volatility)(x)
    }

    pub fn r(&self, x: f64) -> f64 {
        (self.discount)(x)
    }
}

/// Validate a spec on a log-spaced probe grid over [1e-6, 1e6].
pub fn make_diffusion(spec: DiffusionSpec) -> Result<DiffusionSpec> {
    if !(spec.r_floor > 0.0) || !(spec.r_cap >= spec.r_floor) || !spec.r_cap.is_finite() {
        return Err(Error::DiscountFloorViolated(f64::NAN));
    }
    let r0 = spec.r(0.0);
    if !r0.is_finite() {
        return Err(Error::NonFiniteCoefficient(0.0));
    }
    if r0 < spec.r_floor || r0 > spec.r_cap {
        return Err(Error::DiscountFloorViolated(0.0));
    }
    for x in log_grid(1e-6, 1e6, 241) {
        let (b, s, r) = (spec.b(x), spec.sigma(x), spec.r(x));
        if !b.is_finite() || !s.is_finite() || !r.is_finite() {
            return Err(Error::NonFiniteCoefficient(x));
        }
        if !(s > 0.0) {
            return Err(Error::NonPositiveVolatility(x));
        }
        if r < spec.r_floor * (1.0 - 1e-12) || r > spec.r_cap * (1.0 + 1e-12) {
            return Err(Error::DiscountFloorViolated(x));
        }
    }
    Ok(DiffusionSpec { validated: true, ..spec })
}

/// ln p′(x) = −2∫₁ˣ b/σ².
pub fn ln_scale_derivative(d: &DiffusionSpec, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Precondition(format!("scale derivative needs x > 0, got {x}")));
    }
    let lx = x.ln();
    Ok(match d.tag {
        ModelTag::Gbm { b, sigma, .. } => -2.0 * b / (sigma * sigma) * lx,
        ModelTag::MeanRevSqrt { .. } => x - 1.0 - 2.0 * lx,
        ModelTag::LogOu { kappa, gamma, sigma, .. } => {
            let s2 = sigma * sigma;
            -(2.0 * kappa * gamma / s2 + 1.0) * lx + kappa / s2 * lx * lx
        }
        ModelTag::Logistic { kappa, gamma, sigma, ell, .. } => {
            // ∫₁ˣ s^p ds
            let ip = |p: f64| if (p + 1.0).abs() < 1e-15 { lx } else { (x.powf(p + 1.0) - 1.0) / (p + 1.0) };
            -2.0 * kappa / (sigma * sigma) * (gamma * ip(1.0 - 2.0 * ell) - ip(2.0 - 2.0 * ell))
        }
        ModelTag::Custom => {
            if x == 1.0 {
                return Ok(0.0);
            }
            let g = |u: f64| {
                let s = u.exp();
                let sg = d.sigma(s);
                2.0 * d.b(s) / (sg * sg) * s
            };
            let q = integrate(&g, 0.0, lx, 0.0, &QuadConfig { rel_tol: 1e-12, ..Default::default() })?;
            -q.value
        }
    })
}

/// p′(x) = exp(−2∫₁ˣ b/σ²); p′(1) = 1.
pub fn scale_derivative(d: &DiffusionSpec, x: f64) -> Result<f64> {
    Ok(ln_scale_derivative(d, x)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Catalogue closed form, textbook scaling.
    Textbook,
    /// Numerical pair scaled so that φ(1) = ψ(1) = 1.
    UnitAtOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairConfig {
    pub x_min: f64,
    pub x_max: f64,
    /// Macro step in t = ln x.
    pub step: f64,
    /// Largest number of RK4 substeps per macro step before the table is cut.
    pub max_substeps: usize,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self { x_min: 1e-10, x_max: 1e10, step: 1e-3, max_substeps: 1024 }
    }
}

/// Riccati table for v = d ln w / d ln x on a uniform grid in t = ln x.
#[derive(Debug)]
struct RiccatiTable {
    t0: f64,
    h: f64,
    v_psi: Vec<f64>,
    v_phi: Vec<f64>,
    dv_psi: Vec<f64>,
    dv_phi: Vec<f64>,
    y_psi: Vec<f64>,
    y_phi: Vec<f64>,
    y_p: Vec<f64>,
    dy_p: Vec<f64>,
}

struct Riccati<'a> {
    d: &'a DiffusionSpec,
}

impl Riccati<'_> {
    /// (P, Q) with v_t = P + Q v − v².
    fn coeffs(&self, t: f64) -> (f64, f64) {
        let x = t.exp();
        let s = self.d.sigma(x);
        let s2 = s * s;
        (2.0 * self.d.r(x) * x * x / s2, 1.0 - 2.0 * self.d.b(x) * x / s2)
    }

    fn rhs(&self, t: f64, v: f64) -> f64 {
        let (p, q) = self.coeffs(t);
        p + q * v - v * v
    }

    fn frozen_roots(&self, t: f64) -> (f64, f64, f64) {
        let (p, q) = self.coeffs(t);
        let disc = (q * q + 4.0 * p).sqrt();
        ((q - disc) / 2.0, (q + disc) / 2.0, disc)
    }

    /// RK4 over one macro step for (v, y) with y′ = v.
    fn step(&self, t: f64, v: f64, h: f64, n: usize) -> (f64, f64) {
        let hs = h / n as f64;
        let (mut v, mut y, mut t) = (v, 0.0, t);
        for _ in 0..n {
            let k1 = self.rhs(t, v);
            let k2 = self.rhs(t + 0.5 * hs, v + 0.5 * hs * k1);
            let k3 = self.rhs(t + 0.5 * hs, v + 0.5 * hs * k2);
            let k4 = self.rhs(t + hs, v + hs * k3);
            y += hs / 6.0 * (v + 2.0 * (v + 0.5 * hs * k1) + 2.0 * (v + 0.5 * hs * k2) + (v + hs * k3));
            v += hs / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += hs;
        }
        (v, y)
    }

    fn substeps(&self, t: f64, h: f64) -> usize {
        let (_, _, rate) = self.frozen_roots(t);
        ((rate * h.abs() / 0.2).ceil() as usize).max(1)
    }
}

impl RiccatiTable {
    fn build(d: &DiffusionSpec, cfg: &PairConfig) -> Result<Self> {
        let ric = Riccati { d };
        let h = cfg.step;
        let n_lo_max = ((-cfg.x_min.ln()) / h).round() as i64;
        let n_hi_max = (cfg.x_max.ln() / h).round() as i64;
        let ok = |j: i64| {
            let t = j as f64 * h;
            let (lo, hi, rate) = ric.frozen_roots(t);
            lo.is_finite() && hi.is_finite() && rate.is_finite() && ric.substeps(t, h) <= cfg.max_substeps
        };
        if !ok(0) {
            return Err(Error::SolutionBranchAmbiguous("coefficients too stiff at x = 1".into()));
        }
        let mut n_hi = 0;
        while n_hi < n_hi_max && ok(n_hi + 1) {
            n_hi += 1;
        }
        let mut n_lo = 0;
        while n_lo < n_lo_max && ok(-(n_lo + 1)) {
            n_lo += 1;
        }
        let count = (n_lo + n_hi + 1) as usize;
        let t0 = -(n_lo as f64) * h;
        let tj = |j: usize| t0 + j as f64 * h;
        let mut v_psi = vec![0.0; count];
        let mut y_psi = vec![0.0; count];
        let mut v_phi = vec![0.0; count];
        let mut y_phi = vec![0.0; count];
        v_psi[0] = ric.frozen_roots(tj(0)).1;
        for j in 0..count - 1 {
            let n = ric.substeps(tj(j), h).max(ric.substeps(tj(j + 1), h));
            let (v, dy) = ric.step(tj(j), v_psi[j], h, n);
            v_psi[j + 1] = v;
            y_psi[j + 1] = y_psi[j] + dy;
        }
        v_phi[count - 1] = ric.frozen_roots(tj(count - 1)).0;
        for j in (1..count).rev() {
            let n = ric.substeps(tj(j), h).max(ric.substeps(tj(j - 1), h));
            let (v, dy) = ric.step(tj(j), v_phi[j], -h, n);
            v_phi[j - 1] = v;
            y_phi[j - 1] = y_phi[j] + dy;
        }
        // ln p′ by Simpson on each macro step
        let g = |t: f64| ric.coeffs(t).1 - 1.0;
        let mut y_p = vec![0.0; count];
        let mut dy_p = vec![0.0; count];
        for j in 0..count {
            dy_p[j] = g(tj(j));
        }
        for j in 0..count - 1 {
            y_p[j + 1] = y_p[j] + h / 6.0 * (dy_p[j] + 4.0 * g(tj(j) + 0.5 * h) + dy_p[j + 1]);
        }
        let i1 = n_lo as usize;
        let (sp, sf, sy) = (y_psi[i1], y_phi[i1], y_p[i1]);
        y_psi.iter_mut().for_each(|y| *y -= sp);
        y_phi.iter_mut().for_each(|y| *y -= sf);
        y_p.iter_mut().for_each(|y| *y -= sy);
        for j in 0..count {
            if !(v_psi[j] > 0.0) || !(v_phi[j] < 0.0) || !v_psi[j].is_finite() || !v_phi[j].is_finite() {
                return Err(Error::SolutionBranchAmbiguous(format!(
                    "monotone branches lost at x = {:e} (v_psi = {}, v_phi = {})",
                    tj(j).exp(),
                    v_psi[j],
                    v_phi[j]
                )));
            }
        }
        let dv_psi = (0..count).map(|j| ric.rhs(tj(j), v_psi[j])).collect();
        let dv_phi = (0..count).map(|j| ric.rhs(tj(j), v_phi[j])).collect();
        Ok(RiccatiTable { t0, h, v_psi, v_phi, dv_psi, dv_phi, y_psi, y_phi, y_p, dy_p })
    }

    fn t_range(&self) -> (f64, f64) {
        (self.t0, self.t0 + (self.v_psi.len() - 1) as f64 * self.h)
    }

    /// Cubic Hermite interpolation of (values, slopes); linear extrapolation
    /// outside the table.
    fn hermite(&self, t: f64, val: &[f64], der: &[f64]) -> f64 {
        let n = val.len();
        let (a, b) = self.t_range();
        if t <= a {
            return val[0] + der[0] * (t - a);
        }
        if t >= b {
            return val[n - 1] + der[n - 1] * (t - b);
        }
        let s = (t - self.t0) / self.h;
        let j = (s.floor() as usize).min(n - 2);
        let u = s - j as f64;
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        h00 * val[j] + h10 * self.h * der[j] + h01 * val[j + 1] + h11 * self.h * der[j + 1]
    }

    fn clamp_v(&self, t: f64, val: &[f64], der: &[f64]) -> f64 {
        let (a, b) = self.t_range();
        if t <= a {
            val[0]
        } else if t >= b {
            val[val.len() - 1]
        } else {
            self.hermite(t, val, der)
        }
    }
}

#[derive(Clone)]
enum PairKind {
    Power { m: f64, n: f64 },
    SquareRoot,
    Table(Arc<RiccatiTable>),
}

/// Fundamental solutions φ (decreasing) and ψ (increasing) of 𝓛w = 0.
///
/// Everything is exposed in logarithmic form as well, since ψ overflows for
/// some catalogue models long before the quantities built from it do.
#[derive(Clone)]
pub struct FundamentalPair {
    kind: PairKind,
    pub wronskian_c: f64,
    pub normalization: Normalization,
    d: DiffusionSpec,
}

impl std::fmt::Debug for FundamentalPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.kind {
            PairKind::Power { m, n } => format!("power(m = {m}, n = {n})"),
            PairKind::SquareRoot => "square-root closed form".to_string(),
            PairKind::Table(t) => format!("numerical table on [{:e}, {:e}]", t.t_range().0.exp(), t.t_range().1.exp()),
        };
        f.debug_struct("FundamentalPair")
            .field("kind", &kind)
            .field("wronskian_c", &self.wronskian_c)
            .field("normalization", &self.normalization)
            .finish()
    }
}

fn ln_expm1_over_x(x: f64) -> f64 {
    if x < 1.0 {
        (x.exp_m1() / x).ln()
    } else {
        x + (-(-x).exp()).ln_1p() - x.ln()
    }
}

/// x e^x/(e^x − 1) − 1 without cancellation near 0.
fn sqrt_model_v_psi(x: f64) -> f64 {
    if x < 0.1 {
        let x2 = x * x;
        x / 2.0 + x2 / 12.0 - x2 * x2 / 720.0 + x2 * x2 * x2 / 30240.0 - x2 * x2 * x2 * x2 / 1_209_600.0
    } else {
        x / (-(-x).exp_m1()) - 1.0
    }
}

impl FundamentalPair {
    pub fn diffusion(&self) -> &DiffusionSpec {
        &self.d
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self.kind, PairKind::Table(_))
    }

    /// GBM exponents when the pair is the closed-form power pair.
    pub fn exponents(&self) -> Option<(f64, f64)> {
        match self.kind {
            PairKind::Power { m, n } => Some((m, n)),
            _ => None,
        }
    }

    /// Range on which the pair is computed rather than extrapolated.
    pub fn domain(&self) -> (f64, f64) {
        match &self.kind {
            PairKind::Table(t) => {
                let (a, b) = t.t_range();
                (a.exp(), b.exp())
            }
            _ => (0.0, f64::INFINITY),
        }
    }

    pub fn ln_phi(&self, x: f64) -> f64 {
        match &self.kind {
            PairKind::Power { m, .. } => m * x.ln(),
            PairKind::SquareRoot => -x.ln(),
            PairKind::Table(t) => t.hermite(x.ln(), &t.y_phi, &t.v_phi),
        }
    }

    pub fn ln_psi(&self, x: f64) -> f64 {
        match &self.kind {
            PairKind::Power { n, .. } => n * x.ln(),
            PairKind::SquareRoot => ln_expm1_over_x(x),
            PairKind::Table(t) => t.hermite(x.ln(), &t.y_psi, &t.v_psi),
        }
    }

    /// x φ′(x)/φ(x).
    pub fn v_phi(&self, x: f64) -> f64 {
        match &self.kind {
            PairKind::Power { m, .. } => *m,
            PairKind::SquareRoot => -1.0,
            PairKind::Table(t) => t.clamp_v(x.ln(), &t.v_phi, &t.dv_phi),
        }
    }

    /// x ψ′(x)/ψ(x).
    pub fn v_psi(&self, x: f64) -> f64 {
        match &self.kind {
            PairKind::Power { n, .. } => *n,
            PairKind::SquareRoot => sqrt_model_v_psi(x),
            PairKind::Table(t) => t.clamp_v(x.ln(), &t.v_psi, &t.dv_psi),
        }
    }

    pub fn ln_scale_prime(&self, x: f64) -> f64 {
        match &self.kind {
            PairKind::Power { m, n } => (m + n - 1.0) * x.ln(),
            PairKind::SquareRoot => x - 1.0 - 2.0 * x.ln(),
            PairKind::Table(t) => t.hermite(x.ln(), &t.y_p, &t.dy_p),
        }
    }

    pub fn phi(&self, x: f64) -> f64 {
        self.ln_phi(x).exp()
    }

    pub fn psi(&self, x: f64) -> f64 {
        self.ln_psi(x).exp()
    }

    pub fn phi_prime(&self, x: f64) -> f64 {
        self.phi(x) * self.v_phi(x) / x
    }

    pub fn psi_prime(&self, x: f64) -> f64 {
        self.psi(x) * self.v_psi(x) / x
    }

    pub fn scale_prime(&self, x: f64) -> f64 {
        self.ln_scale_prime(x).exp()
    }

    /// ln of 2/(C σ² p′), shared by Φ and Ψ.
    fn ln_speed(&self, x: f64) -> f64 {
        let s = self.d.sigma(x);
        std::f64::consts::LN_2 - self.wronskian_c.ln() - 2.0 * s.ln() - self.ln_scale_prime(x)
    }

    pub fn ln_big_psi(&self, x: f64) -> f64 {
        self.ln_psi(x) + self.ln_speed(x)
    }

    pub fn ln_big_phi(&self, x: f64) -> f64 {
        self.ln_phi(x) + self.ln_speed(x)
    }

    /// Ψ = 2ψ/(C σ² p′).
    pub fn big_psi(&self, x: f64) -> f64 {
        self.ln_big_psi(x).exp()
    }

    /// Φ = 2φ/(C σ² p′).
    pub fn big_phi(&self, x: f64) -> f64 {
        self.ln_big_phi(x).exp()
    }

    /// φ′(x)/ψ′(x), computed without forming either factor.
    pub fn phi_prime_over_psi_prime(&self, x: f64) -> f64 {
        (self.ln_phi(x) - self.ln_psi(x)).exp() * self.v_phi(x) / self.v_psi(x)
    }

    /// C p′(x)/ψ′(x).
    pub fn c_p_over_psi_prime(&self, x: f64) -> f64 {
        self.wronskian_c * (self.ln_scale_prime(x) - self.ln_psi(x)).exp() * x / self.v_psi(x)
    }

    /// Relative defect of φψ′ − φ′ψ = C p′ at x.
    pub fn wronskian_defect(&self, x: f64) -> f64 {
        let lhs_ln = self.ln_phi(x) + self.ln_psi(x) - x.ln();
        let lhs = (self.v_psi(x) - self.v_phi(x)) * (lhs_ln - self.ln_scale_prime(x)).exp();
        (lhs - self.wronskian_c).abs() / self.wronskian_c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// Closed form when the catalogue has one, numerical otherwise.
    #[default]
    Auto,
    Numerical,
}

pub fn fundamental_solutions(d: &DiffusionSpec) -> Result<FundamentalPair> {
    fundamental_solutions_with(d, PairMode::Auto, &PairConfig::default())
}

pub fn fundamental_solutions_with(d: &DiffusionSpec, mode: PairMode, cfg: &PairConfig) -> Result<FundamentalPair> {
    if !d.is_validated() {
        return Err(Error::Precondition("diffusion spec must be validated first".into()));
    }
    if mode == PairMode::Auto {
        match d.tag {
            ModelTag::Gbm { b, sigma, r } => {
                let (m, n) = ModelTag::gbm_exponents(b, sigma, r);
                return Ok(FundamentalPair {
                    kind: PairKind::Power { m, n },
                    wronskian_c: n - m,
                    normalization: Normalization::Textbook,
                    d: d.clone(),
                });
            }
            ModelTag::MeanRevSqrt { .. } => {
                return Ok(FundamentalPair {
                    kind: PairKind::SquareRoot,
                    wronskian_c: std::f64::consts::E,
                    normalization: Normalization::Textbook,
                    d: d.clone(),
                });
            }
            _ => {}
        }
    }
    let table = RiccatiTable::build(d, cfg)?;
    let i1 = (-table.t0 / table.h).round() as usize;
    let c = table.v_psi[i1] - table.v_phi[i1];
    Ok(FundamentalPair {
        kind: PairKind::Table(Arc::new(table)),
        wronskian_c: c,
        normalization: Normalization::UnitAtOne,
        d: d.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Natural,
    Entrance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDiagnostics {
    pub probes: Vec<f64>,
    /// ψ (near 0) or φ (near ∞), relative to its value at 1.
    pub vanishing_candidate: Vec<f64>,
    /// φ′/p′ (near 0) or ψ′/p′ (near ∞).
    pub flux: Vec<f64>,
    /// ψ′/p′ (near 0) or φ′/p′ (near ∞).
    pub other_flux: Vec<f64>,
    pub limit: Extended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub at_zero: BoundaryKind,
    pub at_infinity: BoundaryKind,
    pub zero: BoundaryDiagnostics,
    pub infinity: BoundaryDiagnostics,
}

fn classify_end(
    probes: Vec<f64>,
    ln_candidate: impl Fn(f64) -> f64,
    ln_ref: f64,
    flux: impl Fn(f64) -> f64,
    other: impl Fn(f64) -> f64,
    end: &str,
) -> Result<(BoundaryKind, BoundaryDiagnostics)> {
    let cand: Vec<f64> = probes.iter().map(|&x| (ln_candidate(x) - ln_ref).exp()).collect();
    let fl: Vec<f64> = probes.iter().map(|&x| flux(x)).collect();
    let ot: Vec<f64> = probes.iter().map(|&x| other(x)).collect();
    let last = *cand.last().unwrap();
    let limit = probe_limit(&cand, 1e-2, 1e-6).unwrap_or(Extended::Finite(last));
    let n = cand.len();
    let stable = (n - 3..n - 1).all(|i| (cand[i + 1] - cand[i]).abs() <= 1e-2 * cand[i].abs());
    let vanishing = last < 1e-6 || matches!(limit, Extended::Finite(l) if l.abs() < 1e-6 && !stable);
    let kind = if vanishing {
        BoundaryKind::Natural
    } else if stable {
        BoundaryKind::Entrance
    } else {
        return Err(Error::InconclusiveClassification(format!("{end}: samples {cand:?}")));
    };
    // corroboration: the flux diverges at a natural end and stays bounded at an entrance end
    let flux_abs: Vec<f64> = fl.iter().map(|v| v.abs()).collect();
    let flux_growing = flux_abs[n - 1] > 10.0 * flux_abs[0] || flux_abs[n - 1].is_infinite();
    let consistent = match kind {
        BoundaryKind::Natural => flux_growing,
        BoundaryKind::Entrance => !flux_growing,
    };
    if !consistent {
        return Err(Error::InconclusiveClassification(format!(
            "{end}: flux {fl:?} disagrees with {kind:?} from {cand:?}"
        )));
    }
    Ok((kind, BoundaryDiagnostics { probes, vanishing_candidate: cand, flux: fl, other_flux: ot, limit }))
}

/// Natural/entrance classification of 0 and ∞ from probes at 10^{∓2..∓8}.
pub fn classify_boundaries(pair: &FundamentalPair) -> Result<BoundaryReport> {
    let lo: Vec<f64> = (2..=8).map(|k| 10f64.powi(-k)).collect();
    let hi: Vec<f64> = (2..=8).map(|k| 10f64.powi(k)).collect();
    let ratio = |ln_a: f64, v: f64, x: f64, ln_p: f64| v / x * (ln_a - ln_p).exp();
    let (at_zero, zero) = classify_end(
        lo,
        |x| pair.ln_psi(x),
        pair.ln_psi(1.0),
        |x| ratio(pair.ln_phi(x), pair.v_phi(x), x, pair.ln_scale_prime(x)),
        |x| ratio(pair.ln_psi(x), pair.v_psi(x), x, pair.ln_scale_prime(x)),
        "0",
    )?;
    let (at_infinity, infinity) = classify_end(
        hi,
        |x| pair.ln_phi(x),
        pair.ln_phi(1.0),
        |x| ratio(pair.ln_psi(x), pair.v_psi(x), x, pair.ln_scale_prime(x)),
        |x| ratio(pair.ln_phi(x), pair.v_phi(x), x, pair.ln_scale_prime(x)),
        "infinity",
    )?;
    // ψ must be unbounded at ∞; a finite limit means ∞ is accessible
    let grow: Vec<f64> = infinity.probes.iter().map(|&x| pair.ln_psi(x) - pair.ln_psi(1.0)).collect();
    let n = grow.len();
    if (n - 3..n - 1).all(|i| (grow[i + 1] - grow[i]).abs() <= 1e-2 * (1.0 + grow[i].abs()) && grow[i + 1] - grow[i] < 1e-2) {
        return Err(Error::NaturalBoundaryViolated(format!("psi tends to a finite limit at infinity: ln psi {grow:?}")));
    }
    Ok(BoundaryReport { at_zero, at_infinity, zero, infinity })
}
