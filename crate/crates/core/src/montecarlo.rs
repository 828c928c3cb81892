//! Euler–Maruyama simulation of the controlled state under a β-γ strategy.
//!
//! The discrete path intervenes at the first grid time where the state is at
//! or above β and harvests down to γ from the overshoot value. No crossing
//! correction is applied, so estimates carry a barrier bias of order √dt.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionSpec, FundamentalPair};
use crate::error::{Error, Result};
use crate::numeric::NeumaierSum;
use crate::payoff::PayoffSpec;
use crate::problem::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyBG {
    pub beta: f64,
    pub gamma: f64,
}

impl StrategyBG {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < beta && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("need 0 < gamma < beta < inf, got gamma = {gamma}, beta = {beta}")));
        }
        Ok(StrategyBG { beta, gamma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub dt: f64,
    /// Truncation horizon; `None` means ln(1e6)/r0.
    pub horizon: Option<f64>,
    pub max_halvings: u32,
    pub record_trace: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { dt: 1e-4, horizon: None, max_halvings: 20, record_trace: false }
    }
}

/// Discount floor defining the default horizon: e^{−r0·T} = 1e-6.
pub const DISCOUNT_FLOOR: f64 = 1e-6;

pub fn default_horizon(d: &DiffusionSpec) -> f64 {
    -DISCOUNT_FLOOR.ln() / d.r_floor
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub path_index: u64,
    /// Grid times and states, filled only when tracing.
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub intervention_times: Vec<f64>,
    /// e^{−Λ} at each intervention.
    pub intervention_discounts: Vec<f64>,
    /// ∫ e^{−Λ} h dt.
    pub discounted_running: f64,
    /// Σ e^{−Λ} (∫_γ^{X−} k − c).
    pub discounted_harvest: f64,
    pub discount_at_end: f64,
    pub horizon: f64,
    /// Steps that had to be split to keep the state positive.
    pub halved_steps: u32,
}

impl PathRecord {
    pub fn performance(&self) -> f64 {
        self.discounted_running + self.discounted_harvest
    }

    pub fn discount_sum(&self) -> f64 {
        self.intervention_discounts.iter().copied().collect::<NeumaierSum>().value()
    }

    /// e^{−Λ} at the (ℓ+1)-th intervention, 0 if it never happened.
    pub fn nth_discount(&self, ell: usize) -> f64 {
        self.intervention_discounts.get(ell).copied().unwrap_or(0.0)
    }
}

fn path_rng(seed: u64, path_index: u64, aux: bool) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(if aux { seed ^ 0xA5A5_5A5A_C3C3_3C3C } else { seed });
    rng.set_stream(path_index);
    rng
}

struct Stepper<'a> {
    d: &'a DiffusionSpec,
    p: &'a PayoffSpec,
    aux: ChaCha8Rng,
    max_halvings: u32,
    halved: u32,
    path: u64,
    /// e^{−r h} for the full step when r is constant.
    const_rate: Option<(f64, f64)>,
}

/// State with r and h evaluated there, and e^{−Λ} at that time.
#[derive(Clone, Copy)]
struct Point {
    x: f64,
    r: f64,
    h: f64,
    disc: f64,
}

impl Stepper<'_> {
    fn point(&self, x: f64, lam: f64) -> Point {
        Point { x, r: self.d.r(x), h: self.p.h(x), disc: (-lam).exp() }
    }

    /// One Euler step, or `None` if it leaves (0, ∞).
    #[inline(always)]
    fn try_step(&self, from: Point, h: f64, dw: f64, lam: &mut f64, run: &mut f64) -> Option<Point> {
        let x = from.x;
        let y = x + self.d.b(x) * h + self.d.sigma(x) * dw;
        if !(y > 0.0 && y.is_finite()) {
            return None;
        }
        let hy = self.p.h(y);
        let (ry, disc) = match self.const_rate {
            Some((step, q)) if step == h => {
                *lam += from.r * h;
                (from.r, from.disc * q)
            }
            _ => {
                let ry = self.d.r(y);
                *lam += 0.5 * h * (from.r + ry);
                (ry, (-*lam).exp())
            }
        };
        *run += 0.5 * h * (from.disc * from.h + disc * hy);
        Some(Point { x: y, r: ry, h: hy, disc })
    }

    /// Advance over h with increment dw, accumulating Λ and ∫e^{−Λ}h.
    /// A step landing at or below 0 is split by a Brownian bridge.
    #[allow(clippy::too_many_arguments)]
    fn advance(&mut self, t: f64, from: Point, h: f64, dw: f64, depth: u32, lam: &mut f64, run: &mut f64) -> Result<Point> {
        if let Some(p) = self.try_step(from, h, dw, lam, run) {
            return Ok(p);
        }
        if depth >= self.max_halvings {
            return Err(Error::StateEscapedDomain { path: self.path, t });
        }
        if depth == 0 {
            self.halved += 1;
        }
        let z: f64 = StandardNormal.sample(&mut self.aux);
        let dw1 = 0.5 * dw + 0.5 * h.sqrt() * z;
        let mid = self.advance(t, from, 0.5 * h, dw1, depth + 1, lam, run)?;
        self.advance(t + 0.5 * h, mid, 0.5 * h, dw - dw1, depth + 1, lam, run)
    }
}

/// One path with its own RNG stream determined by (seed, path_index).
pub fn simulate_path(
    d: &DiffusionSpec,
    p: &PayoffSpec,
    strat: StrategyBG,
    x0: f64,
    cfg: &McConfig,
    seed: u64,
    path_index: u64,
) -> Result<PathRecord> {
    simulate_path_coupled(d, p, strat, x0, cfg, seed, path_index, 1)
}

/// As [`simulate_path`], but each step's Brownian increment is the sum of
/// `substeps` draws; paths with dt·k and k substeps share increments with
/// the path at dt and one substep.
#[allow(clippy::too_many_arguments)]
pub fn simulate_path_coupled(
    d: &DiffusionSpec,
    p: &PayoffSpec,
    strat: StrategyBG,
    x0: f64,
    cfg: &McConfig,
    seed: u64,
    path_index: u64,
    substeps: usize,
) -> Result<PathRecord> {
    if !(x0 > 0.0 && x0.is_finite()) {
        return Err(Error::Precondition(format!("x0 must be positive, got {x0}")));
    }
    if !(cfg.dt > 0.0) || substeps == 0 {
        return Err(Error::Precondition(format!("dt must be positive, got {}", cfg.dt)));
    }
    let horizon = cfg.horizon.unwrap_or_else(|| default_horizon(d));
    let n = (horizon / cfg.dt).ceil() as u64;
    let fine = cfg.dt / substeps as f64;
    let sqrt_fine = fine.sqrt();
    let mut rng = path_rng(seed, path_index, false);
    let const_rate = (d.r_floor == d.r_cap).then(|| (cfg.dt, (-d.r_floor * cfg.dt).exp()));
    let mut st = Stepper { d, p, aux: path_rng(seed, path_index, true), max_halvings: cfg.max_halvings, halved: 0, path: path_index, const_rate };

    let mut rec = PathRecord {
        path_index,
        times: vec![],
        states: vec![],
        intervention_times: vec![],
        intervention_discounts: vec![],
        discounted_running: 0.0,
        discounted_harvest: 0.0,
        discount_at_end: 1.0,
        horizon: n as f64 * cfg.dt,
        halved_steps: 0,
    };
    let (mut lam, mut run, mut harvest) = (0.0f64, NeumaierSum::new(), NeumaierSum::new());
    let mut pt = st.point(x0, 0.0);
    let cum_gamma = p.cum_k(strat.gamma);
    for i in 0..=n {
        let t = i as f64 * cfg.dt;
        if pt.x >= strat.beta {
            harvest.add(pt.disc * (p.cum_k(pt.x) - cum_gamma - p.cost));
            rec.intervention_times.push(t);
            rec.intervention_discounts.push(pt.disc);
            pt = Point { x: strat.gamma, r: d.r(strat.gamma), h: p.h(strat.gamma), disc: pt.disc };
        }
        if cfg.record_trace {
            rec.times.push(t);
            rec.states.push(pt.x);
        }
        if i == n {
            break;
        }
        let mut dw = 0.0;
        for _ in 0..substeps {
            let z: f64 = StandardNormal.sample(&mut rng);
            dw += z;
        }
        dw *= sqrt_fine;
        let mut step_run = 0.0;
        pt = match st.try_step(pt, cfg.dt, dw, &mut lam, &mut step_run) {
            Some(next) => next,
            None => st.advance(t, pt, cfg.dt, dw, 0, &mut lam, &mut step_run)?,
        };
        run.add(step_run);
    }
    rec.discounted_running = run.value();
    rec.discounted_harvest = harvest.value();
    rec.discount_at_end = (-lam).exp();
    rec.halved_steps = st.halved;
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub analytic_oracle: Option<f64>,
    pub z_score: Option<f64>,
}

impl SimulationEstimate {
    /// Mean and standard error sample_std/√n, with compensated sums in index order.
    pub fn from_samples(xs: &[f64], oracle: Option<f64>) -> Self {
        let n = xs.len();
        let mean = xs.iter().copied().collect::<NeumaierSum>().value() / n as f64;
        let ss = xs.iter().map(|x| (x - mean) * (x - mean)).collect::<NeumaierSum>().value();
        let var = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
        let std_error = (var / n as f64).sqrt();
        let z_score = oracle.map(|o| if std_error > 0.0 { (mean - o) / std_error } else if mean == o { 0.0 } else { f64::INFINITY });
        SimulationEstimate { mean, std_error, n_paths: n, analytic_oracle: oracle, z_score }
    }

    pub fn with_oracle(self, oracle: f64) -> Self {
        let z = if self.std_error > 0.0 { (self.mean - oracle) / self.std_error } else { 0.0 };
        SimulationEstimate { analytic_oracle: Some(oracle), z_score: Some(z), ..self }
    }

    pub fn within(&self, k: f64) -> bool {
        self.z_score.is_some_and(|z| z.abs() <= k)
    }
}

pub const MIN_PATHS: usize = 100;

/// All paths in index order; parallel over paths, deterministic given the path set.
#[allow(clippy::too_many_arguments)]
pub fn simulate_paths(
    d: &DiffusionSpec,
    p: &PayoffSpec,
    strat: StrategyBG,
    x0: f64,
    n_paths: usize,
    cfg: &McConfig,
    seed: u64,
) -> Result<Vec<PathRecord>> {
    if n_paths < MIN_PATHS {
        return Err(Error::Precondition(format!("need at least {MIN_PATHS} paths, got {n_paths}")));
    }
    (0..n_paths as u64).into_par_iter().map(|i| simulate_path(d, p, strat, x0, cfg, seed, i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub dt: f64,
    pub seed: u64,
    /// J.
    pub performance: SimulationEstimate,
    /// Σ e^{−Λ_{τ_ℓ}}.
    pub discount_sum: SimulationEstimate,
    /// E e^{−Λ_{τ_{ℓ+1}}} for ℓ = 0, 1, 2.
    pub nth_discount: Vec<SimulationEstimate>,
    pub halved_steps: u64,
}

/// J, the discounted intervention sum and the first three intervention
/// discounts from one set of paths, each compared with its closed form.
#[allow(clippy::too_many_arguments)]
pub fn estimate_all(pb: &Problem, strat: StrategyBG, x0: f64, n_paths: usize, cfg: &McConfig, seed: u64) -> Result<McSummary> {
    let paths = simulate_paths(&pb.diffusion, &pb.payoff, strat, x0, n_paths, cfg, seed)?;
    let col = |f: &dyn Fn(&PathRecord) -> f64| paths.iter().map(f).collect::<Vec<_>>();
    let j = analytic_performance(pb, strat, x0)?;
    let s = intervention_discount_sum(&pb.pair, strat, x0)?;
    let nth = (0..3)
        .map(|l| Ok(SimulationEstimate::from_samples(&col(&|r| r.nth_discount(l)), Some(nth_intervention_discount(&pb.pair, strat, x0, l)?))))
        .collect::<Result<Vec<_>>>()?;
    Ok(McSummary {
        dt: cfg.dt,
        seed,
        performance: SimulationEstimate::from_samples(&col(&|r| r.performance()), Some(j)),
        discount_sum: SimulationEstimate::from_samples(&col(&|r| r.discount_sum()), Some(s)),
        nth_discount: nth,
        halved_steps: paths.iter().map(|r| r.halved_steps as u64).sum(),
    })
}

/// MC estimate of J; `oracle` attaches analytic_performance.
pub fn estimate_performance(
    pb: &Problem,
    strat: StrategyBG,
    x0: f64,
    n_paths: usize,
    cfg: &McConfig,
    seed: u64,
    oracle: bool,
) -> Result<SimulationEstimate> {
    let paths = simulate_paths(&pb.diffusion, &pb.payoff, strat, x0, n_paths, cfg, seed)?;
    let xs: Vec<f64> = paths.iter().map(PathRecord::performance).collect();
    let o = if oracle { Some(analytic_performance(pb, strat, x0)?) } else { None };
    Ok(SimulationEstimate::from_samples(&xs, o))
}

/// MC counterpart of [`intervention_discount_sum`].
pub fn estimate_discount_sum(pb: &Problem, strat: StrategyBG, x0: f64, n_paths: usize, cfg: &McConfig, seed: u64) -> Result<SimulationEstimate> {
    let paths = simulate_paths(&pb.diffusion, &pb.payoff, strat, x0, n_paths, cfg, seed)?;
    let xs: Vec<f64> = paths.iter().map(PathRecord::discount_sum).collect();
    let s = if x0 < strat.beta { Some(intervention_discount_sum(&pb.pair, strat, x0)?) } else { None };
    Ok(SimulationEstimate::from_samples(&xs, s))
}

/// J(ζ) = R_h(x) + ψ(x)/(ψ(β) − ψ(γ))·(R_h(γ) − R_h(β) + ∫_γ^β k − c) for x < β;
/// for x ≥ β the time-0 harvest is added and the rest evaluated at γ.
pub fn analytic_performance(pb: &Problem, strat: StrategyBG, x0: f64) -> Result<f64> {
    let p = &pb.payoff;
    if x0 >= strat.beta {
        let now = p.cum_k(x0) - p.cum_k(strat.gamma) - p.cost;
        return Ok(now + analytic_performance(pb, strat, strat.gamma)?);
    }
    let rh = pb.r_h()?;
    let (b, g) = (strat.beta, strat.gamma);
    let cycle = rh.value(g)? - rh.value(b)? + p.cum_k(b) - p.cum_k(g) - p.cost;
    Ok(rh.value(x0)? + intervention_discount_sum(&pb.pair, strat, x0)? * cycle)
}

/// E Σ e^{−Λ_{τ_ℓ}} = ψ(x)/(ψ(β) − ψ(γ)).
pub fn intervention_discount_sum(pair: &FundamentalPair, strat: StrategyBG, x0: f64) -> Result<f64> {
    if !(x0 > 0.0 && x0 < strat.beta) {
        return Err(Error::Precondition(format!("need 0 < x0 < beta, got {x0}")));
    }
    Ok(pair.psi(x0) / (pair.psi(strat.beta) - pair.psi(strat.gamma)))
}

/// E e^{−Λ_{τ_{ℓ+1}}} = (ψ(x)/ψ(β))(ψ(γ)/ψ(β))^ℓ.
pub fn nth_intervention_discount(pair: &FundamentalPair, strat: StrategyBG, x0: f64, ell: usize) -> Result<f64> {
    if !(x0 > 0.0 && x0 < strat.beta) {
        return Err(Error::Precondition(format!("need 0 < x0 < beta, got {x0}")));
    }
    let pb = pair.psi(strat.beta);
    Ok(pair.psi(x0) / pb * (pair.psi(strat.gamma) / pb).powi(ell as i32))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Functional {
    Performance,
    DiscountSum,
    FirstDiscount,
}

impl Functional {
    fn of(self, r: &PathRecord) -> f64 {
        match self {
            Functional::Performance => r.performance(),
            Functional::DiscountSum => r.discount_sum(),
            Functional::FirstDiscount => r.nth_discount(0),
        }
    }

    fn oracle(self, pb: &Problem, strat: StrategyBG, x0: f64) -> Result<f64> {
        match self {
            Functional::Performance => analytic_performance(pb, strat, x0),
            Functional::DiscountSum => intervention_discount_sum(&pb.pair, strat, x0),
            Functional::FirstDiscount => nth_intervention_discount(&pb.pair, strat, x0, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub functional: Functional,
    pub oracle: f64,
    /// dt, dt/2, dt/4.
    pub dts: [f64; 3],
    pub estimates: [SimulationEstimate; 3],
    /// mean − oracle per level.
    pub biases: [f64; 3],
    /// bias(dt)/bias(dt/4).
    pub ratio: f64,
}

/// Bias at dt, dt/2, dt/4 with common random numbers across the levels.
pub fn bias_ratio(
    pb: &Problem,
    strat: StrategyBG,
    x0: f64,
    n_paths: usize,
    cfg: &McConfig,
    seed: u64,
    functional: Functional,
) -> Result<BiasReport> {
    if n_paths < MIN_PATHS {
        return Err(Error::Precondition(format!("need at least {MIN_PATHS} paths, got {n_paths}")));
    }
    let oracle = functional.oracle(pb, strat, x0)?;
    let horizon = Some(cfg.horizon.unwrap_or_else(|| default_horizon(&pb.diffusion)));
    let dts = [cfg.dt, cfg.dt / 2.0, cfg.dt / 4.0];
    let rows = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut out = [0.0; 3];
            for (l, &dt) in dts.iter().enumerate() {
                let c = McConfig { dt, horizon, ..*cfg };
                let r = simulate_path_coupled(&pb.diffusion, &pb.payoff, strat, x0, &c, seed, i, 4 >> l)?;
                out[l] = functional.of(&r);
            }
            Ok(out)
        })
        .collect::<Result<Vec<[f64; 3]>>>()?;
    let est = |l: usize| SimulationEstimate::from_samples(&rows.iter().map(|r| r[l]).collect::<Vec<_>>(), Some(oracle));
    let estimates = [est(0), est(1), est(2)];
    let biases = [estimates[0].mean - oracle, estimates[1].mean - oracle, estimates[2].mean - oracle];
    Ok(BiasReport { functional, oracle, dts, estimates, biases, ratio: biases[0] / biases[2] })
}
