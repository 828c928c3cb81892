//! A fully prepared control problem: diffusion, pair, Θ, and resolvent tables.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::diffusion::{
    classify_boundaries, fundamental_solutions_with, make_diffusion, BoundaryKind, BoundaryReport, DiffusionSpec,
    FundamentalPair, PairConfig, PairMode,
};
use crate::error::{Error, Result};
use crate::numeric::{probe_limit, Extended};
use crate::payoff::{theta_from_payoffs_with, PayoffSpec, ThetaConfig, ThetaFunction};
use crate::resolvent::{k_infinity, resolvent, ResolventConfig, ResolventTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumericsConfig {
    pub pair_mode: PairMode,
    pub pair: PairConfig,
    pub resolvent: ResolventConfig,
    pub theta: ThetaConfig,
    /// Largest state treated as finite when probing limits at ∞.
    pub x_infinity: f64,
    /// Smallest state used when probing limits at 0.
    pub x_zero: f64,
    /// Relative bracket width for all bisections.
    pub root_rel_tol: f64,
    /// Distance from c⋆ or c° below which classification is refused.
    pub threshold_tol: f64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            pair_mode: PairMode::Auto,
            pair: PairConfig::default(),
            resolvent: ResolventConfig::default(),
            theta: ThetaConfig::default(),
            x_infinity: 1e6,
            x_zero: 1e-8,
            root_rel_tol: 1e-13,
            threshold_tol: 1e-9,
        }
    }
}

/// Limits at 0 entering F(0, β) = R_Θ(β) − R_Θ(0) − R′_Θ(β)/ψ′(β)·(ψ(β) − ψ(0)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroLimits {
    pub psi: f64,
    pub r_theta: Extended,
}

fn probe_zero(f: impl Fn(f64) -> Result<f64>, x_zero: f64, what: &str) -> Result<Extended> {
    let bottom = x_zero.log10().round() as i32;
    let xs: Vec<f64> = (bottom..=-3).rev().map(|k| 10f64.powi(k)).collect();
    let vals = xs.iter().map(|&x| f(x)).collect::<Result<Vec<_>>>()?;
    probe_limit(&vals, 1e-6, 1e-12).map_err(|e| Error::LimitNotStabilized(format!("{what} at 0: {e}")))
}

impl ZeroLimits {
    /// At a natural 0, ψ(0) = 0 and R_Θ(0) = lim Θ/r; at an entrance 0 both are probed.
    pub fn compute(pair: &FundamentalPair, kind: BoundaryKind, theta: &ThetaFunction, r_theta: &ResolventTable, x_zero: f64) -> Result<Self> {
        match kind {
            BoundaryKind::Natural => Ok(ZeroLimits { psi: 0.0, r_theta: theta.ratio_at_zero }),
            BoundaryKind::Entrance => {
                let psi = probe_zero(|x| Ok(pair.psi(x)), x_zero, "psi")?;
                let psi = psi.finite().ok_or_else(|| Error::LimitNotStabilized("psi at an entrance 0".into()))?;
                Ok(ZeroLimits { psi, r_theta: probe_zero(|x| r_theta.value(x), x_zero, "R_theta")? })
            }
        }
    }
}

#[derive(Clone)]
pub struct Problem {
    pub diffusion: DiffusionSpec,
    pub pair: FundamentalPair,
    pub boundaries: BoundaryReport,
    pub payoff: PayoffSpec,
    pub theta: ThetaFunction,
    pub r_theta: Arc<ResolventTable>,
    pub k_infinity: f64,
    pub zero: ZeroLimits,
    pub numerics: NumericsConfig,
    r_h: Arc<OnceLock<std::result::Result<Arc<ResolventTable>, Error>>>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("model", &self.diffusion.tag)
            .field("payoff", &self.payoff.tag)
            .field("cost", &self.payoff.cost)
            .field("xi", &self.theta.xi)
            .field("k_infinity", &self.k_infinity)
            .finish()
    }
}

impl Problem {
    pub fn new(d: DiffusionSpec, p: PayoffSpec) -> Result<Self> {
        Self::with_numerics(d, p, NumericsConfig::default())
    }

    pub fn with_numerics(d: DiffusionSpec, p: PayoffSpec, numerics: NumericsConfig) -> Result<Self> {
        let d = if d.is_validated() { d } else { make_diffusion(d)? };
        let pair = fundamental_solutions_with(&d, numerics.pair_mode, &numerics.pair)?;
        let boundaries = classify_boundaries(&pair)?;
        if boundaries.at_infinity != BoundaryKind::Natural {
            return Err(Error::NaturalBoundaryViolated("infinity is not a natural boundary".into()));
        }
        let theta = theta_from_payoffs_with(&d, &p, &numerics.theta)?;
        let r_theta = resolvent(&pair, theta.theta.clone(), &p.kinks, &numerics.resolvent)?;
        let k_inf = k_infinity(&pair, &p, numerics.x_infinity)?;
        let zero = ZeroLimits::compute(&pair, boundaries.at_zero, &theta, &r_theta, numerics.x_zero)?;
        Ok(Problem {
            diffusion: d,
            pair,
            boundaries,
            payoff: p,
            theta,
            r_theta: Arc::new(r_theta),
            k_infinity: k_inf,
            zero,
            numerics,
            r_h: Arc::new(OnceLock::new()),
        })
    }

    /// Replace Θ (e.g. by Θ + K·r) keeping everything else; the R_h cache is reset.
    pub fn with_theta(&self, theta: ThetaFunction) -> Result<Self> {
        let r_theta = resolvent(&self.pair, theta.theta.clone(), &self.payoff.kinks, &self.numerics.resolvent)?;
        let zero = ZeroLimits::compute(&self.pair, self.boundaries.at_zero, &theta, &r_theta, self.numerics.x_zero)?;
        Ok(Problem { theta, r_theta: Arc::new(r_theta), zero, r_h: Arc::new(OnceLock::new()), ..self.clone() })
    }

    /// Same problem with another fixed cost; tables are shared.
    pub fn with_cost(&self, cost: f64) -> Self {
        Problem { payoff: self.payoff.with_cost(cost), ..self.clone() }
    }

    pub fn cost(&self) -> f64 {
        self.payoff.cost
    }

    /// R_h, built on first use.
    pub fn r_h(&self) -> Result<&ResolventTable> {
        let cell = self.r_h.get_or_init(|| {
            resolvent(&self.pair, self.payoff.h.clone(), &self.payoff.kinks, &self.numerics.resolvent).map(Arc::new)
        });
        match cell {
            Ok(t) => Ok(t.as_ref()),
            Err(e) => Err(e.clone()),
        }
    }

    /// R′_Θ(x)/ψ′(x).
    pub fn d_ratio(&self, x: f64) -> Result<f64> {
        self.r_theta.d_ratio(x)
    }

    /// G_Θ(x).
    pub fn g(&self, x: f64) -> Result<f64> {
        self.r_theta.g(x)
    }
}
