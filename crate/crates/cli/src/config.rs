use std::path::Path;

use harvest_core::diffusion::ModelTag;
use harvest_core::payoff::PayoffTag;
use harvest_core::problem::NumericsConfig;
use harvest_core::value::VerifyConfig;
use serde::{Deserialize, Serialize};

use crate::output::Format;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub model: ModelTag,
    pub payoff: PayoffTag,
    /// Fixed cost c per intervention.
    pub cost: f64,
    /// State at which w and the simulated J are reported.
    pub x0: f64,
    pub numerics: NumericsConfig,
    pub verify: VerifyConfig,
    pub simulate: SimulateConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            model: ModelTag::Gbm { b: 0.0, sigma: 1.0, r: 1.0 },
            payoff: PayoffTag::PowerH { alpha: 0.5, k: 1.0 },
            cost: 0.1,
            x0: 0.5,
            numerics: NumericsConfig::default(),
            verify: VerifyConfig::default(),
            simulate: SimulateConfig::default(),
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Explicit (β, γ) pairs. Empty means: take γ⋆, β⋆ from a prior solve.
    pub strategies: Vec<[f64; 2]>,
    pub n_paths: usize,
    pub dt: f64,
    /// Truncation horizon; 0 means ln(1e6)/r0.
    pub horizon: f64,
    pub seed: u64,
    /// |z| above this counts as a failed check.
    pub z_tolerance: f64,
    /// Number of paths written to traces.csv (0 = none).
    pub trace_paths: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { strategies: vec![], n_paths: 10_000, dt: 1e-4, horizon: 0.0, seed: 1, z_tolerance: 3.0, trace_paths: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub c_min: f64,
    pub c_max: f64,
    pub steps: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { c_min: 1e-3, c_max: 10.0, steps: 41 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into(), format: Format::Both }
    }
}

impl ProblemConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = |v: f64, name: &str| if v > 0.0 && v.is_finite() { Ok(()) } else { Err(format!("{name} must be positive, got {v}")) };
        positive(self.cost, "cost")?;
        positive(self.x0, "x0")?;
        positive(self.simulate.dt, "simulate.dt")?;
        positive(self.simulate.z_tolerance, "simulate.z_tolerance")?;
        positive(self.sweep.c_min, "sweep.c_min")?;
        positive(self.verify.tolerance, "verify.tolerance")?;
        positive(self.verify.smooth_fit_tolerance, "verify.smooth_fit_tolerance")?;
        if self.simulate.horizon < 0.0 {
            return Err("simulate.horizon must be non-negative".into());
        }
        if self.simulate.n_paths < 100 {
            return Err(format!("simulate.n_paths must be at least 100, got {}", self.simulate.n_paths));
        }
        if !(self.sweep.c_max > self.sweep.c_min) {
            return Err("sweep.c_max must exceed sweep.c_min".into());
        }
        if self.sweep.steps < 2 {
            return Err("sweep.steps must be at least 2".into());
        }
        if self.verify.points < 2 {
            return Err("verify.points must be at least 2".into());
        }
        for &[b, g] in &self.simulate.strategies {
            if !(0.0 < g && g < b && b.is_finite()) {
                return Err(format!("strategy (beta, gamma) = ({b}, {g}) needs 0 < gamma < beta < inf"));
            }
        }
        if matches!(self.model, ModelTag::Custom) || matches!(self.payoff, PayoffTag::Custom) {
            return Err("custom models and payoffs cannot be configured from a file".into());
        }
        Ok(())
    }
}
