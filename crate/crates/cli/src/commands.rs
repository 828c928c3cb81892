use std::fmt;
use std::path::Path;

use harvest_core::diffusion::{BoundaryKind, DiffusionSpec, ModelTag};
use harvest_core::free_boundary::{epsilon_sequence, solve_boundaries, sweep_c, Case, FreeBoundarySolution, StructuralPoints, Thresholds};
use harvest_core::montecarlo::{estimate_all, estimate_performance, simulate_path, McConfig, SimulationEstimate, StrategyBG};
use harvest_core::numeric::log_grid;
use harvest_core::payoff::{PayoffSpec, PayoffTag};
use harvest_core::problem::Problem;
use harvest_core::value::{build_value_function, verify, EntranceAdvisory, SmoothFitReport, ValueFunction, VerificationReport};
use harvest_core::Error;
use serde::{Deserialize, Serialize};

use crate::config::ProblemConfig;
use crate::output::{num, opt, Sink, Timings};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Stage { stage: &'static str, message: String },
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { .. } => 3,
            CliError::Output(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Stage { stage, message } => write!(f, "stage {stage} failed: {message}"),
            CliError::Output(m) => write!(f, "output error: {m}"),
        }
    }
}

fn stage(stage: &'static str) -> impl Fn(Error) -> CliError {
    move |e| CliError::Stage { stage, message: e.to_string() }
}

fn out_err(m: String) -> CliError {
    CliError::Output(m)
}

/// Result of a command: whether every check held, and a text summary.
pub struct Outcome {
    pub passed: bool,
    pub summary: String,
}

pub fn build_problem(cfg: &ProblemConfig, t: &mut Timings) -> Result<Problem, CliError> {
    let d = t.time("diffusion", || DiffusionSpec::from_tag(&cfg.model)).map_err(stage("diffusion"))?;
    let p = PayoffSpec::from_tag(&cfg.payoff, &cfg.model, cfg.cost).map_err(stage("payoff"))?;
    t.time("resolvent", || Problem::with_numerics(d, p, cfg.numerics)).map_err(|e| {
        let name = match e {
            Error::NonPositiveVolatility(_)
            | Error::DiscountFloorViolated(_)
            | Error::NonFiniteCoefficient(_)
            | Error::SolutionBranchAmbiguous(_)
            | Error::NaturalBoundaryViolated(_)
            | Error::InconclusiveClassification(_) => "diffusion",
            Error::UnimodalityViolated(_) | Error::IntegrabilityCheckFailed(_) => "payoff",
            _ => "resolvent",
        };
        stage(name)(e)
    })
}

#[derive(Debug, Serialize)]
struct Tolerances {
    root_rel_tol: f64,
    threshold_tol: f64,
    resolvent_rel_tol: f64,
    hjb_tolerance: f64,
    smooth_fit_tolerance: f64,
}

/// Verification maxima without the per-point rows.
#[derive(Debug, Serialize)]
struct VerificationSummary {
    grid_min: f64,
    grid_max: f64,
    points: usize,
    tolerance: f64,
    max_ode_residual: f64,
    max_intervention_residual: f64,
    max_hjb_defect: f64,
    smooth_fit: SmoothFitReport,
    min_w: f64,
    lower_bound: Option<f64>,
    bounded_below: bool,
    transversality_ratio: f64,
    transversality_limit: f64,
    transversality_ok: bool,
    passed: bool,
}

impl From<&VerificationReport> for VerificationSummary {
    fn from(r: &VerificationReport) -> Self {
        Self {
            grid_min: r.grid_min,
            grid_max: r.grid_max,
            points: r.points,
            tolerance: r.tolerance,
            max_ode_residual: r.max_ode_residual,
            max_intervention_residual: r.max_intervention_residual,
            max_hjb_defect: r.max_hjb_defect,
            smooth_fit: r.smooth_fit,
            min_w: r.min_w,
            lower_bound: r.lower_bound,
            bounded_below: r.bounded_below,
            transversality_ratio: r.transversality_ratio,
            transversality_limit: r.transversality_limit,
            transversality_ok: r.transversality_ok,
            passed: r.passed,
        }
    }
}

#[derive(Debug, Serialize)]
struct RunReport {
    model: ModelTag,
    payoff: PayoffTag,
    cost: f64,
    x0: f64,
    at_zero: BoundaryKind,
    at_infinity: BoundaryKind,
    structural: StructuralPoints,
    thresholds: Thresholds,
    case: Case,
    gamma_star: Option<f64>,
    beta_star: Option<f64>,
    beta_circ: Option<f64>,
    k_infinity: f64,
    coefficient_a: f64,
    value_at_x0: f64,
    boundary_residuals: [Option<f64>; 2],
    epsilon_schedule: Vec<(f64, f64)>,
    verification: VerificationSummary,
    advisory: Option<EntranceAdvisory>,
    tolerances: Tolerances,
}

struct Solved {
    sol: FreeBoundarySolution,
    w: ValueFunction,
    report: VerificationReport,
}

fn solve_and_verify(pb: &Problem, cfg: &ProblemConfig, t: &mut Timings) -> Result<Solved, CliError> {
    let sol = t.time("free-boundary", || solve_boundaries(pb)).map_err(stage("free-boundary"))?;
    let w = t.time("value-function", || build_value_function(pb, &sol)).map_err(stage("value-function"))?;
    let report = t.time("verification", || verify(&w, &cfg.verify)).map_err(stage("verification"))?;
    Ok(Solved { sol, w, report })
}

fn run_report(pb: &Problem, cfg: &ProblemConfig, s: &Solved) -> Result<RunReport, CliError> {
    let value = s.w.eval(cfg.x0).map_err(stage("value-function"))?;
    let schedule = match s.sol.case {
        Case::II | Case::IV => epsilon_sequence(&s.sol, 5, Some(cfg.x0)).map_err(stage("free-boundary"))?,
        _ => vec![],
    };
    Ok(RunReport {
        model: cfg.model.clone(),
        payoff: cfg.payoff.clone(),
        cost: cfg.cost,
        x0: cfg.x0,
        at_zero: pb.boundaries.at_zero,
        at_infinity: pb.boundaries.at_infinity,
        structural: s.sol.structural,
        thresholds: s.sol.thresholds,
        case: s.sol.case,
        gamma_star: s.sol.gamma_star,
        beta_star: s.sol.beta_star,
        beta_circ: s.sol.beta_circ,
        k_infinity: s.sol.k_infinity,
        coefficient_a: s.w.coefficient_a,
        value_at_x0: value,
        boundary_residuals: [s.sol.residual_1, s.sol.residual_2],
        epsilon_schedule: schedule,
        verification: (&s.report).into(),
        advisory: s.report.advisory,
        tolerances: Tolerances {
            root_rel_tol: cfg.numerics.root_rel_tol,
            threshold_tol: cfg.numerics.threshold_tol,
            resolvent_rel_tol: cfg.numerics.resolvent.rel_tol,
            hjb_tolerance: cfg.verify.tolerance,
            smooth_fit_tolerance: cfg.verify.smooth_fit_tolerance,
        },
    })
}

fn summary_table(r: &RunReport) -> String {
    let mut lines = vec![
        format!("model           {} / {}", r.model.name(), r.payoff.name()),
        format!("cost            {}", r.cost),
        format!("boundary at 0   {:?}", r.at_zero),
        format!("xi              {}", r.structural.xi),
        format!("x_lower         {}", r.structural.x_lower),
        format!("x_upper         {}", r.structural.x_upper),
        format!("c_star          {}", r.thresholds.c_star),
        format!("c_circ          {}", r.thresholds.c_circ),
        format!("case            {}", r.case),
    ];
    for (name, v) in [("gamma_star", r.gamma_star), ("beta_star", r.beta_star), ("beta_circ", r.beta_circ)] {
        if let Some(v) = v {
            lines.push(format!("{name:<16}{v}"));
        }
    }
    lines.push(format!("w({})          {}", r.x0, r.value_at_x0));
    lines.push(format!("max HJB defect  {:.3e} (tol {:.0e})", r.verification.max_hjb_defect, r.verification.tolerance));
    lines.push(format!("verification    {}", if r.verification.passed { "passed" } else { "FAILED" }));
    if let Some(a) = r.advisory {
        if a.switch_off_may_dominate {
            lines.push("advisory        switching the system off may dominate (entrance boundary at 0)".into());
        }
    }
    lines.join("\n")
}

pub fn solve(cfg: &ProblemConfig, sink: &mut Sink, t: &mut Timings) -> Result<Outcome, CliError> {
    let pb = build_problem(cfg, t)?;
    let s = solve_and_verify(&pb, cfg, t)?;
    let report = run_report(&pb, cfg, &s)?;
    sink.json("solve.json", &report).map_err(out_err)?;
    let rows: Vec<Vec<String>> = s.report.rows.iter().map(|r| vec![num(r.x), num(r.w), num(r.ode), num(r.intervention)]).collect();
    sink.csv("value.csv", &["x", "w", "ode_residual", "intervention_residual"], &rows).map_err(out_err)?;
    Ok(Outcome { passed: s.report.passed, summary: summary_table(&report) })
}

pub fn verify_cmd(cfg: &ProblemConfig, sink: &mut Sink, t: &mut Timings) -> Result<Outcome, CliError> {
    let pb = build_problem(cfg, t)?;
    let s = solve_and_verify(&pb, cfg, t)?;
    #[derive(Serialize)]
    struct Out<'a> {
        case: Case,
        verification: VerificationSummary,
        advisory: Option<EntranceAdvisory>,
        cfg: &'a harvest_core::value::VerifyConfig,
    }
    let out = Out { case: s.sol.case, verification: (&s.report).into(), advisory: s.report.advisory, cfg: &cfg.verify };
    sink.json("verify.json", &out).map_err(out_err)?;
    let rows: Vec<Vec<String>> =
        s.report.rows.iter().map(|r| vec![num(r.x), num(r.w), num(r.ode), num(r.intervention), num(r.argmax_u)]).collect();
    sink.csv("verify.csv", &["x", "w", "ode_residual", "intervention_residual", "argmax_u"], &rows).map_err(out_err)?;
    let r = &s.report;
    let sf = |v: Option<f64>| v.map(|g| format!("{g:.3e}")).unwrap_or_else(|| "n/a".into());
    let summary = [
        format!("case                 {}", s.sol.case),
        format!("grid                 [{}, {}] x {}", r.grid_min, r.grid_max, r.points),
        format!("max ODE residual     {:.3e}", r.max_ode_residual),
        format!("max interv. residual {:.3e}", r.max_intervention_residual),
        format!("smooth fit gaps      beta {} gamma {} value {}", sf(r.smooth_fit.beta_gap), sf(r.smooth_fit.gamma_gap), sf(r.smooth_fit.value_gap)),
        format!("transversality       {:.3e} (limit {:.3e})", r.transversality_ratio, r.transversality_limit),
        format!("verification         {}", if r.passed { "passed" } else { "FAILED" }),
    ]
    .join("\n");
    Ok(Outcome { passed: r.passed, summary })
}

#[derive(Debug, Serialize)]
struct SimRow {
    beta: f64,
    gamma: f64,
    performance: SimulationEstimate,
    discount_sum: Option<SimulationEstimate>,
    first_discount: Option<SimulationEstimate>,
    halved_steps: u64,
}

#[derive(Debug, Serialize)]
struct SimReport {
    x0: f64,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    z_tolerance: f64,
    rows: Vec<SimRow>,
}

#[derive(Deserialize)]
struct PriorSolve {
    case: Case,
    gamma_star: Option<f64>,
    beta_star: Option<f64>,
}

fn strategies(cfg: &ProblemConfig, dir: &Path) -> Result<Vec<[f64; 2]>, CliError> {
    if !cfg.simulate.strategies.is_empty() {
        return Ok(cfg.simulate.strategies.clone());
    }
    let path = dir.join("solve.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|_| CliError::Config(format!("no strategies given and no prior solve at {}; set simulate.strategies or run solve first", path.display())))?;
    let prior: PriorSolve = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    match (prior.beta_star, prior.gamma_star) {
        (Some(b), Some(g)) => Ok(vec![[b, g]]),
        _ => Err(CliError::Config(format!(
            "prior solve is Case {} with no optimal (beta, gamma); set simulate.strategies, e.g. from the epsilon schedule",
            prior.case
        ))),
    }
}

pub fn simulate(cfg: &ProblemConfig, sink: &mut Sink, t: &mut Timings) -> Result<Outcome, CliError> {
    let strats = strategies(cfg, &sink.dir)?;
    let pb = build_problem(cfg, t)?;
    let sc = &cfg.simulate;
    let horizon = if sc.horizon > 0.0 { Some(sc.horizon) } else { None };
    let mc = McConfig { dt: sc.dt, horizon, ..McConfig::default() };
    let mut rows = vec![];
    for &[beta, gamma] in &strats {
        let st = StrategyBG::new(beta, gamma).map_err(|e| CliError::Config(e.to_string()))?;
        let row = t
            .time("montecarlo", || -> harvest_core::Result<SimRow> {
                if cfg.x0 < beta {
                    let m = estimate_all(&pb, st, cfg.x0, sc.n_paths, &mc, sc.seed)?;
                    Ok(SimRow {
                        beta,
                        gamma,
                        performance: m.performance,
                        discount_sum: Some(m.discount_sum),
                        first_discount: m.nth_discount.first().copied(),
                        halved_steps: m.halved_steps,
                    })
                } else {
                    let p = estimate_performance(&pb, st, cfg.x0, sc.n_paths, &mc, sc.seed, true)?;
                    Ok(SimRow { beta, gamma, performance: p, discount_sum: None, first_discount: None, halved_steps: 0 })
                }
            })
            .map_err(stage("montecarlo"))?;
        rows.push(row);
    }
    if sc.trace_paths > 0 {
        let [beta, gamma] = strats[0];
        let st = StrategyBG::new(beta, gamma).map_err(|e| CliError::Config(e.to_string()))?;
        let tc = McConfig { record_trace: true, ..mc };
        let mut lines = vec![];
        for i in 0..sc.trace_paths as u64 {
            let r = simulate_path(&pb.diffusion, &pb.payoff, st, cfg.x0, &tc, sc.seed, i).map_err(stage("montecarlo"))?;
            lines.extend(r.times.iter().zip(&r.states).map(|(t, x)| vec![i.to_string(), num(*t), num(*x)]));
        }
        sink.csv("traces.csv", &["path", "t", "x"], &lines).map_err(out_err)?;
    }

    let report = SimReport {
        x0: cfg.x0,
        dt: sc.dt,
        horizon: horizon.unwrap_or_else(|| harvest_core::montecarlo::default_horizon(&pb.diffusion)),
        n_paths: sc.n_paths,
        seed: sc.seed,
        z_tolerance: sc.z_tolerance,
        rows,
    };
    sink.json("simulate.json", &report).map_err(out_err)?;
    let mut csv_rows = vec![];
    let mut text = vec![format!("{:>10} {:>10} {:<16} {:>12} {:>10} {:>12} {:>7}", "beta", "gamma", "functional", "mean", "stderr", "oracle", "z")];
    let mut passed = true;
    for r in &report.rows {
        for (name, e) in [("performance", Some(&r.performance)), ("discount_sum", r.discount_sum.as_ref()), ("first_discount", r.first_discount.as_ref())] {
            let Some(e) = e else { continue };
            passed &= e.z_score.is_none_or(|z| z.abs() <= sc.z_tolerance);
            csv_rows.push(vec![num(r.beta), num(r.gamma), name.into(), num(e.mean), num(e.std_error), opt(e.analytic_oracle), opt(e.z_score)]);
            text.push(format!(
                "{:>10.6} {:>10.6} {:<16} {:>12.6} {:>10.2e} {:>12.6} {:>+7.2}",
                r.beta,
                r.gamma,
                name,
                e.mean,
                e.std_error,
                e.analytic_oracle.unwrap_or(f64::NAN),
                e.z_score.unwrap_or(f64::NAN)
            ));
        }
    }
    sink.csv("simulate.csv", &["beta", "gamma", "functional", "mean", "std_error", "oracle", "z_score"], &csv_rows).map_err(out_err)?;
    Ok(Outcome { passed, summary: text.join("\n") })
}

pub fn sweep(cfg: &ProblemConfig, sink: &mut Sink, t: &mut Timings) -> Result<Outcome, CliError> {
    let pb = build_problem(cfg, t)?;
    let grid = log_grid(cfg.sweep.c_min, cfg.sweep.c_max, cfg.sweep.steps);
    let sw = t.time("sweep", || sweep_c(&pb, &grid)).map_err(stage("free-boundary"))?;
    sink.json("sweep.json", &sw).map_err(out_err)?;
    let mut rows = vec![];
    let mut text = vec![format!("{:>12} {:>5} {:>12} {:>12} {:>12}  error", "c", "case", "gamma_star", "beta_star", "beta_circ")];
    for r in &sw.rows {
        let (case, g, b, bc, err) = match &r.solution {
            Ok(s) => (s.case.to_string(), s.gamma_star, s.beta_star, s.beta_circ, String::new()),
            Err(e) => (String::new(), None, None, None, e.clone()),
        };
        let show = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into());
        text.push(format!("{:>12.6e} {:>5} {:>12} {:>12} {:>12}  {err}", r.c, case, show(g), show(b), show(bc)));
        rows.push(vec![num(r.c), case, opt(g), opt(b), opt(bc), err]);
    }
    sink.csv("sweep.csv", &["c", "case", "gamma_star", "beta_star", "beta_circ", "error"], &rows).map_err(out_err)?;
    text.push(format!("c_star {}  c_circ {}  monotone {}", sw.thresholds.c_star, sw.thresholds.c_circ, sw.monotone));
    let passed = sw.rows.iter().all(|r| r.solution.is_ok());
    Ok(Outcome { passed, summary: text.join("\n") })
}

#[derive(Debug, Serialize)]
pub struct CatalogueEntry {
    pub name: &'static str,
    pub parameters: &'static [&'static str],
    pub note: &'static str,
}

pub const MODELS: &[CatalogueEntry] = &[
    CatalogueEntry { name: "gbm", parameters: &["b", "sigma", "r"], note: "dX = bX dt + sigma X dW, constant discount r; closed-form x^m, x^n" },
    CatalogueEntry { name: "logistic", parameters: &["kappa", "gamma", "sigma", "ell", "r"], note: "dX = kappa X(gamma - X) dt + sigma X^ell dW, ell in [1, 1.5]" },
    CatalogueEntry { name: "log-ou", parameters: &["kappa", "gamma", "sigma", "r"], note: "X = exp(Y) with dY = kappa(gamma - Y) dt + sigma dW" },
    CatalogueEntry { name: "mean-rev-sqrt", parameters: &["alpha"], note: "dX = alpha(2 - X) dt + sqrt(2 alpha X) dW, r = alpha; entrance boundary at 0" },
];

pub const PAYOFFS: &[CatalogueEntry] = &[
    CatalogueEntry { name: "power-h", parameters: &["alpha", "k"], note: "h = x^alpha, k constant" },
    CatalogueEntry { name: "linear-capped", parameters: &["alpha"], note: "gbm only; h = -alpha x capped beyond 1; k = 3 - 2x, then x^-2" },
    CatalogueEntry { name: "power-capped", parameters: &["a", "alpha"], note: "gbm only; h = a x^alpha capped beyond 1; k = 4 - 2x, then x^-2 + 1" },
    CatalogueEntry { name: "exp-capped", parameters: &["gamma", "kappa"], note: "mean-rev-sqrt only; h = e^x - 1, then e + e^gamma - 1 - e^(gamma x); k = kappa" },
    CatalogueEntry { name: "piecewise-linear", parameters: &["slope"], note: "h = slope x, then slope - 1 + x^-4; k = 6 - 5x, then x^-5" },
];

pub fn catalogue_text() -> String {
    let mut out = vec!["models:".to_string()];
    for e in MODELS {
        out.push(format!("  {:<16} [{}]  {}", e.name, e.parameters.join(", "), e.note));
    }
    out.push("payoffs:".into());
    for e in PAYOFFS {
        out.push(format!("  {:<16} [{}]  {}", e.name, e.parameters.join(", "), e.note));
    }
    out.push("select with [model] kind = \"...\" and [payoff] kind = \"...\" in the config file".into());
    out.join("\n")
}
