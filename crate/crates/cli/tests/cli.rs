use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn harvest(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_harvest")).current_dir(dir).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const QUARTIC_GBM: &str = r#"
cost = 0.05
x0 = 1.5
[model]
kind = "gbm"
b = 0.25
sigma = 0.7071067811865476
r = 1.0
[payoff]
kind = "piecewise-linear"
slope = SLOPE
"#;

const CAPPED_GBM: &str = r#"
cost = COST
x0 = 0.5
[model]
kind = "gbm"
b = 0.5
sigma = 0.5
r = 0.25
[payoff]
kind = "linear-capped"
alpha = 0.5
"#;

#[test]
fn defaults_round_trip() {
    let tmp = TempDir::new().unwrap();
    let o = harvest(tmp.path(), &["defaults"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("kind = \"power-h\""));
    write(tmp.path(), "d.toml", &text);
    let o = harvest(tmp.path(), &["solve", "--config", "d.toml", "--out", "o"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn solve_default_problem() {
    let tmp = TempDir::new().unwrap();
    let o = harvest(tmp.path(), &["solve", "--out", "o"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(&tmp.path().join("o/solve.json"));
    assert_eq!(r["case"], "I");
    assert!((r["gamma_star"].as_f64().unwrap() - 0.25461437654918430).abs() < 1e-9);
    assert!((r["beta_star"].as_f64().unwrap() - 1.3049470712221408).abs() < 1e-9);
    assert!((r["value_at_x0"].as_f64().unwrap() - 0.68706050973906304).abs() < 1e-9);
    assert!(r["verification"]["max_hjb_defect"].as_f64().unwrap() <= 1e-6);
    assert_eq!(r["tolerances"]["hjb_tolerance"].as_f64(), Some(1e-6));
    let csv = fs::read_to_string(tmp.path().join("o/value.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "x,w,ode_residual,intervention_residual");
    assert_eq!(lines.len(), 501);
    // 17 significant digits
    let x = lines[1].split(',').next().unwrap();
    assert_eq!(x.split('e').next().unwrap().replace(['.', '-'], "").len(), 17, "{x}");
    assert!(tmp.path().join("o/timings.json").exists());
}

#[test]
fn no_harvest_payoff_gives_resolvent() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", &QUARTIC_GBM.replace("SLOPE", "7.0").replace("x0 = 1.5", "x0 = 0.5"));
    let o = harvest(tmp.path(), &["solve", "--config", &cfg, "--out", "o"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&tmp.path().join("o/solve.json"));
    assert_eq!(r["case"], "III");
    assert_eq!(r["structural"]["x_lower"], "pos_inf");
    assert!((r["value_at_x0"].as_f64().unwrap() - 3.7083333333333333).abs() < 1e-9);
}

#[test]
fn cost_on_threshold_is_a_stage_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", &CAPPED_GBM.replace("COST", "5.0"));
    let o = harvest(tmp.path(), &["solve", "--config", &cfg, "--out", "o"]);
    assert_eq!(o.status.code(), Some(3));
    let e = stderr(&o);
    assert!(e.contains("stage free-boundary") && e.contains("c_circ"), "{e}");
}

#[test]
fn config_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let bad = write(tmp.path(), "bad.toml", "bogus = 1\n");
    assert_eq!(harvest(tmp.path(), &["solve", "--config", &bad]).status.code(), Some(2));
    let neg = write(tmp.path(), "neg.toml", "cost = -1.0\n");
    let o = harvest(tmp.path(), &["solve", "--config", &neg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cost must be positive"));
    assert_eq!(harvest(tmp.path(), &["solve", "--config", "missing.toml"]).status.code(), Some(2));
    let few = write(tmp.path(), "few.toml", "[simulate]\nn_paths = 99\n");
    assert_eq!(harvest(tmp.path(), &["simulate", "--config", &few]).status.code(), Some(2));
}

#[test]
fn invalid_model_parameters_name_the_stage() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", "[model]\nkind = \"mean-rev-sqrt\"\nalpha = -1.0\n");
    let o = harvest(tmp.path(), &["solve", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("stage diffusion"), "{}", stderr(&o));
}

#[test]
fn simulate_needs_boundaries() {
    let tmp = TempDir::new().unwrap();
    let o = harvest(tmp.path(), &["simulate", "--out", "o"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run solve first"));
}

#[test]
fn simulate_after_solve_uses_its_boundaries() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", "[simulate]\nn_paths = 500\ndt = 1e-2\n");
    assert!(harvest(tmp.path(), &["solve", "--config", &cfg, "--out", "o"]).status.success());
    let o = harvest(tmp.path(), &["simulate", "--config", &cfg, "--out", "o"]);
    assert!(o.status.code().is_some_and(|c| c <= 1), "{}", stderr(&o));
    let r = json(&tmp.path().join("o/simulate.json"));
    assert!((r["rows"][0]["beta"].as_f64().unwrap() - 1.3049470712221408).abs() < 1e-9);
    assert_eq!(r["n_paths"], 500);
}

#[test]
fn simulate_matches_closed_forms() {
    let tmp = TempDir::new().unwrap();
    let text = QUARTIC_GBM.replace("SLOPE", "5.0") + "[simulate]\nstrategies = [[2.0, 1.0]]\nn_paths = 10000\ndt = 1e-4\n";
    let cfg = write(tmp.path(), "c.toml", &text);
    let o = harvest(tmp.path(), &["simulate", "--config", &cfg, "--out", "o", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = json(&tmp.path().join("o/simulate.json"));
    let row = &r["rows"][0];
    assert_eq!(row["discount_sum"]["analytic_oracle"].as_f64(), Some(0.75));
    assert_eq!(row["first_discount"]["analytic_oracle"].as_f64(), Some(0.5625));
    assert!((row["performance"]["analytic_oracle"].as_f64().unwrap() - 4.0058867026748971).abs() < 1e-9);
    for k in ["performance", "discount_sum", "first_discount"] {
        assert!(row[k]["z_score"].as_f64().unwrap().abs() <= 3.0, "{k}");
    }
    let csv = fs::read_to_string(tmp.path().join("o/simulate.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn epsilon_schedule_estimates_increase() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", &CAPPED_GBM.replace("COST", "1.0"));
    assert!(harvest(tmp.path(), &["solve", "--config", &cfg, "--out", "o"]).status.success());
    let r = json(&tmp.path().join("o/solve.json"));
    assert_eq!(r["case"], "II");
    let sched: Vec<[f64; 2]> = serde_json::from_value(r["epsilon_schedule"].clone()).unwrap();
    assert_eq!(sched.len(), 5);
    let list: Vec<String> = sched.iter().map(|[b, g]| format!("[{b:?}, {g:?}]")).collect();
    let text = CAPPED_GBM.replace("COST", "1.0") + &format!("[simulate]\nstrategies = [{}]\nn_paths = 4000\ndt = 1e-3\n", list.join(", "));
    let cfg = write(tmp.path(), "s.toml", &text);
    let o = harvest(tmp.path(), &["simulate", "--config", &cfg, "--out", "s"]);
    assert!(o.status.code().is_some_and(|c| c <= 1), "{}", stderr(&o));
    let s = json(&tmp.path().join("s/simulate.json"));
    let rows = s["rows"].as_array().unwrap();
    let oracle: Vec<f64> = rows.iter().map(|r| r["performance"]["analytic_oracle"].as_f64().unwrap()).collect();
    assert!(oracle.windows(2).all(|w| w[1] > w[0]), "{oracle:?}");
    assert!(oracle[4] < r["value_at_x0"].as_f64().unwrap());
    // paths are shared across strategies, so the estimates keep the order
    let means: Vec<f64> = rows.iter().map(|r| r["performance"]["mean"].as_f64().unwrap()).collect();
    assert!(means.windows(2).all(|w| w[1] > w[0]), "{means:?}");
}

#[test]
fn sweep_shows_case_transitions() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", &(CAPPED_GBM.replace("COST", "0.1") + "[sweep]\nc_min = 0.01\nc_max = 20.0\nsteps = 30\n"));
    let o = harvest(tmp.path(), &["sweep", "--config", &cfg, "--out", "o"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("o/sweep.csv")).unwrap();
    let cases: Vec<String> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().to_string()).collect();
    assert_eq!(cases.len(), 30);
    let mut order: Vec<String> = cases.clone();
    order.dedup();
    assert_eq!(order, ["I", "II", "III"]);
    let sw = json(&tmp.path().join("o/sweep.json"));
    assert_eq!(sw["monotone"], true);
    assert!((sw["thresholds"]["c_circ"]["finite"].as_f64().unwrap() - 5.0).abs() < 1e-3);
}

#[test]
fn power_capped_sweep_ends_in_case_four() {
    let tmp = TempDir::new().unwrap();
    let text = "[model]\nkind = \"gbm\"\nb = 0.5\nsigma = 0.5\nr = 0.5\n[payoff]\nkind = \"power-capped\"\na = 0.5\nalpha = 1.5\n[sweep]\nc_min = 0.01\nc_max = 10.0\nsteps = 25\n";
    let cfg = write(tmp.path(), "c.toml", text);
    assert!(harvest(tmp.path(), &["sweep", "--config", &cfg, "--out", "o"]).status.success());
    let csv = fs::read_to_string(tmp.path().join("o/sweep.csv")).unwrap();
    let mut order: Vec<String> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().to_string()).collect();
    order.dedup();
    assert_eq!(order, ["I", "II", "IV"]);
}

#[test]
fn two_step_sweep() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", "[sweep]\nc_min = 0.1\nc_max = 1.0\nsteps = 2\n");
    assert!(harvest(tmp.path(), &["sweep", "--config", &cfg, "--out", "o"]).status.success());
    assert_eq!(fs::read_to_string(tmp.path().join("o/sweep.csv")).unwrap().lines().count(), 3);
}

#[test]
fn verify_writes_report() {
    let tmp = TempDir::new().unwrap();
    let o = harvest(tmp.path(), &["verify", "--out", "o", "--format", "json"]);
    assert!(o.status.success());
    let r = json(&tmp.path().join("o/verify.json"));
    assert_eq!(r["verification"]["passed"], true);
    assert_eq!(r["verification"]["points"], 500);
    assert!(!tmp.path().join("o/verify.csv").exists());
    assert!(tmp.path().join("o/timings.json").exists());
}

#[test]
fn entrance_advisory_reported() {
    let tmp = TempDir::new().unwrap();
    let text = "cost = 10.0\nx0 = 0.5\n[model]\nkind = \"mean-rev-sqrt\"\nalpha = 1.0\n[payoff]\nkind = \"exp-capped\"\ngamma = 0.7\nkappa = 0.2\n";
    let cfg = write(tmp.path(), "c.toml", text);
    let o = harvest(tmp.path(), &["solve", "--config", &cfg, "--out", "o"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("may dominate"));
    let r = json(&tmp.path().join("o/solve.json"));
    assert_eq!(r["at_zero"], "entrance");
    assert_eq!(r["advisory"]["switch_off_may_dominate"], true);
}

#[test]
fn outputs_are_reproducible() {
    let tmp = TempDir::new().unwrap();
    let text = QUARTIC_GBM.replace("SLOPE", "5.0") + "[simulate]\nstrategies = [[2.0, 1.0]]\nn_paths = 300\ndt = 1e-2\n";
    let cfg = write(tmp.path(), "c.toml", &text);
    for out in ["a", "b"] {
        harvest(tmp.path(), &["solve", "--config", &cfg, "--out", out]);
        harvest(tmp.path(), &["simulate", "--config", &cfg, "--out", out, "--threads", if out == "a" { "1" } else { "3" }]);
    }
    for f in ["solve.json", "value.csv", "simulate.json", "simulate.csv"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn traces_behind_flag() {
    let tmp = TempDir::new().unwrap();
    let text = QUARTIC_GBM.replace("SLOPE", "5.0") + "[simulate]\nstrategies = [[2.0, 1.0]]\nn_paths = 100\ndt = 1e-2\nhorizon = 1.0\ntrace_paths = 2\n";
    let cfg = write(tmp.path(), "c.toml", &text);
    harvest(tmp.path(), &["simulate", "--config", &cfg, "--out", "o", "--format", "csv"]);
    let tr = fs::read_to_string(tmp.path().join("o/traces.csv")).unwrap();
    assert_eq!(tr.lines().next(), Some("path,t,x"));
    assert_eq!(tr.lines().count(), 1 + 2 * 101);
    assert!(!tmp.path().join("o/simulate.json").exists());
}

#[test]
fn catalogue_lists_entries() {
    let tmp = TempDir::new().unwrap();
    let o = harvest(tmp.path(), &["catalogue"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["gbm", "logistic", "log-ou", "mean-rev-sqrt", "power-h", "linear-capped", "power-capped", "exp-capped", "piecewise-linear"] {
        assert!(text.contains(name), "{name}");
    }
    let o = harvest(tmp.path(), &["catalogue", "--format", "json"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["models"].as_array().unwrap().len(), 4);
}
