use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pqmle::config::ExperimentConfig;
use pqmle::estimator::{estimate, Problem};
use pqmle::pointprocess::{Dataset, IntensityModel};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

fn pqmle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pqmle")).args(args).output().expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run_ok(args: &[&str]) -> String {
    let out = pqmle(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Linear model on a single constant state: a homogeneous Poisson process.
fn poisson(rate: f64, horizon: f64, reps: usize) -> String {
    format!(
        r#"
name = "poisson"
[model]
family = "linear"
alpha_star = [{rate}]
alpha_max = 100.0
[[covariate.channels]]
states = [[1.0]]
generator = [[0.0]]
[penalty]
r = 0.9
entries = [{{ index = 0, kappa = 0.1, q = 0.5 }}]
[run]
ladder = [{horizon}]
reps = {reps}
seed_base = 7
"#
    )
}

const TWO_CHANNEL: &str = r#"
name = "two-channel"
[model]
family = "superposition"
g = 20.0
alpha = [30.0, 0.0]
beta = [1.5, 0.0]
bounds = { g_max = 1000.0, alpha_max = 1000.0, beta_min = -3.0, beta_max = 3.0 }
[[covariate.channels]]
states = [[-1.0], [0.0], [1.0]]
generator = [[-1.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -1.0]]
[[covariate.channels]]
states = [[-1.0], [1.0]]
generator = [[-1.0, 1.0], [1.0, -1.0]]
[penalty]
r = 0.9
entries = [
  { index = 0, kappa = 0.01, q = 0.5 },
  { index = 1, kappa = 0.1, q = 0.5 },
  { index = 2, kappa = 0.1, q = 0.5 },
]
[run]
ladder = [40.0]
seed_base = 11
"#;

#[test]
fn simulated_poisson_rate() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "p.toml", &poisson(3.0, 2000.0, 1));
    let out = dir.path().join("sim");
    run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let text = fs::read_to_string(out.join("events.csv")).unwrap();
    let n = text.lines().filter(|l| !l.starts_with('#') && *l != "time").count() as f64;
    // count ~ Poisson(6000): 5 standard deviations
    assert!((n / 2000.0 - 3.0).abs() < 5.0 * 6000f64.sqrt() / 2000.0, "rate {}", n / 2000.0);
}

#[test]
fn simulate_is_reproducible_and_hashed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", TWO_CHANNEL);
    let hash = ExperimentConfig::load(&cfg).unwrap().hash();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    }
    for f in ["covariate.csv", "events.csv"] {
        let x = fs::read(a.join(f)).unwrap();
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f}");
        assert!(String::from_utf8(x).unwrap().starts_with(&format!("# config_hash={hash}\n")));
    }
    let c = dir.path().join("c");
    run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap(), "--seed", "12"]);
    assert_ne!(fs::read(a.join("events.csv")).unwrap(), fs::read(c.join("events.csv")).unwrap());
}

#[test]
fn zero_horizon_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "p.toml", &poisson(3.0, 0.0, 1));
    let out = pqmle(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizon"));
}

#[test]
fn unknown_config_is_a_config_error() {
    let out = pqmle(&["simulate", "--config", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "bad.toml", "name = \"x\"\n[model]\nfamily = \"cubic\"\n");
    assert_eq!(pqmle(&["simulate", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn estimate_round_trip_matches_in_process_fit() {
    let dir = TempDir::new().unwrap();
    let path = write_config(&dir, "c.toml", TWO_CHANNEL);
    let out = dir.path().join("fit");
    let (c, o) = (path.to_str().unwrap(), out.to_str().unwrap());
    run_ok(&["simulate", "--config", c, "--out", o]);
    run_ok(&["estimate", "--config", c, "--out", o]);
    let doc = json(&out.join("estimate.json"));

    let cfg = ExperimentConfig::load(&path).unwrap();
    let spec = cfg.covariate.build().unwrap();
    let family = cfg.family().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed_base);
    let cov = spec.simulate_with_rng(cfg.horizon(), &mut rng).unwrap();
    let events = IntensityModel::new(family.clone(), cfg.theta_sim().unwrap())
        .unwrap()
        .simulate_events_with_rng(&spec, &cov, &mut rng);
    let data = Dataset::new(&spec, &cov, &events).unwrap();
    let fit = estimate(&Problem::new(&family, &data, &cfg.penalty).unwrap(), &cfg.solver).unwrap();

    let theta: Vec<f64> = serde_json::from_value(doc["result"]["theta"].clone()).unwrap();
    assert_eq!(theta, fit.theta);
    assert_eq!(doc["events"], events.count() as u64);
    assert_eq!(doc["config_hash"], cfg.hash());
    assert!(fs::read_to_string(out.join("patterns.csv")).unwrap().starts_with("# config_hash="));
}

#[test]
fn estimate_reports_missing_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", TWO_CHANNEL);
    let missing = dir.path().join("nope.csv");
    let out = pqmle(&[
        "estimate",
        "--config",
        cfg.to_str().unwrap(),
        "--covariate",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(missing.to_str().unwrap()));
}

#[test]
fn kappa_zero_gives_unpenalized_fit() {
    let dir = TempDir::new().unwrap();
    let path = write_config(&dir, "c.toml", TWO_CHANNEL);
    let out = dir.path().join("fit");
    let (c, o) = (path.to_str().unwrap(), out.to_str().unwrap());
    run_ok(&["simulate", "--config", c, "--out", o]);
    run_ok(&["estimate", "--config", c, "--out", o, "--kappa-zero"]);
    let doc = json(&out.join("estimate.json"));
    assert_eq!(doc["kappa_zero"], true);
    // no penalty: every pattern's objective is the log-likelihood alone, and
    // the full pattern cannot lose to a sparser one
    let active: Vec<usize> = serde_json::from_value(doc["result"]["active_set"].clone()).unwrap();
    let theta: Vec<f64> = serde_json::from_value(doc["result"]["theta"].clone()).unwrap();
    let patterns = doc["result"]["patterns"].as_array().unwrap();
    // infeasible patterns carry -inf, written as null
    let value = |p: &Value| p["value"].as_f64().unwrap_or(f64::NEG_INFINITY);
    let best = patterns.iter().map(value).fold(f64::NEG_INFINITY, f64::max);
    let full = patterns
        .iter()
        .find(|p| p["free"].as_array().unwrap().iter().all(|f| f == true))
        .unwrap();
    assert!(value(full) >= best - 1e-9);
    // g and alpha_2 exp(beta_2 x) trade off without a penalty, so only the
    // likelihood level is pinned down
    assert!(!active.is_empty() && theta.iter().all(|t| t.is_finite()));
    let header = fs::read_to_string(out.join("patterns.csv")).unwrap();
    assert!(header.contains("kappa_zero=true"));
}

#[test]
fn montecarlo_smoke_report() {
    let dir = TempDir::new().unwrap();
    let cfg = repo_config("smoke.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let c = cfg.to_str().unwrap();
    run_ok(&["montecarlo", "--config", c, "--out", a.to_str().unwrap(), "--jobs", "2"]);
    run_ok(&["montecarlo", "--config", c, "--out", b.to_str().unwrap(), "--jobs", "1"]);
    for f in ["report.json", "statistics.csv", "records.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    let loaded = ExperimentConfig::load(&cfg).unwrap();
    let doc = json(&a.join("report.json"));
    assert_eq!(doc["schema"], "v1");
    assert_eq!(doc["config_hash"], loaded.hash());
    assert_eq!(doc["reps"], 5);
    let summaries = doc["summaries"].as_array().unwrap();
    assert_eq!(summaries.len(), loaded.run.ladder.len());
    for (s, t) in summaries.iter().zip(&loaded.run.ladder) {
        assert_eq!(s["horizon"].as_f64().unwrap(), *t);
        assert_eq!(s["reps"], 5);
    }

    // one row per (T, statistic)
    let stats = fs::read_to_string(a.join("statistics.csv")).unwrap();
    let rows: Vec<(String, String)> = stats
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 5, "{l}");
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    let mut unique = rows.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), rows.len());
    assert_eq!(rows.len() % loaded.run.ladder.len(), 0);

    let records = fs::read_to_string(a.join("records.csv")).unwrap();
    assert_eq!(records.lines().filter(|l| !l.starts_with('#')).count(), 1 + 5 * loaded.run.ladder.len());

    let text = run_ok(&["report", "--config", c, "--out", a.to_str().unwrap()]);
    assert!(text.contains("selection"));
    assert!(a.join("summary.csv").exists());
}

#[test]
fn montecarlo_overrides() {
    let dir = TempDir::new().unwrap();
    let c = repo_config("smoke.json");
    let o = dir.path().join("o");
    run_ok(&[
        "montecarlo",
        "--config",
        c.to_str().unwrap(),
        "--out",
        o.to_str().unwrap(),
        "--reps",
        "3",
        "--seed",
        "100",
    ]);
    let doc = json(&o.join("report.json"));
    assert_eq!(doc["reps"], 3);
    assert_eq!(doc["seed_base"], 100);
    let records = fs::read_to_string(o.join("records.csv")).unwrap();
    assert!(records.lines().any(|l| l.starts_with("20,2,102,")));
}

#[test]
fn parsimony_linear_example() {
    let dir = TempDir::new().unwrap();
    let o = dir.path().join("p");
    let cfg = repo_config("linear.toml");
    let args = ["parsimony", "--config", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()];
    run_ok(&args);
    let doc = json(&o.join("parsimony.json"));
    let alpha: Vec<f64> = serde_json::from_value(doc["alpha_double_star"].clone()).unwrap();
    assert_eq!(alpha, vec![10.0, 0.0, 10.0]);
    assert_eq!(doc["e0"], serde_json::json!([0, 2]));
    let table = fs::read_to_string(o.join("candidates.csv")).unwrap();
    // header and one row per admissible E
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 4);

    let sup = repo_config("superposition.toml");
    let out = pqmle(&["parsimony", "--config", sup.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tied_parsimony_is_a_numerical_failure() {
    // (0, 0, 4) and (4, 4, 0) both have time-invariant penalty 2
    let text = fs::read_to_string(repo_config("linear.toml"))
        .unwrap()
        .replace("alpha_star = [15.0, 5.0, 5.0]", "alpha_star = [0.0, 0.0, 4.0]")
        .replace("{ index = 0, kappa = 0.3,", "{ index = 0, kappa = 0.5,")
        .replace("{ index = 1, kappa = 0.3,", "{ index = 1, kappa = 0.5,")
        .replace("{ index = 2, kappa = 0.3,", "{ index = 2, kappa = 1.0,");
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "tie.toml", &text);
    let out = pqmle(&["parsimony", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn json_and_toml_configs_share_a_hash() {
    let dir = TempDir::new().unwrap();
    let toml_cfg = ExperimentConfig::load(&repo_config("linear.toml")).unwrap();
    let json_path = write_config(&dir, "linear.json", &toml_cfg.to_json());
    assert_eq!(ExperimentConfig::load(&json_path).unwrap().hash(), toml_cfg.hash());
}
