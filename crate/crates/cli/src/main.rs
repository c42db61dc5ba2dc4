use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use pqmle::config::{ExperimentConfig, ModelConfig};
use pqmle::covariate::CovariatePath;
use pqmle::estimator::{estimate, Problem};
use pqmle::montecarlo::run_monte_carlo;
use pqmle::parsimony::{brute_force_pe_min, candidates_csv, select_parsimonious, TrueValueSet};
use pqmle::pointprocess::{Dataset, EventPath, IntensityModel};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

/// Penalized QMLE experiments for counting-process intensity models.
#[derive(Parser, Debug)]
#[command(name = "pqmle", version)]
struct Cli {
    /// Experiment config (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed (simulate) or seed base (montecarlo); overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replications.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Replications per horizon; overrides the config.
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Fit with every penalty weight set to zero.
    #[arg(long, global = true)]
    kappa_zero: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write one covariate path and its event times.
    Simulate,
    /// Fit the penalized estimator to data files.
    Estimate {
        #[arg(long)]
        covariate: Option<PathBuf>,
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Run the replication ladder and write the report.
    Montecarlo,
    /// Candidate table and parsimonious true value of a linear scenario.
    Parsimony {
        /// Cross-check with the search-based minimizer.
        #[arg(long)]
        verify: bool,
    },
    /// Summarize an existing report.
    Report {
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

struct Run {
    cfg: ExperimentConfig,
    hash: String,
    out: PathBuf,
    kappa_zero: bool,
}

impl Run {
    fn header(&self, extra: &[String]) -> Vec<String> {
        let mut h = vec![format!("config_hash={}", self.hash), format!("scenario={}", self.cfg.name)];
        if self.kappa_zero {
            h.push("kappa_zero=true".into());
        }
        h.extend_from_slice(extra);
        h
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn write_json(&self, name: &str, mut value: Value) -> Result<PathBuf> {
        if let Value::Object(map) = &mut value {
            map.insert("config_hash".into(), Value::String(self.hash.clone()));
        }
        self.write(name, &(serde_json::to_string_pretty(&value)? + "\n"))
    }
}

fn load(cli: &Cli) -> Result<Run> {
    let Some(path) = &cli.config else {
        return Err(pqmle::Error::Input("--config is required".into()).into());
    };
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(reps) = cli.reps {
        cfg.run.reps = reps;
    }
    if let Some(seed) = cli.seed {
        cfg.run.seed_base = seed;
    }
    cfg.validate()?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.run.output_dir.clone());
    Ok(Run { hash: cfg.hash(), cfg, out, kappa_zero: cli.kappa_zero })
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    let f = fs::File::open(path)
        .map_err(|e| pqmle::Error::Input(format!("cannot open {}: {e}", path.display())))?;
    Ok(BufReader::new(f))
}

fn simulate(run: &Run) -> Result<()> {
    let cfg = &run.cfg;
    let spec = cfg.covariate.build()?;
    let model = IntensityModel::new(cfg.family()?, cfg.theta_sim()?)?;
    let seed = cfg.run.seed_base;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let path = spec.simulate_with_rng(cfg.horizon(), &mut rng)?;
    let events = model.simulate_events_with_rng(&spec, &path, &mut rng);
    let header = run.header(&[format!("seed={seed}")]);

    let mut buf = Vec::new();
    path.write_csv(&spec, &header, &mut buf)?;
    let p1 = run.write("covariate.csv", std::str::from_utf8(&buf)?)?;
    buf.clear();
    events.write_csv(&header, &mut buf)?;
    let p2 = run.write("events.csv", std::str::from_utf8(&buf)?)?;
    println!("{} segments -> {}", path.n_segments(), p1.display());
    println!("{} events over T = {} -> {}", events.count(), events.horizon(), p2.display());
    Ok(())
}

fn estimate_cmd(run: &Run, covariate: Option<PathBuf>, events: Option<PathBuf>) -> Result<()> {
    let cfg = &run.cfg;
    let spec = cfg.covariate.build()?;
    let cov_path = covariate.unwrap_or_else(|| run.out.join("covariate.csv"));
    let ev_path = events.unwrap_or_else(|| run.out.join("events.csv"));
    let path = CovariatePath::read_csv(&spec, open(&cov_path)?)?;
    let events = EventPath::read_csv(open(&ev_path)?)?;
    let family = cfg.family()?;
    let data = Dataset::new(&spec, &path, &events)?;
    let penalty = if run.kappa_zero {
        cfg.penalty.with_kappas(&vec![0.0; cfg.penalty.entries().len()])?
    } else {
        cfg.penalty.clone()
    };
    let problem = Problem::new(&family, &data, &penalty)?;
    let fit = estimate(&problem, &cfg.solver)?;

    let header = run.header(&[]);
    run.write("patterns.csv", &fit.patterns_csv(&header))?;
    let out = run.write_json(
        "estimate.json",
        json!({
            "horizon": events.horizon(),
            "kappa_zero": run.kappa_zero,
            "events": data.total_events(),
            "covariate_file": cov_path.display().to_string(),
            "events_file": ev_path.display().to_string(),
            "result": fit,
        }),
    )?;
    println!("theta = {:?}", fit.theta);
    println!("active set = {:?} -> {}", fit.active_set, out.display());
    Ok(())
}

fn montecarlo(run: &Run, jobs: Option<usize>) -> Result<()> {
    let cfg = &run.cfg;
    let mut scenario = cfg.scenario()?;
    if run.kappa_zero {
        scenario = scenario.unpenalized()?;
    }
    let mc = cfg.monte_carlo();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        pool = pool.num_threads(n.max(1));
    }
    let report = pool.build()?.install(|| run_monte_carlo(&scenario, &mc))?;

    let header = run.header(&[format!("seed_base={}", mc.seed_base), format!("reps={}", mc.reps)]);
    run.write("statistics.csv", &report.statistics_csv(&header))?;
    run.write("records.csv", &report.records_csv(&header))?;
    let out = run.write_json("report.json", serde_json::to_value(&report)?)?;
    for s in &report.summaries {
        println!(
            "T = {}: selection {:.3} [{:.3}, {:.3}], failures {}",
            s.horizon, s.selection.estimate, s.selection.low, s.selection.high, s.failures
        );
    }
    println!("report -> {}", out.display());
    Ok(())
}

fn parsimony(run: &Run, verify: bool) -> Result<()> {
    let cfg = &run.cfg;
    let ModelConfig::Linear { alpha_star, alpha_max } = &cfg.model else {
        return Err(pqmle::Error::Input("parsimony needs a linear scenario".into()).into());
    };
    let a = cfg.covariate.build()?.collinearity_matrix()?;
    let sel = select_parsimonious(alpha_star, &a, &cfg.penalty, *alpha_max, &cfg.parsimony)?;
    run.write("candidates.csv", &candidates_csv(&sel.candidates, &run.header(&[])))?;

    let mut doc = json!({
        "alpha_star": alpha_star,
        "alpha_double_star": sel.alpha,
        "e0": sel.e0,
        "pe": cfg.penalty.time_invariant(&sel.alpha),
        "margin": sel.margin,
        "interior": sel.interior,
    });
    if verify {
        let set = TrueValueSet::new(alpha_star.clone(), &a, *alpha_max, cfg.parsimony.rank_tol)?;
        let bf = brute_force_pe_min(&set, &cfg.penalty, &cfg.brute_force)?;
        let dist = bf.point.iter().zip(&sel.alpha).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        doc["brute_force"] = json!({
            "point": bf.point,
            "value": bf.value,
            "evaluations": bf.evaluations,
            "sup_distance": dist,
            "agrees": dist <= cfg.brute_force.resolution,
        });
        println!("brute force sup-distance {dist:.3e}");
        if dist > cfg.brute_force.resolution {
            bail!(pqmle::Error::Numerical(format!(
                "search minimizer {:?} disagrees with the candidate table",
                bf.point
            )));
        }
    }
    let out = run.write_json("parsimony.json", doc)?;
    println!("alpha** = {:?} (E = {:?}, margin {:.3e}) -> {}", sel.alpha, sel.e0, sel.margin, out.display());
    Ok(())
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn report(run: &Run, path: Option<PathBuf>) -> Result<()> {
    let path = path.unwrap_or_else(|| run.out.join("report.json"));
    let doc: Value = serde_json::from_reader(open(&path)?)
        .map_err(|e| pqmle::Error::Input(format!("{}: {e}", path.display())))?;
    if doc["schema"] != "v1" {
        return Err(pqmle::Error::Input(format!("{}: unsupported report schema {}", path.display(), doc["schema"])).into());
    }
    let Some(summaries) = doc["summaries"].as_array() else {
        return Err(pqmle::Error::Input(format!("{}: no summaries", path.display())).into());
    };
    let mut csv = String::new();
    let source = format!("report_hash={}", doc["config_hash"].as_str().unwrap_or("unknown"));
    for c in run.header(&[source]) {
        csv.push_str(&format!("# {c}\n"));
    }
    csv.push_str("T,selection_frequency,zero_frequency,covariance_rel_error,shrinkage_median,mean_distance,failures\n");
    println!("scenario {}", doc["scenario"]);
    for s in summaries {
        let row = [
            num(&s["horizon"]),
            num(&s["selection"]["estimate"]),
            num(&s["zero_frequency"]),
            num(&s["covariance_rel_error"]),
            num(&s["shrinkage_median"]["estimate"]),
            num(&s["mean_distance"]),
            num(&s["failures"]),
        ];
        csv.push_str(&row.map(|v| v.to_string()).join(","));
        csv.push('\n');
        println!(
            "T = {:>8}  selection {:.3}  zeros {:.3}  cov err {:.3}  shrink {:.3e}  dist {:.3e}",
            row[0], row[1], row[2], row[3], row[4], row[5]
        );
    }
    let out = run.write("summary.csv", &csv)?;
    println!("summary -> {}", out.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<pqmle::Error>() {
            return match e {
                pqmle::Error::Numerical(_)
                | pqmle::Error::Singular(_)
                | pqmle::Error::Rank { .. }
                | pqmle::Error::NonUnique(_) => 3,
                _ => 2,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|run| match cli.command {
        Command::Simulate => simulate(&run),
        Command::Estimate { covariate, events } => estimate_cmd(&run, covariate, events),
        Command::Montecarlo => montecarlo(&run, cli.jobs),
        Command::Parsimony { verify } => parsimony(&run, verify),
        Command::Report { report: path } => report(&run, path),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
