use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, Context as _, Result};
use clap::{Args, Parser, Subcommand};

use ioscen_cli::config::{parse_list, KvConfig};
use ioscen_cli::example1::{verify_example_one, Fault};
use ioscen_cli::experiments::{
    curve_file_name, curve_table, online_table, run_curve, run_online_experiment, run_tightness, theory_file_name,
    theory_table, tightness_table, CurveParams, OnlineInstance, OnlineParams, TightnessParams,
};
use ioscen_cli::output::RunManifest;
use ioscen_core::evaluation::RefitSchedule;
use ioscen_core::EstimatorKind;

const EXIT_USAGE: u8 = 2;
const EXIT_FAILURE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "ioscen", version, about = "Inverse optimization scenario experiments")]
struct Cli {
    /// Directory for CSV files and manifests.
    #[arg(long, global = true, env = "IOSCEN_OUT_DIR", default_value = "ioscen-out")]
    out_dir: PathBuf,
    /// key=value file overriding defaults; flags override the file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mismatch curves on the synthetic instance, plus the explicit bound.
    Curve(CurveArgs),
    /// Tail identity of the violation probability on the tightness instance.
    Tightness(TightnessArgs),
    /// Online protocol regret.
    Online(OnlineArgs),
    /// Deterministic checks on the two-state example.
    VerifyExample1(VerifyArgs),
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[arg(long, value_delimiter = ',')]
    d_list: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    t_grid: Option<Vec<usize>>,
    #[arg(long)]
    runs: Option<usize>,
    /// Subset of sub,incenter,polyak.
    #[arg(long)]
    estimators: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Number of actions.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TightnessArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    eps_grid: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct OnlineArgs {
    /// synthetic or tightness.
    #[arg(long)]
    instance: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    estimator: Option<String>,
    /// every-round or doubling.
    #[arg(long)]
    refit: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Inject a fault (incenter-row-sign) to exercise the failure path.
    #[arg(long)]
    inject_fault: Option<String>,
}

/// Error tagged with the exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn usage(err: anyhow::Error) -> Failure {
    Failure { code: EXIT_USAGE, err }
}

fn failure(err: anyhow::Error) -> Failure {
    Failure { code: EXIT_FAILURE, err }
}

/// Flag, then config file, then default.
fn pick<T: FromStr>(flag: Option<T>, cfg: &KvConfig, key: &str, default: T) -> Result<T, Failure>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(v),
        None => Ok(cfg.get(key).map_err(usage)?.unwrap_or(default)),
    }
}

fn pick_list<T: FromStr>(flag: Option<Vec<T>>, cfg: &KvConfig, key: &str, default: Vec<T>) -> Result<Vec<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(v),
        None => Ok(cfg.get_list(key).map_err(usage)?.unwrap_or(default)),
    }
}

fn parse_estimators(s: &str) -> Result<Vec<EstimatorKind>> {
    let names: Vec<String> = parse_list(s)?;
    names
        .iter()
        .map(|n| match EstimatorKind::parse(n)? {
            EstimatorKind::Slack => Err(anyhow!("estimator 'slack' is not available for curves")),
            k => Ok(k),
        })
        .collect()
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))
        .map_err(failure)
}

fn cmd_curve(a: CurveArgs, cfg: &KvConfig, out: &Path) -> Result<(), Failure> {
    let def = CurveParams::default();
    let estimators = match a.estimators.or_else(|| cfg.raw("estimators").map(str::to_string)) {
        Some(s) => parse_estimators(&s).map_err(usage)?,
        None => def.estimators.clone(),
    };
    let p = CurveParams {
        d_list: pick_list(a.d_list, cfg, "d-list", def.d_list)?,
        t_grid: pick_list(a.t_grid, cfg, "t-grid", def.t_grid)?,
        runs: pick(a.runs, cfg, "runs", def.runs)?,
        estimators,
        beta: pick(a.beta, cfg, "beta", def.beta)?,
        n_test: pick(a.n_test, cfg, "n-test", def.n_test)?,
        k: pick(a.k, cfg, "k", def.k)?,
        seed: pick(a.seed, cfg, "seed", def.seed)?,
    };
    if p.runs == 0 || p.n_test == 0 || p.t_grid.is_empty() || p.d_list.is_empty() || p.t_grid.contains(&0) {
        return Err(usage(anyhow!("runs, n-test, d-list and t-grid must be non-empty and positive")));
    }
    if !(p.beta > 0.0 && p.beta < 1.0) {
        return Err(usage(anyhow!("beta must lie in (0, 1)")));
    }
    ensure_dir(out)?;
    let start = Instant::now();
    let res = run_curve(&p).map_err(|e| failure(e.into()))?;
    let mut m = RunManifest::new("curve");
    m.param("d_list", &p.d_list);
    m.param("t_grid", &p.t_grid);
    m.param("runs", p.runs);
    m.param("estimators", p.estimators.iter().map(|e| e.name()).collect::<Vec<_>>());
    m.param("beta", p.beta);
    m.param("n_test", p.n_test);
    m.param("k", p.k);
    m.param("instances", &res.instance_names);
    m.param("audited_b", &res.audited_b);
    m.seeds.insert("seed".into(), p.seed);
    m.notes.push("theory rows with T < 2(d + ln(1/beta)) are omitted".into());
    m.notes.push("theta_star: i.i.d. Unif[0,1] coordinates rescaled to sum to one".into());
    m.notes.push("ci90 band: mean +- 1.645 * sd / sqrt(runs) across runs".into());
    for s in &res.series {
        m.write_table(out, &curve_file_name(s.d, s.estimator), &curve_table(s)).map_err(failure)?;
    }
    for &d in &p.d_list {
        m.write_table(out, &theory_file_name(d), &theory_table(d, &p.t_grid, p.beta)).map_err(failure)?;
    }
    m.wall_clock_seconds = start.elapsed().as_secs_f64();
    m.write(out).map_err(failure)?;
    for f in &m.files {
        println!("{}", out.join(&f.path).display());
    }
    Ok(())
}

fn cmd_tightness(a: TightnessArgs, cfg: &KvConfig, out: &Path) -> Result<(), Failure> {
    let def = TightnessParams::default();
    let p = TightnessParams {
        d: pick(a.d, cfg, "d", def.d)?,
        t: pick(a.t, cfg, "t", def.t)?,
        trials: pick(a.trials, cfg, "trials", def.trials)?,
        eps_grid: pick_list(a.eps_grid, cfg, "eps-grid", def.eps_grid)?,
        seed: pick(a.seed, cfg, "seed", def.seed)?,
    };
    if p.d == 0 || p.t < p.d || p.trials == 0 || p.eps_grid.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(usage(anyhow!("need d >= 1, T >= d, trials >= 1 and eps in [0, 1]")));
    }
    ensure_dir(out)?;
    let start = Instant::now();
    let table = run_tightness(&p).map_err(|e| failure(e.into()))?;
    let mut m = RunManifest::new("tightness");
    m.param("d", p.d);
    m.param("t", p.t);
    m.param("trials", p.trials);
    m.param("eps_grid", &p.eps_grid);
    m.param("discarded", table.discarded);
    m.param("violation", if table.exact { "closed-form" } else { "inner-monte-carlo" });
    m.seeds.insert("seed".into(), p.seed);
    let name = format!("tightness_d{}_T{}.csv", p.d, p.t);
    m.write_table(out, &name, &tightness_table(&table)).map_err(failure)?;
    m.wall_clock_seconds = start.elapsed().as_secs_f64();
    m.write(out).map_err(failure)?;
    println!("{}", out.join(name).display());
    Ok(())
}

fn cmd_online(a: OnlineArgs, cfg: &KvConfig, out: &Path) -> Result<(), Failure> {
    let def = OnlineParams::default();
    let instance = match a.instance.or_else(|| cfg.raw("instance").map(str::to_string)) {
        Some(s) => OnlineInstance::parse(&s).map_err(usage)?,
        None => def.instance,
    };
    let estimator = match a.estimator.or_else(|| cfg.raw("estimator").map(str::to_string)) {
        Some(s) => EstimatorKind::parse(&s).map_err(|e| usage(e.into()))?,
        None => def.estimator,
    };
    let refit = match a.refit.or_else(|| cfg.raw("refit").map(str::to_string)) {
        Some(s) => RefitSchedule::parse(&s).map_err(|e| usage(e.into()))?,
        None => def.refit,
    };
    let p = OnlineParams {
        instance,
        d: pick(a.d, cfg, "d", def.d)?,
        k: pick(a.k, cfg, "k", def.k)?,
        t: pick(a.t, cfg, "t", def.t)?,
        runs: pick(a.runs, cfg, "runs", def.runs)?,
        estimator,
        refit,
        seed: pick(a.seed, cfg, "seed", def.seed)?,
    };
    if p.d == 0 || p.t == 0 || p.runs == 0 {
        return Err(usage(anyhow!("d, t and runs must be positive")));
    }
    ensure_dir(out)?;
    let start = Instant::now();
    let res = run_online_experiment(&p).map_err(|e| failure(e.into()))?;
    let mut m = RunManifest::new("online");
    m.param("instance", &res.instance_name);
    m.param("d", p.d);
    m.param("t", p.t);
    m.param("runs", p.runs);
    let est = match p.instance {
        OnlineInstance::Synthetic => p.estimator.name(),
        OnlineInstance::Tightness => "sub-linear",
    };
    m.param("estimator", est);
    m.param("refit", p.refit.name());
    m.param("refit_failures", res.traces.iter().map(|t| t.refit_failures.len()).sum::<usize>());
    m.seeds.insert("seed".into(), p.seed);
    m.notes.push("round-1 estimate: slice anchor plus a seeded perturbation of norm 0.1".into());
    let name = format!("online_{}_d{}_{}.csv", p.instance.name(), p.d, est);
    m.write_table(out, &name, &online_table(&res)).map_err(failure)?;
    m.wall_clock_seconds = start.elapsed().as_secs_f64();
    m.write(out).map_err(failure)?;
    println!("{}", out.join(name).display());
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<(), Failure> {
    let fault = match a.inject_fault.as_deref() {
        None => None,
        Some("incenter-row-sign") => Some(Fault::IncenterRowSign),
        Some(other) => return Err(usage(anyhow!("unknown fault '{other}'"))),
    };
    let checks = verify_example_one(fault).map_err(|e| failure(e.into()))?;
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(failure(anyhow!("failed checks: {}", failed.join(", "))))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(p) => KvConfig::load(p).map_err(usage)?,
        None => KvConfig::default(),
    };
    match cli.command {
        Command::Curve(a) => cmd_curve(a, &cfg, &cli.out_dir),
        Command::Tightness(a) => cmd_tightness(a, &cfg, &cli.out_dir),
        Command::Online(a) => cmd_online(a, &cfg, &cli.out_dir),
        Command::VerifyExample1(a) => cmd_verify(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
