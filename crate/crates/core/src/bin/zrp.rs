use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use zrp::ensembles::{CanonicalSampler, DEFAULT_BUDGET};
use zrp::harness::{jump_law_summary, run_suite_file, ExperimentConfig, StatReport, Status, SuiteConfig, SuiteOptions};
use zrp::kmc::{run_trace, sample_in_well0, simulate, EventLog, TraceOptions, TrajectoryState};
use zrp::model::{Configuration, ModelParams, WellPartition};
use zrp::oracle::{cross_validate, BatteryOptions, ZrpChain, ENUM_BUDGET};
use zrp::potential::rates::{r_lambda_exact, rate_capacity_identity};
use zrp::{rng, Execution, Result, ZrpError};

#[derive(Parser)]
#[command(name = "zrp", version, about = "Condensing zero-range process toolkit")]
struct Cli {
    /// suite configuration (TOML); required by `suite`
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// defaults to 0, or to the configured seed for `suite`
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// worker threads, 0 for one per core
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// largest table or enumeration size
    #[arg(long, global = true, default_value_t = DEFAULT_BUDGET)]
    budget: u128,
    /// run on the calling thread only
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Copy)]
struct Model {
    #[arg(long)]
    l: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    b: f64,
}

#[derive(Args, Clone, Copy)]
struct Wells {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    beta: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the particle system from a condensed start; writes events.csv and summary.json
    Simulate {
        #[command(flatten)]
        model: Model,
        #[arg(long)]
        events: u64,
        /// write the event log
        #[arg(long)]
        log: bool,
    },
    /// Trace runs from the wells; writes trace_<k>.csv and summary.json
    Trace {
        #[command(flatten)]
        model: Model,
        #[command(flatten)]
        wells: Wells,
        #[arg(long)]
        t_max: f64,
        #[arg(long, default_value_t = 1)]
        trajectories: usize,
    },
    /// Exact trace rates, capacities and the rate-capacity identity on an enumerable system
    Capacity {
        #[command(flatten)]
        model: Model,
        #[command(flatten)]
        wells: Wells,
    },
    /// Exact cross-validation battery on an enumerable system
    Oracle {
        #[command(flatten)]
        model: Model,
        #[command(flatten)]
        wells: Wells,
        #[arg(long, default_value_t = 100_000)]
        draws: usize,
        #[arg(long, default_value_t = 4000)]
        replicas: usize,
    },
    /// Characteristic function and jump-count checks of the limit process
    Levy {
        #[arg(long)]
        b: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        paths: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        k: Vec<i64>,
    },
    /// Jump-law statistics of a trace CSV (columns local_time, well, jump)
    Stats {
        #[arg(long)]
        l: usize,
        /// trace file(s)
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Run every experiment in --config
    Suite,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn print_report(r: &StatReport) {
    let status = match r.status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Inconclusive => "INCONCLUSIVE",
    };
    println!("{status:<12} {}", r.label);
    for c in &r.checks {
        println!(
            "  [{}] {} = {:.6e} (tolerance {:.3e})",
            if c.passed { "ok" } else { "!!" },
            c.name,
            c.value,
            c.tolerance
        );
    }
}

fn run(cli: Cli) -> Result<bool> {
    zrp::par::set_threads(cli.threads);
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    if cli.config.is_some() && !matches!(cli.cmd, Cmd::Suite) {
        return Err(ZrpError::Config("--config is only read by `suite`".into()));
    }
    let seed = cli.seed.unwrap_or(0);
    let out = cli.out.as_path();
    std::fs::create_dir_all(out)?;
    match cli.cmd {
        Cmd::Simulate { model, events, log } => {
            let mp = ModelParams::new(model.l, model.n, model.b)?;
            let mut state = TrajectoryState::new(Configuration::condensed(mp.l, mp.n, 0), mp.b)?;
            let mut rng = rng::stream(seed, 0);
            let summary = if log {
                let mut w = EventLog::new(BufWriter::new(File::create(out.join("events.csv"))?))?;
                let s = simulate(&mut state, events, &mut rng, Some(&mut w))?;
                w.finish()?;
                s
            } else {
                simulate::<_, std::io::Sink>(&mut state, events, &mut rng, None)?
            };
            #[derive(Serialize)]
            struct Summary<'a> {
                seed: u64,
                params: &'a ModelParams,
                #[serde(flatten)]
                sim: &'a zrp::kmc::SimSummary,
            }
            write_json(&out.join("summary.json"), &Summary { seed, params: &mp, sim: &summary })?;
            println!("{} events, t = {:.6e}, max drift {:.3e}", summary.events, summary.time, summary.max_drift);
            Ok(true)
        }
        Cmd::Trace { model, wells, t_max, trajectories } => {
            let mp = ModelParams::new(model.l, model.n, model.b)?;
            let wp = WellPartition::explicit(wells.alpha, wells.beta, wells.beta)?;
            let sampler = CanonicalSampler::new(&mp, cli.budget)?;
            let recs = zrp::par::map_indexed(exec, trajectories, |k| {
                let mut rng = rng::stream(seed, k as u64);
                let init = sample_in_well0(&sampler, &mp, &wp, &mut rng, 100_000)?;
                run_trace(&mp, &wp, &init, &TraceOptions::until(t_max), &mut rng)
            });
            #[derive(Serialize)]
            struct Row {
                trajectory: usize,
                jumps: usize,
                local_time: f64,
                delta_time: f64,
                elapsed: f64,
                events: u64,
            }
            let mut rows = Vec::new();
            for (k, rec) in recs.into_iter().enumerate() {
                let rec = rec?;
                rec.write_csv(BufWriter::new(File::create(out.join(format!("trace_{k}.csv")))?))?;
                rows.push(Row {
                    trajectory: k,
                    jumps: rec.entries.len(),
                    local_time: rec.local_time(),
                    delta_time: rec.total_delta_time,
                    elapsed: rec.elapsed,
                    events: rec.events,
                });
            }
            let jumps: usize = rows.iter().map(|r| r.jumps).sum();
            write_json(
                &out.join("summary.json"),
                &serde_json::json!({ "seed": seed, "params": mp, "wells": wp, "runs": rows }),
            )?;
            println!("{trajectories} trajectories, {jumps} trace jumps");
            Ok(true)
        }
        Cmd::Capacity { model, wells } => {
            let mp = ModelParams::new(model.l, model.n, model.b)?;
            let wp = WellPartition::explicit(wells.alpha, wells.beta, wells.beta)?;
            let zc = ZrpChain::build(&mp, &wp, ENUM_BUDGET)?;
            let rates = r_lambda_exact(&zc, exec)?;
            let identity = rate_capacity_identity(&zc, &rates, exec)?;
            let worst = identity.iter().map(|r| r.abs_err() / r.rhs.abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
            let r_lambda = rates.r_lambda();
            write_json(
                &out.join("capacity.json"),
                &serde_json::json!({ "params": mp, "wells": wp, "r_lambda": r_lambda, "rates": rates, "identity": identity }),
            )?;
            for (z, r) in r_lambda.iter().enumerate().skip(1) {
                println!("r_lambda({z}) = {r:.10e}");
            }
            println!("rate-capacity identity: worst relative error {worst:.3e}");
            Ok(worst <= 1e-8)
        }
        Cmd::Oracle { model, wells, draws, replicas } => {
            let mp = ModelParams::new(model.l, model.n, model.b)?;
            let wp = WellPartition::explicit(wells.alpha, wells.beta, wells.beta)?;
            let opts = BatteryOptions { sampler_draws: draws, kmc_replicas: replicas, relax_multiple: 20.0, seed };
            let r = cross_validate(&mp, &wp, &opts, exec)?;
            write_json(&out.join("oracle.json"), &r)?;
            for c in r.checks.iter().chain(&r.diagnostics) {
                println!("[{}] {} = {:.6e}", if c.passed { "ok" } else { "!!" }, c.name, c.value);
            }
            Ok(r.passed)
        }
        Cmd::Levy { b, rho, eps, t, paths, k } => {
            let params = zrp::harness::config::LevyParamsConfig { b, rho, eps, t, paths, k };
            let ec = ExperimentConfig::new("levy", &params)?;
            let cfg = SuiteConfig { seed, output_dir: out.to_path_buf(), experiments: vec![ec] };
            run_config(&cfg, exec, cli.budget, out)
        }
        Cmd::Stats { l, files } => {
            let mut jumps = Vec::new();
            for f in &files {
                let mut rdr = csv::Reader::from_path(f)?;
                for row in rdr.records() {
                    let row = row?;
                    let z: usize = row.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| ZrpError::Parse {
                        line: jumps.len() + 2,
                        msg: format!("bad jump in {}", f.display()),
                    })?;
                    if z == 0 || z >= l {
                        return Err(ZrpError::InvalidParameter(format!("jump {z} outside 1..{l}")));
                    }
                    jumps.push(z);
                }
            }
            let s = jump_law_summary(l, jumps);
            write_json(&out.join("stats.json"), &s)?;
            println!("{} jumps, tv {:.4}, chi2 p {:.3e}, sign p {:.3e}", s.jumps, s.tv, s.chi2.p_value, s.sign_p);
            Ok(true)
        }
        Cmd::Suite => {
            let path = cli.config.ok_or_else(|| ZrpError::Config("suite needs --config".into()))?;
            let opts = SuiteOptions { exec, budget: cli.budget, output_dir: Some(out.to_path_buf()), seed: cli.seed };
            let report = run_suite_file(&path, &opts)?;
            report.experiments.iter().for_each(print_report);
            Ok(report.passed)
        }
    }
}

fn run_config(cfg: &SuiteConfig, exec: Execution, budget: u128, out: &Path) -> Result<bool> {
    let opts = SuiteOptions { exec, budget, output_dir: Some(out.to_path_buf()), seed: None };
    let report = zrp::harness::run_suite(cfg, &opts)?;
    report.experiments.iter().for_each(print_report);
    Ok(report.passed)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
