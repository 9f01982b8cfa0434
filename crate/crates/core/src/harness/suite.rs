//! Run a configured list of experiments and write their artifacts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::SuiteConfig;
use super::experiments::{self, Context};
use super::report::{StatReport, Status};
use crate::ensembles::DEFAULT_BUDGET;
use crate::error::Result;
use crate::par::{self, Execution};

/// Run-time settings that do not change results.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOptions {
    pub exec: Execution,
    pub budget: u128,
    /// replaces the configured output directory
    pub output_dir: Option<PathBuf>,
    /// replaces the configured seed
    pub seed: Option<u64>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { exec: Execution::Parallel, budget: DEFAULT_BUDGET, output_dir: None, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub passed: bool,
    pub experiments: Vec<StatReport>,
}

impl SuiteReport {
    pub fn get(&self, label: &str) -> Option<&StatReport> {
        self.experiments.iter().find(|r| r.label == label)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Parse every experiment first, then run them over the worker pool. Each
/// experiment writes into `<output_dir>/<label>/`; the master report goes to
/// `<output_dir>/report.json`.
pub fn run_suite(cfg: &SuiteConfig, opts: &SuiteOptions) -> Result<SuiteReport> {
    let exps = cfg.experiments()?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let out = opts.output_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&out)?;
    let reports = par::map_indexed(opts.exec, exps.len(), |i| -> Result<StatReport> {
        let ec = &cfg.experiments[i];
        let dir = out.join(ec.label());
        let ctx = Context { label: ec.label(), seed: ec.seed(seed), dir: &dir, exec: opts.exec, budget: opts.budget };
        let report = experiments::run(&exps[i], &ctx)?;
        write_json(&dir.join("report.json"), &report)?;
        Ok(report)
    });
    let experiments: Vec<StatReport> = reports.into_iter().collect::<Result<_>>()?;
    let passed = experiments.iter().all(|r| r.status != Status::Fail);
    let report = SuiteReport { seed, passed, experiments };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

pub fn run_suite_file(path: &Path, opts: &SuiteOptions) -> Result<SuiteReport> {
    run_suite(&SuiteConfig::load(path)?, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ZrpError;

    fn opts(dir: &Path) -> SuiteOptions {
        SuiteOptions { output_dir: Some(dir.to_path_buf()), ..SuiteOptions::default() }
    }

    #[test]
    fn empty_suite_succeeds() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SuiteConfig::from_toml("seed = 1\noutput_dir = \"unused\"\n").unwrap();
        let r = run_suite(&cfg, &opts(dir.path())).unwrap();
        assert!(r.passed);
        assert!(r.experiments.is_empty());
        assert!(dir.path().join("report.json").exists());
    }

    #[test]
    fn unknown_experiment_runs_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let text = "seed = 1\noutput_dir = \"o\"\n[[experiment]]\nname = \"local_limit\"\n[experiment.params]\nb = 5.0\nrho_factor = 2.0\nl = [10, 20]\n[[experiment]]\nname = \"bogus\"\n";
        let err = run_suite(&SuiteConfig::from_toml(text).unwrap(), &opts(dir.path())).unwrap_err();
        assert!(matches!(err, ZrpError::Config(_)));
        assert!(!dir.path().join("local_limit").exists());
    }

    #[test]
    fn oracle_dispatch_and_determinism() {
        let text = r#"
seed = 11
output_dir = "o"

[[experiment]]
name = "oracle"
[experiment.params]
cases = [{ l = 2, n = 4, b = 3.0, alpha = 1.0, beta = 1 }]
sampler_draws = 5000
kmc_replicas = 500
relax_multiple = 20.0

[[experiment]]
name = "levy"
[experiment.params]
b = 3.0
rho = 4.0
eps = 1e-3
t = 0.1
paths = 2000
k = [1]
"#;
        let cfg = SuiteConfig::from_toml(text).unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ra = run_suite(&cfg, &opts(a.path())).unwrap();
        let rb = run_suite(&cfg, &SuiteOptions { exec: Execution::Sequential, ..opts(b.path()) }).unwrap();
        assert_eq!(ra, rb);
        let oracle = ra.get("oracle").unwrap();
        assert!(oracle.find_check("L2_N4_b3:detailed_balance").is_some());
        for f in ["oracle/oracle.csv", "levy/levy.csv", "levy/levy_path.csv", "report.json"] {
            let x = std::fs::read(a.path().join(f)).unwrap();
            let y = std::fs::read(b.path().join(f)).unwrap();
            assert_eq!(x, y, "{f}");
        }
    }
}
