//! Monte Carlo trend checks and closed-form scalings at small sizes.

use zrp::ensembles::{CanonicalSampler, DEFAULT_BUDGET};
use zrp::harness::{run_suite, StatReport, Status, SuiteConfig, SuiteOptions};
use zrp::kmc::{bd_expected_hitting, exit_event_probe};
use zrp::model::{JumpRateTable, ModelParams, WellPartition};
use zrp::{rng, Execution};

fn run_one(toml: &str) -> StatReport {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SuiteConfig::from_toml(toml).unwrap();
    let opts = SuiteOptions { output_dir: Some(dir.path().to_path_buf()), ..SuiteOptions::default() };
    let mut report = run_suite(&cfg, &opts).unwrap();
    assert_eq!(report.experiments.len(), 1);
    report.experiments.remove(0)
}

fn check(r: &StatReport, name: &str) -> (bool, f64) {
    let c = r.find_check(name).unwrap_or_else(|| panic!("no check {name}"));
    (c.passed, c.value)
}

#[test]
fn lln_bias_shrinks_with_l() {
    let r = run_one(
        r#"
seed = 11
output_dir = "unused"
[[experiment]]
name = "lln"
[experiment.params]
b = 5.0
rho_factor = 2.0
l = [50, 200]
draws = 4000
allowance = { mode = "asymptotic" }
"#,
    );
    let (ok, v) = check(&r, "bias_trend");
    assert!(ok, "bias at L=200 exceeds bias at L=50 by {v}");
    assert_eq!(r.status, Status::Pass);
}

#[test]
fn single_site_max_is_n() {
    let mp = ModelParams::at_critical_multiple(1, 2.0, 5.0).unwrap();
    let sampler = CanonicalSampler::new(&mp, DEFAULT_BUDGET).unwrap();
    let mut rng = rng::stream(3, 0);
    for _ in 0..20 {
        assert_eq!(sampler.sample(&mut rng).observables().max_value, mp.n);
    }
}

#[test]
fn scaled_dwell_stays_in_band() {
    let r = run_one(
        r#"
seed = 5
output_dir = "unused"
[[experiment]]
name = "exit_time"
[experiment.params]
b = 4.0
rho_factor = 2.0
l = [16, 32, 64]
scales = { mode = "relative", alpha_fraction = 0.5, beta = 2 }
trajectories = 8
jumps_per_trajectory = 25
t_max = 1e8
band = 3.0
"#,
    );
    assert_eq!(r.status, Status::Pass, "{:#?}", r.checks);
    assert!(check(&r, "non_positive_dwells").0);
    let (ok, ratio) = check(&r, "band_max_over_min");
    assert!(ok && ratio >= 1.0);
    for l in [16, 32, 64] {
        assert!(r.find_estimate(&format!("L{l}:dwell_cv")).is_some());
    }
}

#[test]
fn delta_fraction_decreases_with_l() {
    let r = run_one(
        r#"
seed = 9
output_dir = "unused"
[[experiment]]
name = "delta_fraction"
[experiment.params]
b = 5.0
rho_factor = 2.0
l = [16, 32, 64]
scales = { mode = "relative", alpha_fraction = 0.5, beta = 4 }
trajectories = 20
t_max = 200.0
"#,
    );
    assert_eq!(r.status, Status::Pass, "{:#?} {:#?}", r.checks, r.estimates);
    assert!(check(&r, "local_time_identity").0);
}

#[test]
fn exit_probe_at_theta_window() {
    // N = 80 keeps the condensate stable enough that a window of theta_L is
    // neither always nor never long enough
    let mp = ModelParams::new(16, 80, 4.0).unwrap();
    let wp = WellPartition::explicit(0.5 * mp.n_tilde, 2, 2).unwrap();
    let p = exit_event_probe(&mp, &wp, mp.theta, 16, 21, Execution::Parallel, DEFAULT_BUDGET).unwrap();
    assert!(p.estimate > 0.0 && p.estimate < 1.0, "{p:?}");
    assert!(p.ci.0 <= p.estimate && p.estimate <= p.ci.1);
}

#[test]
fn hitting_time_over_theta_in_fixed_band() {
    let b = 4.0;
    let ratios: Vec<f64> = [50usize, 100, 200, 400]
        .iter()
        .map(|&l| {
            let mp = ModelParams::at_critical_multiple(l, 2.0, b).unwrap();
            let y = ((mp.n as f64 / l as f64 - 1.5 * mp.rho_c) * l as f64).floor() as usize;
            let rates = JumpRateTable::new(b, y + 1);
            bd_expected_hitting(0, y, &rates, None).unwrap() / mp.theta
        })
        .collect();
    // band fitted at the first size
    let (lo, hi) = (ratios[0] / 2.0, ratios[0] * 2.0);
    for r in &ratios {
        assert!(r.is_finite() && *r > 0.0);
        assert!((lo..=hi).contains(r), "{ratios:?}");
    }
}
