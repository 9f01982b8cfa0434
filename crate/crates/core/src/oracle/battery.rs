//! Cross-validation battery for one enumerable system.

use serde::{Deserialize, Serialize};

use super::{balance_residual, mean_hitting_exact, stationary_exact, ZrpChain, ENUM_BUDGET};
use crate::ensembles::{CanonicalSampler, DEFAULT_BUDGET};
use crate::error::Result;
use crate::kmc::TrajectoryState;
use crate::model::{Configuration, ModelParams, WellPartition};
use crate::par::{self, Execution};
use crate::potential::rates::{r_lambda_exact, rate_capacity_identity};
use crate::potential::{restricted_chain, spectral_gap, trace_chain};
use crate::rng;
use crate::stats::chi2_gof;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    /// pass iff `value <= tolerance`
    AtMost,
    /// pass iff `value > tolerance`
    Above,
    /// pass iff `tolerance <= value <= upper`
    Within { upper: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub gate: Gate,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, gate: Gate::AtMost, passed: value <= tolerance }
    }

    pub fn above(name: &str, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, gate: Gate::Above, passed: value > tolerance }
    }

    pub fn within(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: lo,
            gate: Gate::Within { upper: hi },
            passed: lo <= value && value <= hi,
        }
    }
}

/// Sample sizes for the Monte Carlo parts of the battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryOptions {
    pub sampler_draws: usize,
    pub kmc_replicas: usize,
    /// replicas run for `relax_multiple / gap`
    pub relax_multiple: f64,
    pub seed: u64,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        Self { sampler_draws: 100_000, kmc_replicas: 4000, relax_multiple: 20.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub l: usize,
    pub n: usize,
    pub b: f64,
    pub alpha: f64,
    pub beta: usize,
    pub states: usize,
    pub checks: Vec<Check>,
    /// reported, not gated
    pub diagnostics: Vec<Check>,
    pub passed: bool,
}

impl BatteryReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Largest relative difference between two probability vectors.
fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
}

fn histogram(n: usize, idx: impl Iterator<Item = usize>) -> Vec<u64> {
    let mut c = vec![0u64; n];
    for i in idx {
        c[i] += 1;
    }
    c
}

/// Run every exact and statistical cross-check on `(L, N, b)` with explicit wells.
pub fn cross_validate(
    mp: &ModelParams,
    wp: &WellPartition,
    opts: &BatteryOptions,
    exec: Execution,
) -> Result<BatteryReport> {
    let zc = ZrpChain::build(mp, wp, ENUM_BUDGET)?;
    let ns = zc.states.len();
    let mut checks = Vec::new();
    let mut diagnostics = Vec::new();

    let pi = stationary_exact(&zc.generator)?;
    checks.push(Check::at_most("stationary_vs_product", max_rel_diff(&pi, &zc.mu), 1e-10));
    checks.push(Check::at_most("balance_residual", balance_residual(&zc.generator, &zc.mu), 1e-12));
    checks.push(Check::at_most("detailed_balance", zc.detailed_balance_residual(), 1e-12));
    checks.push(Check::at_most("row_sums", zc.generator.row_sum_residual(), 1e-12));

    let sampler = CanonicalSampler::new(mp, DEFAULT_BUDGET)?;
    let mut rng = rng::stream(opts.seed, 0);
    let draws = histogram(
        ns,
        (0..opts.sampler_draws)
            .map(|_| zc.states.index_of(&sampler.sample(&mut rng)).expect("sampled state is enumerated")),
    );
    checks.push(Check::above("sampler_chi2_p", chi2_gof(&draws, &zc.mu, 5.0).p_value, 0.001));

    let masses = zc.well_masses();
    checks.push(Check::above("smallest_well_mass", masses.iter().copied().fold(f64::INFINITY, f64::min), 0.0));
    let spread = masses.iter().copied().fold(0.0, f64::max) - masses.iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(Check::at_most("well_mass_uniformity", spread / masses[0].max(f64::MIN_POSITIVE), 1e-10));

    if masses.iter().all(|&m| m > 0.0) {
        let trace = trace_chain(&zc.chain, &zc.wells_mask(), exec)?;
        let (res, _, _) = trace.chain.reversibility_residual();
        checks.push(Check::at_most("trace_reversibility", res, 1e-10));

        let rates = r_lambda_exact(&zc, exec)?;
        let worst = rate_capacity_identity(&zc, &rates, exec)?
            .iter()
            .map(|r| r.abs_err() / r.rhs.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        checks.push(Check::at_most("rate_capacity_identity", worst, 1e-8));

        let mut smallest_gap = f64::INFINITY;
        for x in 0..mp.l {
            let (rc, _) = restricted_chain(&zc.chain, &zc.well_mask(x))?;
            let gap = if rc.len() > 1 { spectral_gap(&rc)?.gap } else { f64::INFINITY };
            smallest_gap = smallest_gap.min(gap);
        }
        checks.push(Check::above("restricted_gap_min", smallest_gap, 0.0));

        // real-time exit from E^0 against the trace exit rate, both under mu
        let other: Vec<bool> = (0..ns).map(|i| zc.well_of(i).is_some_and(|x| x != 0)).collect();
        let u = mean_hitting_exact(&zc.generator, &other)?;
        let in0 = zc.well_mask(0);
        let exit_time: f64 = (0..ns).filter(|&i| in0[i]).map(|i| zc.mu[i] * u[i]).sum::<f64>() / masses[0];
        let exit_rate: f64 = (1..mp.l).map(|z| rates.r_lambda()[z]).sum();
        diagnostics.push(Check::within("hitting_vs_trace_rate", exit_time * exit_rate, 0.5, 2.0));
    }

    let gap = spectral_gap(&zc.chain)?.gap;
    let horizon = opts.relax_multiple / gap;
    let start = Configuration::condensed(mp.l, mp.n, 0);
    let finals = par::map_indexed(exec, opts.kmc_replicas, |k| {
        let mut rng = rng::stream(opts.seed, 1 + k as u64);
        let mut s = TrajectoryState::new(start.clone(), mp.b).expect("valid configuration");
        while s.step_until(&mut rng, horizon).is_some() {}
        zc.states.index_of(s.cfg()).expect("reachable state is enumerated")
    });
    let counts = histogram(ns, finals.into_iter());
    checks.push(Check::above("kmc_law_chi2_p", chi2_gof(&counts, &zc.mu, 5.0).p_value, 0.001));

    // injected fault: must be caught
    let mut bad = zc.clone();
    let (i, j) = (0, bad.generator.row(0)[0].0);
    bad.generator.scale_rate(i, j, 1.01);
    let corrupted = bad.detailed_balance_residual();
    checks.push(Check::above("negative_control_detected", corrupted, 1e-12));

    let passed = checks.iter().all(|c| c.passed);
    Ok(BatteryReport {
        l: mp.l,
        n: mp.n,
        b: mp.b,
        alpha: wp.alpha,
        beta: wp.beta,
        states: ns,
        checks,
        diagnostics,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> BatteryOptions {
        BatteryOptions { sampler_draws: 20_000, kmc_replicas: 2000, relax_multiple: 20.0, seed: 3 }
    }

    #[test]
    fn small_systems_pass() {
        for &(l, n, b, alpha, beta) in &[(2usize, 4usize, 3.0, 1.0, 1usize), (3, 6, 4.0, 1.0, 1)] {
            let mp = ModelParams::new(l, n, b).unwrap();
            let wp = WellPartition::explicit(alpha, beta, beta).unwrap();
            let r = cross_validate(&mp, &wp, &quick(), Execution::Parallel).unwrap();
            let failed: Vec<_> = r.failures().collect();
            assert!(r.passed, "{failed:?}");
        }
    }

    #[test]
    fn hitting_consistent_with_trace_rate() {
        let mp = ModelParams::new(3, 9, 3.0).unwrap();
        let wp = WellPartition::explicit(2.0, 2, 2).unwrap();
        let r = cross_validate(&mp, &wp, &quick(), Execution::Parallel).unwrap();
        assert!(r.passed);
        let d = r.diagnostics.iter().find(|c| c.name == "hitting_vs_trace_rate").unwrap();
        assert!(d.passed, "{d:?}");
    }
}
