//! Probability that the trace leaves its starting well within a local-time window.

use serde::{Deserialize, Serialize};

use super::coupling::sample_in_well0;
use super::trace::{run_trace, TraceOptions};
use crate::ensembles::CanonicalSampler;
use crate::error::Result;
use crate::model::{ModelParams, WellPartition};
use crate::par::{self, Execution};
use crate::rng;
use crate::stats::wilson_interval;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExitProbe {
    pub window: f64,
    pub trajectories: u64,
    pub successes: u64,
    pub estimate: f64,
    /// 95% Wilson interval; with no successes the upper end is the one-sided bound
    pub ci: (f64, f64),
    /// one-sided 95% upper bound, set when there are no successes
    pub upper_bound: Option<f64>,
}

impl ExitProbe {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci.1 - self.ci.0)
    }
}

/// Draw `n_traj` starts from `mu` conditioned on `E^0` and count those whose
/// trace changes well before local time `window`. Draws landing in another
/// well are translated to `E^0`, which leaves the conditioned law unchanged.
#[allow(clippy::too_many_arguments)]
pub fn exit_event_probe(
    mp: &ModelParams,
    wp: &WellPartition,
    window: f64,
    n_traj: u64,
    seed: u64,
    exec: Execution,
    budget: u128,
) -> Result<ExitProbe> {
    wp.check_separating(mp)?;
    let sampler = CanonicalSampler::new(mp, budget)?;
    let opts = TraceOptions { t_max: f64::INFINITY, max_jumps: Some(1), local_time_max: Some(window) };
    let hits = par::map_indexed(exec, n_traj as usize, |k| -> Result<bool> {
        if window <= 0.0 {
            return Ok(false);
        }
        let mut rng = rng::stream(seed, k as u64);
        let init = sample_in_well0(&sampler, mp, wp, &mut rng, 100_000)?;
        let r = run_trace(mp, wp, &init, &opts, &mut rng)?;
        Ok(!r.entries.is_empty())
    });
    let successes = hits.into_iter().collect::<Result<Vec<bool>>>()?.into_iter().filter(|&h| h).count() as u64;
    let estimate = successes as f64 / n_traj.max(1) as f64;
    let ci = wilson_interval(successes, n_traj, 1.96);
    // rule of three
    let upper_bound = (successes == 0).then(|| (3.0 / n_traj.max(1) as f64).min(1.0));
    Ok(ExitProbe { window, trajectories: n_traj, successes, estimate, ci, upper_bound })
}
