//! Trace of the process on the wells, in local time.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::trajectory::TrajectoryState;
use crate::error::{Result, ZrpError};
use crate::model::{classify, Configuration, ModelParams, WellClass, WellPartition};

/// A completed stay in `well`, followed by a trace jump by `jump` (mod L).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub well: usize,
    pub dwell: f64,
    pub jump: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub l: usize,
    pub entries: Vec<TraceEntry>,
    /// well the trace occupies at the end of the run
    pub current_well: usize,
    /// local time spent in `current_well` since the last trace jump
    pub open_dwell: f64,
    pub total_delta_time: f64,
    pub elapsed: f64,
    pub events: u64,
    pub final_config: Configuration,
}

impl TraceRecord {
    /// Total local time on the wells.
    pub fn local_time(&self) -> f64 {
        self.entries.iter().map(|e| e.dwell).sum::<f64>() + self.open_dwell
    }

    /// `|local time + Delta time - elapsed|`.
    pub fn identity_defect(&self) -> f64 {
        (self.local_time() + self.total_delta_time - self.elapsed).abs()
    }

    pub fn jumps(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.jump)
    }

    pub fn delta_fraction(&self) -> f64 {
        if self.elapsed > 0.0 {
            self.total_delta_time / self.elapsed
        } else {
            0.0
        }
    }

    /// CSV with columns `local_time, well, jump`; one row per trace jump,
    /// `local_time` being the local time at which it happens.
    pub fn write_csv<W: Write>(&self, inner: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(inner);
        w.write_record(["local_time", "well", "jump"])?;
        let mut t = 0.0;
        for e in &self.entries {
            t += e.dwell;
            w.write_record([format!("{t:.17e}"), e.well.to_string(), e.jump.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// When to stop a trace run. The run always stops at real time `t_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    pub t_max: f64,
    pub max_jumps: Option<usize>,
    pub local_time_max: Option<f64>,
}

impl TraceOptions {
    pub fn until(t_max: f64) -> Self {
        Self { t_max, max_jumps: None, local_time_max: None }
    }
}

/// Well membership maintained in O(1) per move. With separating scales a
/// configuration lies in `E^x` iff `x` is the only site above `beta` and
/// holds at least the threshold.
#[derive(Debug, Clone)]
struct WellTracker {
    beta: usize,
    threshold: usize,
    above: usize,
    index_sum: usize,
}

impl WellTracker {
    fn new(cfg: &Configuration, beta: usize, threshold: usize) -> Self {
        let mut t = Self { beta, threshold, above: 0, index_sum: 0 };
        for (i, &v) in cfg.occ().iter().enumerate() {
            if v as usize > beta {
                t.above += 1;
                t.index_sum += i;
            }
        }
        t
    }

    #[inline]
    fn update(&mut self, site: usize, old: usize, new: usize) {
        match (old > self.beta, new > self.beta) {
            (false, true) => {
                self.above += 1;
                self.index_sum += site;
            }
            (true, false) => {
                self.above -= 1;
                self.index_sum -= site;
            }
            _ => {}
        }
    }

    #[inline]
    fn well(&self, cfg: &Configuration) -> Option<usize> {
        (self.above == 1 && cfg.get(self.index_sum) >= self.threshold).then_some(self.index_sum)
    }
}

/// Simulate from `init` (which must lie in a well) and record the trace.
pub fn run_trace<R: Rng + ?Sized>(
    mp: &ModelParams,
    wp: &WellPartition,
    init: &Configuration,
    opts: &TraceOptions,
    rng: &mut R,
) -> Result<TraceRecord> {
    wp.check_separating(mp)?;
    if init.len() != mp.l || init.total() != mp.n as u64 {
        return Err(ZrpError::InvalidParameter(format!(
            "initial configuration has L = {}, N = {}; expected {}, {}",
            init.len(),
            init.total(),
            mp.l,
            mp.n
        )));
    }
    let WellClass::Well(start) = classify(init, wp, mp) else {
        return Err(ZrpError::InvalidParameter("initial configuration is not in a well".into()));
    };
    let mut state = TrajectoryState::new(init.clone(), mp.b)?;
    let mut tracker = WellTracker::new(init, wp.beta, wp.threshold_int(mp));
    let mut entries = Vec::new();
    let mut current = start;
    let mut in_well = true;
    let mut open_dwell = 0.0;
    let mut local = 0.0;
    let mut delta = 0.0;
    loop {
        let mut horizon = opts.t_max;
        if in_well {
            if let Some(lmax) = opts.local_time_max {
                horizon = horizon.min(state.clock() + (lmax - local).max(0.0));
            }
        }
        let before = state.clock();
        let event = state.step_until(rng, horizon);
        let dt = state.clock() - before;
        if in_well {
            open_dwell += dt;
            local += dt;
        } else {
            delta += dt;
        }
        let Some(e) = event else { break };
        let x = e.x;
        let y = state.cfg().neighbour(x, e.dir);
        tracker.update(x, state.cfg().get(x) + 1, state.cfg().get(x));
        tracker.update(y, state.cfg().get(y) - 1, state.cfg().get(y));
        match tracker.well(state.cfg()) {
            Some(w) => {
                in_well = true;
                if w != current {
                    entries.push(TraceEntry { well: current, dwell: open_dwell, jump: (w + mp.l - current) % mp.l });
                    current = w;
                    open_dwell = 0.0;
                    if opts.max_jumps.is_some_and(|m| entries.len() >= m) {
                        break;
                    }
                }
            }
            None => in_well = false,
        }
    }
    Ok(TraceRecord {
        l: mp.l,
        entries,
        current_well: current,
        open_dwell,
        total_delta_time: delta,
        elapsed: state.clock(),
        events: state.events(),
        final_config: state.cfg().clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::observe;
    use crate::rng;
    use crate::stats::sign_test;

    fn small() -> (ModelParams, WellPartition) {
        let mp = ModelParams::new(5, 14, 3.0).unwrap();
        let wp = WellPartition::explicit(6.0, 2, 2).unwrap();
        (mp, wp)
    }

    #[test]
    fn tracker_matches_classify() {
        let (mp, wp) = small();
        let mut s = TrajectoryState::new(Configuration::condensed(5, 14, 2), mp.b).unwrap();
        let mut t = WellTracker::new(s.cfg(), wp.beta, wp.threshold_int(&mp));
        let mut rng = rng::stream(3, 0);
        for _ in 0..200_000 {
            let e = s.step(&mut rng);
            let y = s.cfg().neighbour(e.x, e.dir);
            t.update(e.x, s.cfg().get(e.x) + 1, s.cfg().get(e.x));
            t.update(y, s.cfg().get(y) - 1, s.cfg().get(y));
            assert_eq!(t.well(s.cfg()), classify(s.cfg(), &wp, &mp).well());
        }
    }

    #[test]
    fn short_run_has_no_jumps() {
        let (mp, wp) = small();
        let init = Configuration::condensed(5, 14, 1);
        let r = run_trace(&mp, &wp, &init, &TraceOptions::until(1e-3), &mut rng::stream(4, 0)).unwrap();
        assert!(r.entries.is_empty());
        assert_eq!(r.current_well, 1);
        assert!(r.identity_defect() <= 1e-9 * r.elapsed);
        assert_eq!(r.elapsed, 1e-3);
    }

    #[test]
    fn rejects_start_outside_wells() {
        let (mp, wp) = small();
        let init = Configuration::new(vec![7, 7, 0, 0, 0]);
        assert!(run_trace(&mp, &wp, &init, &TraceOptions::until(1.0), &mut rng::stream(4, 0)).is_err());
    }

    #[test]
    fn bookkeeping_and_symmetry() {
        let (mp, wp) = small();
        let init = Configuration::condensed(5, 14, 0);
        let r = run_trace(&mp, &wp, &init, &TraceOptions::until(2e5), &mut rng::stream(6, 0)).unwrap();
        assert!(r.entries.len() > 100, "{}", r.entries.len());
        assert!(r.identity_defect() <= 1e-9 * r.elapsed);
        assert!(r.entries.iter().all(|e| e.dwell > 0.0 && e.jump != 0 && e.jump < 5));
        // consecutive entries chain up
        for w in r.entries.windows(2) {
            assert_eq!((w[0].well + w[0].jump) % 5, w[1].well);
        }
        let o = observe(&r.final_config, &wp, &mp);
        if o.psi.is_some() {
            assert_eq!(o.max_location, r.current_well);
        }
        let pos = r.jumps().filter(|&z| z == 1 || z == 2).count() as u64;
        let neg = r.jumps().filter(|&z| z == 4 || z == 3).count() as u64;
        assert!(sign_test(pos, neg) > 0.01);
    }

    #[test]
    fn local_time_cap() {
        let (mp, wp) = small();
        let init = Configuration::condensed(5, 14, 0);
        let opts = TraceOptions { t_max: 1e9, max_jumps: None, local_time_max: Some(50.0) };
        let r = run_trace(&mp, &wp, &init, &opts, &mut rng::stream(8, 0)).unwrap();
        assert!((r.local_time() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn reproducible() {
        let (mp, wp) = small();
        let init = Configuration::condensed(5, 14, 0);
        let a = run_trace(&mp, &wp, &init, &TraceOptions::until(1e4), &mut rng::stream(1, 1)).unwrap();
        let b = run_trace(&mp, &wp, &init, &TraceOptions::until(1e4), &mut rng::stream(1, 1)).unwrap();
        assert_eq!(a, b);
    }
}
