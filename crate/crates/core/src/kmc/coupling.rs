//! Domination of one site's occupation by a growing family of birth-death
//! chains indexed by an m-ary tree.
//!
//! Associated chains depart jointly with the tracked site (basic coupling)
//! and receive extra arrivals at rate `1 - a_x / m` each, so every chain is
//! marginally a birth-death chain with birth rate 1 and death rate `g`. On
//! each arrival at the site the associated set is replaced by the `m`
//! children of a uniformly chosen member, which receive the particle; the
//! old members continue independently. Only chains that differ from their
//! parent are stored.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sum_tree::SumTree;
use super::trajectory::TrajectoryState;
use crate::ensembles::CanonicalSampler;
use crate::error::{Result, ZrpError};
use crate::model::{classify, Configuration, JumpRateTable, ModelParams, WellClass, WellPartition};
use crate::par::{self, Execution};
use crate::rng;
use crate::stats::{linear_fit, LinearFit};

/// What a driver event did to the tracked site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriverEvent {
    Departure,
    Arrival,
    Elsewhere,
}

/// Environment around the tracked site.
pub trait Driver {
    fn eta(&self) -> usize;
    /// `a_x = g(eta_{x-1}) / 2 + g(eta_{x+1}) / 2`
    fn arrival_rate(&self) -> f64;
    fn total_rate(&self) -> f64;
    /// Apply one event, chosen with probability proportional to its rate.
    fn fire<R: Rng + ?Sized>(&mut self, rng: &mut R, dt: f64) -> DriverEvent;
}

/// Site `x` of a simulated zero-range process.
#[derive(Debug, Clone)]
pub struct ZrpDriver {
    pub state: TrajectoryState,
    pub x: usize,
}

impl ZrpDriver {
    pub fn new(cfg: Configuration, b: f64, x: usize) -> Result<Self> {
        if x >= cfg.len() {
            return Err(ZrpError::InvalidParameter(format!("site {x} outside lattice of size {}", cfg.len())));
        }
        Ok(Self { state: TrajectoryState::new(cfg, b)?, x })
    }
}

impl Driver for ZrpDriver {
    fn eta(&self) -> usize {
        self.state.cfg().get(self.x)
    }

    fn arrival_rate(&self) -> f64 {
        let cfg = self.state.cfg();
        let left = cfg.neighbour(self.x, -1);
        let right = cfg.neighbour(self.x, 1);
        0.5 * self.state.site_rate(left) + 0.5 * self.state.site_rate(right)
    }

    fn total_rate(&self) -> f64 {
        self.state.total_rate()
    }

    fn fire<R: Rng + ?Sized>(&mut self, rng: &mut R, dt: f64) -> DriverEvent {
        let e = self.state.fire(rng, dt);
        if e.x == self.x {
            DriverEvent::Departure
        } else if self.state.cfg().neighbour(e.x, e.dir) == self.x {
            DriverEvent::Arrival
        } else {
            DriverEvent::Elsewhere
        }
    }
}

/// A site that only loses particles.
#[derive(Debug, Clone)]
pub struct IsolatedSite {
    pub eta: usize,
    pub b: f64,
}

impl Driver for IsolatedSite {
    fn eta(&self) -> usize {
        self.eta
    }

    fn arrival_rate(&self) -> f64 {
        0.0
    }

    fn total_rate(&self) -> f64 {
        JumpRateTable::rate(self.b, self.eta)
    }

    fn fire<R: Rng + ?Sized>(&mut self, _rng: &mut R, _dt: f64) -> DriverEvent {
        self.eta -= 1;
        DriverEvent::Departure
    }
}

/// Chains that are not copies of their parent, for one tracked site.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingState {
    pub m: usize,
    pub time: f64,
    pub eta: usize,
    /// values of the associated chains
    pub assoc: Vec<u32>,
    /// tree node of each associated chain, as a path of child indices
    pub assoc_nodes: Vec<Vec<u32>>,
    /// values of the independent chains
    pub independent: Vec<u32>,
    #[serde(skip)]
    indep_rates: Option<SumTree>,
}

impl CouplingState {
    fn new(m: usize, eta: usize) -> Self {
        Self {
            m,
            time: 0.0,
            eta,
            assoc: vec![eta as u32; m],
            assoc_nodes: (1..=m as u32).map(|k| vec![k]).collect(),
            independent: Vec::new(),
            indep_rates: Some(SumTree::new(&[])),
        }
    }

    /// `|C| + |I|`
    pub fn census(&self) -> usize {
        self.assoc.len() + self.independent.len()
    }

    /// The order `eta <= zeta` for every associated chain.
    pub fn ordered(&self) -> bool {
        self.assoc.iter().all(|&z| self.eta <= z as usize)
    }

    fn tree(&mut self) -> &mut SumTree {
        self.indep_rates.get_or_insert_with(|| SumTree::new(&[]))
    }
}

/// Smallest integer at least the maximal jump rate `2^b`.
pub fn branching(b: f64) -> usize {
    2f64.powf(b).ceil() as usize
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingReport {
    pub m: usize,
    pub violations: u64,
    pub events: u64,
    pub arrivals: u64,
    pub census_times: Vec<f64>,
    pub census: Vec<usize>,
    pub final_state: CouplingState,
}

/// Run the coupled process to `t_max`, recording the census at `n_grid`
/// equally spaced times. An order violation is a hard error carrying the
/// serialized state.
pub fn coupling_run<D: Driver, R: Rng + ?Sized>(
    mut driver: D,
    b: f64,
    t_max: f64,
    n_grid: usize,
    rng: &mut R,
) -> Result<CouplingReport> {
    let m = branching(b);
    let rates = JumpRateTable::new(b, 256);
    let mut st = CouplingState::new(m, driver.eta());
    let census_times: Vec<f64> = (1..=n_grid).map(|k| t_max * k as f64 / n_grid as f64).collect();
    let mut census = Vec::with_capacity(n_grid);
    let (mut events, mut arrivals) = (0u64, 0u64);
    let mut gap = vec![0.0; m];
    loop {
        let eta = driver.eta();
        let g_eta = rates.g(eta);
        let r_env = driver.total_rate();
        let r_add = (m as f64 - driver.arrival_rate()).max(0.0);
        let mut r_dep = 0.0;
        if eta <= 1 {
            for (slot, &z) in gap.iter_mut().zip(&st.assoc) {
                *slot = (rates.g(z as usize) - g_eta).max(0.0);
                r_dep += *slot;
            }
        }
        let r_ind = st.tree().total();
        let total = r_env + r_add + r_dep + r_ind;
        let dt = if total > 0.0 { -(1.0 - rng.random::<f64>()).ln() / total } else { f64::INFINITY };
        let t_next = st.time + dt;
        while census.len() < n_grid && census_times[census.len()] < t_next {
            census.push(st.census());
        }
        if t_next > t_max {
            st.time = t_max;
            break;
        }
        st.time = t_next;
        events += 1;
        let mut u = rng.random::<f64>() * total;
        if u < r_env {
            match driver.fire(rng, dt) {
                DriverEvent::Departure => {
                    for z in st.assoc.iter_mut() {
                        let p = (rates.g(*z as usize) / g_eta).min(1.0);
                        if *z > 0 && rng.random::<f64>() < p {
                            *z -= 1;
                        }
                    }
                }
                DriverEvent::Arrival => {
                    arrivals += 1;
                    let k = rng.random_range(0..m);
                    let value = st.assoc[k] + 1;
                    let parent = st.assoc_nodes[k].clone();
                    let old = std::mem::replace(&mut st.assoc, vec![value; m]);
                    st.assoc_nodes = (1..=m as u32)
                        .map(|j| {
                            let mut p = parent.clone();
                            p.push(j);
                            p
                        })
                        .collect();
                    for z in old {
                        st.independent.push(z);
                        let w = 1.0 + rates.g(z as usize);
                        st.tree().push(w);
                    }
                }
                DriverEvent::Elsewhere => {}
            }
        } else {
            u -= r_env;
            if u < r_add {
                let k = rng.random_range(0..m);
                st.assoc[k] += 1;
            } else if u - r_add < r_dep {
                let mut v = u - r_add;
                let k = gap.iter().position(|&w| {
                    if v < w {
                        true
                    } else {
                        v -= w;
                        false
                    }
                });
                let k = k.unwrap_or_else(|| gap.iter().rposition(|&w| w > 0.0).expect("positive rate"));
                st.assoc[k] -= 1;
            } else {
                let tree = st.tree();
                let i = tree.find(rng.random::<f64>() * tree.total());
                let z = st.independent[i] as usize;
                let up = rng.random::<f64>() * (1.0 + rates.g(z)) < 1.0;
                let z = if up { z + 1 } else { z - 1 };
                st.independent[i] = z as u32;
                st.tree().set(i, 1.0 + rates.g(z));
            }
        }
        st.eta = driver.eta();
        if !st.ordered() {
            let state = serde_json::to_string(&st)?;
            return Err(ZrpError::CouplingViolation { time: st.time, state });
        }
    }
    while census.len() < n_grid {
        census.push(st.census());
    }
    st.eta = driver.eta();
    Ok(CouplingReport { m, violations: 0, events, arrivals, census_times, census, final_state: st })
}

/// Many coupled trajectories on a zero-range environment started in `E^0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingEnsemble {
    pub trajectories: usize,
    pub m: usize,
    pub violations: u64,
    pub mean_events: f64,
    pub census_times: Vec<f64>,
    pub mean_census: Vec<f64>,
    pub fit: LinearFit,
    /// `m 2^b`
    pub slope_bound: f64,
}

/// Draw an initial configuration from `mu` conditioned on the wells and
/// translate its condensate to site 0.
pub fn sample_in_well0<R: Rng + ?Sized>(
    sampler: &CanonicalSampler,
    mp: &ModelParams,
    wp: &WellPartition,
    rng: &mut R,
    max_tries: usize,
) -> Result<Configuration> {
    for _ in 0..max_tries {
        let c = sampler.sample(rng);
        if let WellClass::Well(w) = classify(&c, wp, mp) {
            return Ok(c.shift((mp.l - w) % mp.l));
        }
    }
    Err(ZrpError::NoConvergence { iterations: max_tries, residual: f64::NAN })
}

/// `n_traj` trajectories; trajectory `k` tracks site `1 + k mod (L-1)` and
/// draws from its own stream.
#[allow(clippy::too_many_arguments)]
pub fn coupling_ensemble(
    mp: &ModelParams,
    wp: &WellPartition,
    n_traj: usize,
    t_max: f64,
    n_grid: usize,
    seed: u64,
    exec: Execution,
    budget: u128,
) -> Result<CouplingEnsemble> {
    if mp.l < 2 {
        return Err(ZrpError::InvalidParameter("coupling needs L >= 2".into()));
    }
    let sampler = CanonicalSampler::new(mp, budget)?;
    let runs = par::map_indexed(exec, n_traj, |k| -> Result<CouplingReport> {
        let mut rng = rng::stream(seed, k as u64);
        let cfg = sample_in_well0(&sampler, mp, wp, &mut rng, 100_000)?;
        let x = 1 + k % (mp.l - 1);
        let driver = ZrpDriver::new(cfg, mp.b, x)?;
        coupling_run(driver, mp.b, t_max, n_grid, &mut rng)
    });
    let runs: Vec<CouplingReport> = runs.into_iter().collect::<Result<_>>()?;
    let m = branching(mp.b);
    let census_times: Vec<f64> = (1..=n_grid).map(|k| t_max * k as f64 / n_grid as f64).collect();
    let mean_census: Vec<f64> =
        (0..n_grid).map(|i| runs.iter().map(|r| r.census[i] as f64).sum::<f64>() / n_traj as f64).collect();
    let fit = linear_fit(&census_times, &mean_census);
    Ok(CouplingEnsemble {
        trajectories: n_traj,
        m,
        violations: runs.iter().map(|r| r.violations).sum(),
        mean_events: runs.iter().map(|r| r.events as f64).sum::<f64>() / n_traj as f64,
        census_times,
        mean_census,
        fit,
        slope_bound: m as f64 * 2f64.powf(mp.b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn isolated_site_decreases_together() {
        let driver = IsolatedSite { eta: 6, b: 4.0 };
        let r = coupling_run(driver, 4.0, 50.0, 10, &mut rng::stream(1, 0)).unwrap();
        assert_eq!(r.m, 16);
        assert_eq!(r.violations, 0);
        assert_eq!(r.arrivals, 0);
        assert!(r.census.iter().all(|&c| c == 16));
        assert_eq!(r.final_state.eta, 0);
    }

    #[test]
    fn zrp_driver_keeps_order() {
        let cfg = Configuration::new(vec![12, 1, 0, 2, 1, 0, 1, 1]);
        for seed in 0..20 {
            let d = ZrpDriver::new(cfg.clone(), 3.0, 1 + seed as usize % 7).unwrap();
            let r = coupling_run(d, 3.0, 30.0, 6, &mut rng::stream(seed, 0)).unwrap();
            assert_eq!(r.violations, 0);
            assert_eq!(r.final_state.assoc.len(), 8);
            assert!(r.final_state.ordered());
            assert_eq!(r.final_state.census(), 8 * (1 + r.arrivals as usize));
            assert!(r.census.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn children_extend_parent_path() {
        let cfg = Configuration::new(vec![6, 2, 2, 0]);
        let d = ZrpDriver::new(cfg, 2.5, 1).unwrap();
        let r = coupling_run(d, 2.5, 20.0, 4, &mut rng::stream(3, 0)).unwrap();
        let depth = r.final_state.assoc_nodes[0].len();
        assert_eq!(depth, 1 + r.arrivals as usize);
        let prefix = &r.final_state.assoc_nodes[0][..depth - 1];
        assert!(r.final_state.assoc_nodes.iter().all(|p| &p[..depth - 1] == prefix));
    }
}
