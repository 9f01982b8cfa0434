//! Averaged trace rates between wells and the rate-capacity identity.

use serde::{Deserialize, Serialize};

use super::capacity::generic_capacity;
use super::linalg::DirichletSystem;
use super::trace::TraceChain;
use crate::error::{Result, ZrpError};
use crate::oracle::ZrpChain;
use crate::par::{self, Execution};

/// Stationary flows of the trace process between wells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WellRates {
    pub l: usize,
    /// `mu[E^x]`
    pub well_mass: Vec<f64>,
    /// `mu[E]`
    pub wells_total: f64,
    /// `flow[x][y] = sum_{eta in E^x} mu(eta) r^E(eta, E^y)`
    pub flow: Vec<Vec<f64>>,
    /// full-process `cap(E^x, E \ E^x)` under `mu`
    pub cap_single: Vec<f64>,
    /// worst relative residual of the Dirichlet solves
    pub residual: f64,
}

impl WellRates {
    /// `r^Lambda(z)` computed from well `x`; entry 0 holds the self-rate.
    pub fn r_lambda_from(&self, x: usize) -> Vec<f64> {
        (0..self.l).map(|z| self.flow[x][(x + z) % self.l] / self.well_mass[x]).collect()
    }

    /// `r^Lambda(z)` for `z = 0..L`, from well 0; entry 0 is the self-rate.
    pub fn r_lambda(&self) -> Vec<f64> {
        self.r_lambda_from(0)
    }

    /// Largest relative difference between the rates seen from any well and from well 0.
    pub fn translation_defect(&self) -> f64 {
        let base = self.r_lambda();
        (1..self.l)
            .flat_map(|x| {
                let r = self.r_lambda_from(x);
                let base = &base;
                (1..self.l).map(move |z| (r[z] - base[z]).abs() / base[z].abs().max(f64::MIN_POSITIVE))
            })
            .fold(0.0, f64::max)
    }
}

fn check_wells(zc: &ZrpChain) -> Result<()> {
    let mass = zc.well_masses();
    if let Some(x) = mass.iter().position(|&m| m == 0.0) {
        return Err(ZrpError::InvalidParameter(format!("well {x} is empty")));
    }
    Ok(())
}

/// Equilibrium potentials `h_A` on `Delta` for boundary data 1 on `E^A`
/// and 0 on the remaining wells, one per entry of `sets`.
fn well_potentials(zc: &ZrpChain, sets: &[Vec<usize>], exec: Execution) -> Result<(Vec<Vec<f64>>, f64)> {
    let chain = &zc.chain;
    let n = chain.len();
    let delta: Vec<bool> = zc.classes.iter().map(|c| c.well().is_none()).collect();
    let mut out = Vec::with_capacity(sets.len());
    let mut worst = 0.0f64;
    let boundary = |set: &[usize]| -> Vec<f64> {
        (0..n)
            .map(|i| match zc.well_of(i) {
                Some(x) if set.contains(&x) => 1.0,
                _ => 0.0,
            })
            .collect()
    };
    if !delta.iter().any(|&d| d) {
        return Ok((sets.iter().map(|s| boundary(s)).collect(), 0.0));
    }
    let sys = DirichletSystem::new(chain, &delta)?;
    let rhs: Vec<Vec<f64>> = sets
        .iter()
        .map(|s| {
            let bnd = boundary(s);
            sys.unknowns().iter().map(|&i| chain.row(i).map(|(j, r)| r * bnd[j]).sum()).collect()
        })
        .collect();
    let sols = sys.solve_many(&rhs, exec)?;
    for (s, (x, res)) in sets.iter().zip(sols) {
        let mut h = boundary(s);
        for (&i, v) in sys.unknowns().iter().zip(x) {
            h[i] = v;
        }
        worst = worst.max(res);
        out.push(h);
    }
    Ok((out, worst))
}

/// `cap(E^A, E \ E^A)` under `mu` from an extended potential `h`.
fn cap_from_potential(zc: &ZrpChain, set: &[usize], h: &[f64]) -> f64 {
    (0..zc.chain.len())
        .filter(|&i| zc.well_of(i).is_some_and(|x| set.contains(&x)))
        .map(|i| zc.mu[i] * zc.chain.row(i).map(|(j, r)| r * (1.0 - h[j])).sum::<f64>())
        .sum()
}

/// Exact `r^Lambda` and single-well capacities from `L` Dirichlet solves on `Delta`.
pub fn r_lambda_exact(zc: &ZrpChain, exec: Execution) -> Result<WellRates> {
    check_wells(zc)?;
    let l = zc.mp.l;
    let sets: Vec<Vec<usize>> = (0..l).map(|y| vec![y]).collect();
    let (hs, residual) = well_potentials(zc, &sets, exec)?;
    let well_mass = zc.well_masses();
    let mut flow = vec![vec![0.0; l]; l];
    for i in 0..zc.chain.len() {
        let Some(x) = zc.well_of(i) else { continue };
        for (y, h) in hs.iter().enumerate() {
            // the potential is 1 on E^y itself, so this counts direct jumps too
            let s: f64 = zc.chain.row(i).map(|(j, r)| r * h[j]).sum();
            flow[x][y] += zc.mu[i] * s;
        }
    }
    let cap_single = (0..l).map(|y| cap_from_potential(zc, &sets[y], &hs[y])).collect();
    Ok(WellRates { l, wells_total: well_mass.iter().sum(), well_mass, flow, cap_single, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub x: usize,
    pub y: usize,
    /// `mu^E[E^x] r^Lambda(y - x)`
    pub lhs: f64,
    /// `(cap^E(x) + cap^E(y) - cap^E({x, y})) / 2`
    pub rhs: f64,
}

impl IdentityRow {
    pub fn abs_err(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

/// Both sides of the rate-capacity identity for every ordered pair of
/// distinct wells; trace capacities are full capacities over `mu[E]`.
pub fn rate_capacity_identity(zc: &ZrpChain, rates: &WellRates, exec: Execution) -> Result<Vec<IdentityRow>> {
    let l = zc.mp.l;
    let pairs: Vec<(usize, usize)> = (0..l).flat_map(|x| (x + 1..l).map(move |y| (x, y))).collect();
    let sets: Vec<Vec<usize>> = pairs.iter().map(|&(x, y)| vec![x, y]).collect();
    let cap_pair: Vec<f64> = if l > 2 {
        let (hs, _) = well_potentials(zc, &sets, exec)?;
        par::map_indexed(exec, sets.len(), |k| cap_from_potential(zc, &sets[k], &hs[k]))
    } else {
        // E \ E^{0,1} is empty: the capacity vanishes
        vec![0.0; sets.len()]
    };
    let total = rates.wells_total;
    let r = rates.r_lambda();
    let mut rows = Vec::new();
    for (k, &(x, y)) in pairs.iter().enumerate() {
        let cap_x = rates.cap_single[x] / total;
        let cap_y = rates.cap_single[y] / total;
        let cap_xy = cap_pair[k] / total;
        let rhs = 0.5 * (cap_x + cap_y - cap_xy);
        for (a, b) in [(x, y), (y, x)] {
            let z = (b + l - a) % l;
            let lhs = rates.well_mass[a] / total * r[z];
            rows.push(IdentityRow { x: a, y: b, lhs, rhs });
        }
    }
    Ok(rows)
}

/// Flows `sum_{eta in E^x} pi^E(eta) r^E(eta, E^y)` read off an explicit trace chain.
pub fn trace_flows(zc: &ZrpChain, trace: &TraceChain) -> Vec<Vec<f64>> {
    let l = zc.mp.l;
    let total: f64 = trace.chain.pi().iter().sum();
    let mut flow = vec![vec![0.0; l]; l];
    for (k, &i) in trace.states.iter().enumerate() {
        let x = zc.well_of(i).expect("trace states lie in wells");
        let p = trace.chain.pi()[k] / total;
        flow[x][x] += p * trace.self_rates[k];
        for (j, r) in trace.chain.row(k) {
            let y = zc.well_of(trace.states[j]).expect("trace states lie in wells");
            flow[x][y] += p * r;
        }
    }
    flow
}

/// `cap^E(E^x, E \ E^x)` computed directly on the normalized trace chain.
pub fn trace_capacities(zc: &ZrpChain, trace: &TraceChain, exec: Execution) -> Result<Vec<f64>> {
    let chain = trace.chain.normalized();
    let l = zc.mp.l;
    let labels: Vec<usize> = trace.states.iter().map(|&i| zc.well_of(i).expect("in a well")).collect();
    par::map_indexed(exec, l, |x| {
        let a: Vec<usize> = (0..labels.len()).filter(|&k| labels[k] == x).collect();
        let b: Vec<usize> = (0..labels.len()).filter(|&k| labels[k] != x).collect();
        generic_capacity(&chain, &a, &b).map(|c| c.cap)
    })
    .into_iter()
    .collect()
}
