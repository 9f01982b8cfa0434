//! Brute-force reference for small systems: enumeration, generator,
//! stationary law and hitting times by dense or iterative linear algebra.

mod battery;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::ensembles::CanonicalWeights;
use crate::error::{Result, ZrpError};
use crate::model::{classify, Configuration, JumpRateTable, ModelParams, WellClass, WellPartition};
use crate::potential::chain::ChainSpec;

pub use battery::{cross_validate, BatteryOptions, BatteryReport, Check, Gate};

/// Default cap on enumerated states.
pub const ENUM_BUDGET: u128 = 500_000;
/// Dense solves up to this many states.
pub const DENSE_LIMIT: usize = 3000;

/// `C(n + l - 1, l - 1)`, or `None` on overflow.
pub fn state_count(l: usize, n: usize) -> Option<u128> {
    if l == 0 {
        return Some(0);
    }
    let k = (l - 1) as u128;
    let mut c: u128 = 1;
    for i in 1..=k {
        c = c.checked_mul(n as u128 + i)? / i;
    }
    Some(c)
}

#[derive(Debug, Clone)]
pub struct StateEnumeration {
    pub l: usize,
    pub n: usize,
    states: Vec<Configuration>,
    index: HashMap<Vec<u32>, usize>,
}

impl StateEnumeration {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Configuration] {
        &self.states
    }

    pub fn config(&self, i: usize) -> &Configuration {
        &self.states[i]
    }

    pub fn index_of(&self, cfg: &Configuration) -> Option<usize> {
        self.index.get(cfg.occ()).copied()
    }
}

/// All compositions of `n` into `l` parts, largest first coordinate first.
pub fn enumerate(l: usize, n: usize, budget: u128) -> Result<StateEnumeration> {
    if l == 0 {
        return Err(ZrpError::InvalidParameter("L must be positive".into()));
    }
    let count = state_count(l, n).unwrap_or(u128::MAX);
    if count > budget {
        return Err(ZrpError::BudgetExceeded { needed: count, budget });
    }
    let mut states = Vec::with_capacity(count as usize);
    let mut occ = vec![0u32; l];
    occ[0] = n as u32;
    loop {
        states.push(Configuration::new(occ.clone()));
        // rightmost non-last site with a particle gives one to its right
        let Some(i) = (0..l - 1).rev().find(|&i| occ[i] > 0) else { break };
        let rest: u32 = occ[i + 1..].iter().sum();
        occ[i] -= 1;
        occ[i + 1..].iter_mut().for_each(|v| *v = 0);
        occ[i + 1] = rest + 1;
    }
    let index = states.iter().enumerate().map(|(i, c)| (c.occ().to_vec(), i)).collect();
    Ok(StateEnumeration { l, n, states, index })
}

/// Off-diagonal generator entries by row; the diagonal is minus the row sum.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl GeneratorMatrix {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        Self { rows }
    }

    /// ZRP generator: `Q[eta, eta^{x, x +- 1}] = g(eta_x) / 2`.
    pub fn zero_range(states: &StateEnumeration, b: f64) -> Self {
        let rates = JumpRateTable::new(b, states.n);
        let rows = states
            .states()
            .iter()
            .map(|cfg| {
                let mut row: Vec<(usize, f64)> = Vec::new();
                if cfg.len() < 2 {
                    return row;
                }
                for x in 0..cfg.len() {
                    let k = cfg.get(x);
                    if k == 0 {
                        continue;
                    }
                    for dir in [-1i8, 1] {
                        let y = cfg.neighbour(x, dir);
                        let j = states.index_of(&cfg.moved(x, y)).expect("move stays in state space");
                        match row.iter_mut().find(|(t, _)| *t == j) {
                            Some(e) => e.1 += rates.g(k) / 2.0,
                            None => row.push((j, rates.g(k) / 2.0)),
                        }
                    }
                }
                row.sort_by_key(|e| e.0);
                row
            })
            .collect();
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        -self.rows[i].iter().map(|e| e.1).sum::<f64>()
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    /// Multiply the rate `i -> j` by `factor` (fault injection).
    pub fn scale_rate(&mut self, i: usize, j: usize, factor: f64) {
        if let Some(e) = self.rows[i].iter_mut().find(|e| e.0 == j) {
            e.1 *= factor;
        }
    }

    /// Largest absolute row sum including the diagonal.
    pub fn row_sum_residual(&self) -> f64 {
        (0..self.len())
            .map(|i| (self.diagonal(i) + self.rows[i].iter().map(|e| e.1).sum::<f64>()).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut q = DMatrix::zeros(n, n);
        for i in 0..n {
            q[(i, i)] = self.diagonal(i);
            for &(j, r) in &self.rows[i] {
                q[(i, j)] += r;
            }
        }
        q
    }

    pub fn to_chain(&self, pi: Vec<f64>) -> Result<ChainSpec> {
        let edges = self.rows.iter().enumerate().flat_map(|(i, row)| row.iter().map(move |&(j, r)| (i, j, r)));
        ChainSpec::new(pi, edges)
    }

    /// Strong connectivity by forward and backward search from state 0.
    pub fn is_irreducible(&self) -> bool {
        let n = self.len();
        if n == 0 {
            return false;
        }
        let mut back: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, r) in row {
                if r > 0.0 {
                    back[j].push(i);
                }
            }
        }
        let reach = |adj: &dyn Fn(usize) -> Vec<usize>| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in adj(i) {
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(&|i| self.rows[i].iter().filter(|e| e.1 > 0.0).map(|e| e.0).collect()) && reach(&|i| back[i].clone())
    }
}

/// Stationary law: null vector of `Q^T` normalized to a probability.
pub fn stationary_exact(q: &GeneratorMatrix) -> Result<Vec<f64>> {
    let n = q.len();
    if !q.is_irreducible() {
        return Err(ZrpError::Disconnected("generator is not irreducible".into()));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    if n <= DENSE_LIMIT {
        let mut a = q.to_dense().transpose();
        // replace the last balance equation by the normalization
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(n);
        rhs[n - 1] = 1.0;
        let x = a.lu().solve(&rhs).ok_or_else(|| ZrpError::Disconnected("singular balance system".into()))?;
        return Ok(x.iter().copied().collect());
    }
    stationary_gauss_seidel(q)
}

fn stationary_gauss_seidel(q: &GeneratorMatrix) -> Result<Vec<f64>> {
    let n = q.len();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, r) in q.row(i) {
            incoming[j].push((i, r));
        }
    }
    let mut x = vec![1.0 / n as f64; n];
    let max_iter = 100_000;
    for it in 0..max_iter {
        let mut change = 0.0f64;
        for j in 0..n {
            let inflow: f64 = incoming[j].iter().map(|&(i, r)| x[i] * r).sum();
            let v = inflow / -q.diagonal(j);
            change = change.max((v - x[j]).abs());
            x[j] = v;
        }
        let s: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v /= s);
        if change / s < 1e-15 && it > 2 {
            return Ok(x);
        }
    }
    Err(ZrpError::NoConvergence { iterations: max_iter, residual: f64::NAN })
}

/// `max_j |(pi^T Q)_j|`.
pub fn balance_residual(q: &GeneratorMatrix, pi: &[f64]) -> f64 {
    let mut out: Vec<f64> = (0..q.len()).map(|i| pi[i] * q.diagonal(i)).collect();
    for (i, &p) in pi.iter().enumerate().take(q.len()) {
        for &(j, r) in q.row(i) {
            out[j] += p * r;
        }
    }
    out.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Expected hitting times of `target`: `(Q u) = -1` off the target, `u = 0` on it.
pub fn mean_hitting_exact(q: &GeneratorMatrix, target: &[bool]) -> Result<Vec<f64>> {
    let n = q.len();
    if !target.iter().any(|&t| t) {
        return Err(ZrpError::InvalidParameter("empty target".into()));
    }
    let free: Vec<usize> = (0..n).filter(|&i| !target[i]).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        pos[i] = k;
    }
    // every free state must reach the target
    let mut reach = target.to_vec();
    loop {
        let mut grew = false;
        for &i in &free {
            if !reach[i] && q.row(i).iter().any(|&(j, r)| r > 0.0 && reach[j]) {
                reach[i] = true;
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    if let Some(i) = free.iter().find(|&&i| !reach[i]) {
        return Err(ZrpError::Disconnected(format!("target unreachable from state {i}")));
    }
    let m = free.len();
    let mut u = vec![0.0; n];
    if m == 0 {
        return Ok(u);
    }
    let sol: Vec<f64> = if m <= DENSE_LIMIT {
        let mut a = DMatrix::<f64>::zeros(m, m);
        for (k, &i) in free.iter().enumerate() {
            a[(k, k)] = -q.diagonal(i);
            for &(j, r) in q.row(i) {
                if pos[j] != usize::MAX {
                    a[(k, pos[j])] -= r;
                }
            }
        }
        let x = a
            .lu()
            .solve(&DVector::from_element(m, 1.0))
            .ok_or_else(|| ZrpError::Disconnected("singular hitting system".into()))?;
        x.iter().copied().collect()
    } else {
        let mut x = vec![0.0; m];
        let max_iter = 1_000_000;
        let mut converged = false;
        for _ in 0..max_iter {
            let mut change = 0.0f64;
            for (k, &i) in free.iter().enumerate() {
                let s: f64 = q.row(i).iter().filter(|e| pos[e.0] != usize::MAX).map(|&(j, r)| r * x[pos[j]]).sum();
                let v = (1.0 + s) / -q.diagonal(i);
                change = change.max((v - x[k]).abs() / v.abs().max(1.0));
                x[k] = v;
            }
            if change < 1e-14 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(ZrpError::NoConvergence { iterations: max_iter, residual: f64::NAN });
        }
        x
    };
    for (k, &i) in free.iter().enumerate() {
        u[i] = sol[k];
    }
    Ok(u)
}

/// Enumerated ZRP with its generator, exact canonical law and well labels.
#[derive(Debug, Clone)]
pub struct ZrpChain {
    pub mp: ModelParams,
    pub wp: WellPartition,
    pub states: StateEnumeration,
    pub generator: GeneratorMatrix,
    /// conditioned-product canonical probabilities
    pub mu: Vec<f64>,
    pub classes: Vec<WellClass>,
    /// generator as a reversible chain with weights `mu`
    pub chain: ChainSpec,
}

impl ZrpChain {
    pub fn build(mp: &ModelParams, wp: &WellPartition, budget: u128) -> Result<Self> {
        let states = enumerate(mp.l, mp.n, budget)?;
        let generator = GeneratorMatrix::zero_range(&states, mp.b);
        let weights = CanonicalWeights::new(mp, crate::ensembles::DEFAULT_BUDGET)?;
        let mu: Vec<f64> = states.states().iter().map(|c| weights.probability(c)).collect();
        let classes = states.states().iter().map(|c| classify(c, wp, mp)).collect();
        let chain = generator.to_chain(mu.clone())?;
        Ok(Self { mp: mp.clone(), wp: wp.clone(), states, generator, mu, classes, chain })
    }

    /// Mask of the well `E^x`.
    pub fn well_mask(&self, x: usize) -> Vec<bool> {
        self.classes.iter().map(|c| *c == WellClass::Well(x)).collect()
    }

    /// Mask of the union of all wells.
    pub fn wells_mask(&self) -> Vec<bool> {
        self.classes.iter().map(|c| matches!(c, WellClass::Well(_))).collect()
    }

    pub fn well_of(&self, i: usize) -> Option<usize> {
        self.classes[i].well()
    }

    /// `mu[E^x]` for every `x`.
    pub fn well_masses(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.mp.l];
        for (c, p) in self.classes.iter().zip(&self.mu) {
            if let WellClass::Well(x) = c {
                m[*x] += p;
            }
        }
        m
    }

    /// Largest relative detailed-balance residual under `mu`.
    pub fn detailed_balance_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.generator.len() {
            for &(j, r) in self.generator.row(i) {
                let f = self.mu[i] * r;
                let g = self.mu[j] * self.generator.rate(j, i);
                worst = worst.max((f - g).abs() / f.max(g));
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn enumeration_counts_and_order() {
        let e = enumerate(2, 2, ENUM_BUDGET).unwrap();
        let got: Vec<Vec<u32>> = e.states().iter().map(|c| c.occ().to_vec()).collect();
        assert_eq!(got, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(enumerate(3, 3, ENUM_BUDGET).unwrap().len(), 10);
        assert_eq!(enumerate(5, 10, ENUM_BUDGET).unwrap().len(), 1001);
        for (l, n) in [(1, 5), (4, 0), (6, 7), (3, 12)] {
            let e = enumerate(l, n, ENUM_BUDGET).unwrap();
            assert_eq!(e.len() as u128, state_count(l, n).unwrap());
            for (i, c) in e.states().iter().enumerate() {
                assert_eq!(e.index_of(c), Some(i));
                assert_eq!(c.total(), n as u64);
            }
        }
        assert!(matches!(enumerate(30, 60, ENUM_BUDGET), Err(ZrpError::BudgetExceeded { .. })));
    }

    #[test]
    fn stationary_two_sites() {
        let e = enumerate(2, 2, ENUM_BUDGET).unwrap();
        let q = GeneratorMatrix::zero_range(&e, 3.0);
        assert!(q.row_sum_residual() < 1e-12);
        let pi = stationary_exact(&q).unwrap();
        let w = [1.0 / 8.0, 1.0, 1.0 / 8.0];
        let s: f64 = w.iter().sum();
        for (p, w) in pi.iter().zip(w) {
            assert_relative_eq!(*p, w / s, epsilon = 1e-14);
        }
    }

    #[test]
    fn gauss_seidel_matches_dense() {
        let e = enumerate(4, 6, ENUM_BUDGET).unwrap();
        let q = GeneratorMatrix::zero_range(&e, 3.0);
        let a = stationary_exact(&q).unwrap();
        let b = stationary_gauss_seidel(&q).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(balance_residual(&q, &a) < 1e-12);
    }

    #[test]
    fn hitting_two_state() {
        let (a, b) = (0.7, 2.0);
        let q = GeneratorMatrix::from_rows(vec![vec![(1, a)], vec![(0, b)]]);
        let u = mean_hitting_exact(&q, &[false, true]).unwrap();
        assert_relative_eq!(u[0], 1.0 / a, epsilon = 1e-14);
        assert_eq!(u[1], 0.0);
    }

    #[test]
    fn unreachable_target() {
        let q = GeneratorMatrix::from_rows(vec![vec![(1, 1.0)], vec![(0, 1.0)], vec![]]);
        assert!(mean_hitting_exact(&q, &[false, false, true]).is_err());
    }

    #[test]
    fn zrp_chain_is_reversible_and_uniform_over_wells() {
        let mp = ModelParams::new(3, 9, 4.0).unwrap();
        let wp = WellPartition::explicit(2.0, 2, 2).unwrap();
        let z = ZrpChain::build(&mp, &wp, ENUM_BUDGET).unwrap();
        assert!(z.detailed_balance_residual() < 1e-12);
        let m = z.well_masses();
        assert!(m.iter().all(|&v| (v - m[0]).abs() < 1e-12 && v > 0.0));
        let s: f64 = z.mu.iter().sum();
        assert_relative_eq!(s, 1.0, epsilon = 1e-10);
    }
}
