//! Trace and restricted chains.

use super::chain::ChainSpec;
use super::linalg::DirichletSystem;
use crate::error::{Result, ZrpError};
use crate::par::Execution;

/// The chain watched only on `E`. Rates to `Delta` are redistributed by the
/// absorption law `P_zeta[T_E = T_xi]`; returns to the starting state are
/// kept as `self_rates`.
#[derive(Debug, Clone)]
pub struct TraceChain {
    pub chain: ChainSpec,
    /// original index of every trace state
    pub states: Vec<usize>,
    pub self_rates: Vec<f64>,
}

impl TraceChain {
    /// Total exit rate including the self-loop.
    pub fn total_rate(&self, k: usize) -> f64 {
        self.chain.exit_rate(k) + self.self_rates[k]
    }
}

pub fn trace_chain(chain: &ChainSpec, in_e: &[bool], exec: Execution) -> Result<TraceChain> {
    let n = chain.len();
    if !in_e.iter().any(|&v| v) {
        return Err(ZrpError::InvalidParameter("trace set is empty".into()));
    }
    let (base, states) = chain.induced(in_e);
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in states.iter().enumerate() {
        pos[i] = k;
    }
    let delta: Vec<bool> = in_e.iter().map(|v| !v).collect();
    if !delta.iter().any(|&v| v) {
        return Ok(TraceChain { self_rates: vec![0.0; states.len()], chain: base, states });
    }
    let sys = DirichletSystem::new(chain, &delta)?;
    // targets reachable in one step from Delta
    let entry: Vec<usize> = states.iter().copied().filter(|&xi| chain.row(xi).any(|(j, _)| delta[j])).collect();
    let rhs: Vec<Vec<f64>> =
        entry.iter().map(|&xi| sys.unknowns().iter().map(|&z| chain.rate(z, xi)).collect()).collect();
    let absorb = sys.solve_many(&rhs, exec)?;

    let mut extra: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); states.len()];
    for (&xi, (hit, _)) in entry.iter().zip(&absorb) {
        for (k, &eta) in states.iter().enumerate() {
            let s: f64 = chain.row(eta).filter_map(|(z, r)| sys.local(z).map(|loc| r * hit[loc].max(0.0))).sum();
            if s > 0.0 {
                *extra[k].entry(pos[xi]).or_insert(0.0) += s;
            }
        }
    }
    let mut self_rates = vec![0.0; states.len()];
    let mut edges: Vec<(usize, usize, f64)> = base.edges().collect();
    for (k, row) in extra.into_iter().enumerate() {
        for (j, r) in row {
            if j == k {
                self_rates[k] += r;
            } else {
                edges.push((k, j, r));
            }
        }
    }
    let chain = ChainSpec::new_unchecked(base.pi().to_vec(), edges)?;
    Ok(TraceChain { chain, states, self_rates })
}

/// Dynamics inside `well` with jumps out of it suppressed. Returns the
/// chain and the original indices of its states.
pub fn restricted_chain(chain: &ChainSpec, well: &[bool]) -> Result<(ChainSpec, Vec<usize>)> {
    if !well.iter().any(|&v| v) {
        return Err(ZrpError::InvalidParameter("well is empty".into()));
    }
    let (sub, kept) = chain.induced(well);
    let (parts, _) = sub.components();
    if parts > 1 {
        return Err(ZrpError::Disconnected(format!("restricted chain has {parts} components")));
    }
    Ok((sub, kept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_when_everything_is_traced() {
        let c = ChainSpec::new(vec![1.0, 2.0], [(0, 1, 2.0), (1, 0, 1.0)]).unwrap();
        let t = trace_chain(&c, &[true, true], Execution::Sequential).unwrap();
        assert_eq!(t.chain, c);
        let (r, _) = restricted_chain(&c, &[true, true]).unwrap();
        assert_eq!(r, c);
    }

    #[test]
    fn three_state_path() {
        // a - b - c with E = {a, c}
        let (rab, rba, rbc, rcb) = (2.0, 3.0, 5.0, 7.0);
        let pi = vec![1.0, rab / rba, rab / rba * rbc / rcb];
        let c = ChainSpec::new(pi, [(0, 1, rab), (1, 0, rba), (1, 2, rbc), (2, 1, rcb)]).unwrap();
        let t = trace_chain(&c, &[true, false, true], Execution::Sequential).unwrap();
        assert_relative_eq!(t.chain.rate(0, 1), rab * rbc / (rba + rbc), max_relative = 1e-14);
        assert_relative_eq!(t.self_rates[0], rab * rba / (rba + rbc), max_relative = 1e-14);
        t.chain.check_reversible(1e-12).unwrap();
        // total exit rate is preserved state by state
        assert_relative_eq!(t.total_rate(0), c.exit_rate(0), max_relative = 1e-14);
    }

    #[test]
    fn restricted_two_of_three() {
        let pi = vec![1.0, 2.0, 4.0];
        let c = ChainSpec::new(pi, [(0, 1, 2.0), (1, 0, 1.0), (1, 2, 2.0), (2, 1, 1.0)]).unwrap();
        let (r, kept) = restricted_chain(&c, &[false, true, true]).unwrap();
        assert_eq!(kept, vec![1, 2]);
        assert_eq!(r.pi(), &[2.0, 4.0]);
        assert!(r.rate(0, 1) > 0.0 && r.exit_rate(1) == 1.0);
        assert!(restricted_chain(&c, &[true, false, true]).is_err());
    }
}
