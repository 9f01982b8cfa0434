//! Capacities, equilibrium potentials and Dirichlet forms.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::chain::ChainSpec;
use super::linalg::DirichletSystem;
use crate::error::{Result, ZrpError};
use crate::rng;

/// Capacity of the nearest-neighbour walk on the ring (see [`ring_chain`]) between `x` and `y`: `1 / (|y - x| (L - |y - x|))`.
pub fn ring_capacity(l: usize, x: usize, y: usize) -> Result<f64> {
    if x % l == y % l {
        return Err(ZrpError::Domain(format!("ring capacity needs x != y (got {x}, {y})")));
    }
    let d = (x as i64 - y as i64).unsigned_abs() as usize % l;
    Ok(1.0 / (d as f64 * (l - d) as f64))
}

/// Nearest-neighbour walk on the ring with `rate` to each side and uniform
/// weights `1/L`. With `rate = 1` its capacities are [`ring_capacity`].
pub fn ring_chain(l: usize, rate: f64) -> ChainSpec {
    let edges = (0..l).flat_map(|i| [(i, (i + 1) % l, rate), (i, (i + l - 1) % l, rate)]);
    ChainSpec::new(vec![1.0 / l as f64; l], edges).expect("ring is reversible")
}

/// Equilibrium potential between 0 and `y` on the ring, at `z`.
pub fn ring_harmonic(l: usize, y: usize, z: usize) -> Result<f64> {
    if y == 0 || y >= l || z >= l {
        return Err(ZrpError::Domain(format!("ring_harmonic(L={l}, y={y}, z={z})")));
    }
    let (y, z) = (y as f64, z as f64);
    Ok(if z < y { 1.0 - z / y } else { (z - y) / (l as f64 - y) })
}

/// `1/2 sum pi(i) r(i,j) (f(j) - f(i))^2`.
pub fn dirichlet_form(chain: &ChainSpec, f: &[f64]) -> f64 {
    let pi = chain.pi();
    0.5 * chain.edges().map(|(i, j, r)| pi[i] * r * (f[j] - f[i]).powi(2)).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub cap: f64,
    /// equilibrium potential: 1 on A, 0 on B, harmonic elsewhere
    pub h: Vec<f64>,
    pub residual: f64,
    /// `D(h)`, equal to `cap` up to solver error
    pub dirichlet: f64,
    /// smallest `D(F) - cap` over the random feasible trial functions
    pub variational_margin: f64,
}

/// Number of random feasible functions tried against the minimizer.
pub const VARIATIONAL_TRIALS: usize = 20;

fn as_mask(n: usize, set: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &i in set {
        m[i] = true;
    }
    m
}

pub fn generic_capacity(chain: &ChainSpec, a: &[usize], b: &[usize]) -> Result<CapacityResult> {
    let n = chain.len();
    if a.is_empty() || b.is_empty() {
        return Err(ZrpError::InvalidParameter("capacity needs non-empty sets".into()));
    }
    let in_a = as_mask(n, a);
    let in_b = as_mask(n, b);
    if a.iter().any(|&i| in_b[i]) {
        return Err(ZrpError::InvalidParameter("capacity sets must be disjoint".into()));
    }
    let free: Vec<bool> = (0..n).map(|i| !in_a[i] && !in_b[i]).collect();
    let mut h: Vec<f64> = (0..n).map(|i| if in_a[i] { 1.0 } else { 0.0 }).collect();
    let mut residual = 0.0;
    if free.iter().any(|&f| f) {
        let sys = DirichletSystem::new(chain, &free)?;
        let rhs: Vec<f64> =
            sys.unknowns().iter().map(|&i| chain.row(i).filter(|&(j, _)| in_a[j]).map(|(_, r)| r).sum()).collect();
        let (x, res) = sys.solve(&rhs)?;
        residual = res;
        for (&i, v) in sys.unknowns().iter().zip(x) {
            h[i] = v;
        }
    }
    // cap = sum_{i in A} pi_i sum_j r(i,j) (1 - h_j)
    let pi = chain.pi();
    let cap: f64 = a.iter().map(|&i| pi[i] * chain.row(i).map(|(j, r)| r * (1.0 - h[j])).sum::<f64>()).sum();
    let dirichlet = dirichlet_form(chain, &h);
    let variational_margin = variational_check(chain, &h, &free, cap, VARIATIONAL_TRIALS, 0);
    Ok(CapacityResult { cap, h, residual, dirichlet, variational_margin })
}

/// `min D(F) - cap` over `trials` random feasible `F`: half are perturbations
/// of `h`, half are uniform on the free states.
pub fn variational_check(chain: &ChainSpec, h: &[f64], free: &[bool], cap: f64, trials: usize, seed: u64) -> f64 {
    let mut rng = rng::stream(seed, 0x7a11);
    let mut margin = f64::INFINITY;
    for t in 0..trials {
        let scale = 10f64.powi(-(t as i32 % 6));
        let f: Vec<f64> = h
            .iter()
            .zip(free)
            .map(|(&v, &fr)| {
                if !fr {
                    v
                } else if t % 2 == 0 {
                    v + scale * (rng.random::<f64>() - 0.5)
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        margin = margin.min(dirichlet_form(chain, &f) - cap);
    }
    margin
}
