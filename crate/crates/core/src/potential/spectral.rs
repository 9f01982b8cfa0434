//! Spectral gap of a reversible generator.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::chain::ChainSpec;
use crate::error::{Result, ZrpError};

/// States above which the Lanczos iteration replaces the dense eigensolve.
pub const DENSE_EIGEN_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMethod {
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub gap: f64,
    pub method: GapMethod,
    pub iterations: usize,
}

/// Second-smallest eigenvalue of `-Q`, from the symmetrization
/// `S_ij = sqrt(pi_i / pi_j) r(i,j)`.
pub fn spectral_gap(chain: &ChainSpec) -> Result<GapResult> {
    spectral_gap_with(chain, DENSE_EIGEN_LIMIT, 1e-10)
}

pub fn spectral_gap_with(chain: &ChainSpec, dense_limit: usize, tol: f64) -> Result<GapResult> {
    let n = chain.len();
    if n < 2 {
        return Err(ZrpError::InvalidParameter("gap needs at least two states".into()));
    }
    if !chain.is_irreducible() {
        return Err(ZrpError::Disconnected("chain is reducible".into()));
    }
    if n <= dense_limit {
        let m = symmetric_generator(chain);
        let eig = SymmetricEigen::new(m);
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        return Ok(GapResult { gap: ev[1], method: GapMethod::Dense, iterations: 0 });
    }
    lanczos_gap(chain, tol)
}

fn symmetric_generator(chain: &ChainSpec) -> DMatrix<f64> {
    let n = chain.len();
    let pi = chain.pi();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = chain.exit_rate(i);
        for (j, r) in chain.row(i) {
            let v = -r * (pi[i] / pi[j]).sqrt();
            // average the two triangles to remove rounding asymmetry
            m[(i, j)] += 0.5 * v;
            m[(j, i)] += 0.5 * v;
        }
    }
    m
}

/// Lanczos on `-S` restricted to the complement of `sqrt(pi)`, with full
/// reorthogonalization.
fn lanczos_gap(chain: &ChainSpec, tol: f64) -> Result<GapResult> {
    let n = chain.len();
    let pi = chain.pi();
    let total: f64 = pi.iter().sum();
    let ground: Vec<f64> = pi.iter().map(|p| (p / total).sqrt()).collect();
    let apply = |v: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let mut s = chain.exit_rate(i) * v[i];
            for (j, r) in chain.row(i) {
                s -= r * (pi[i] / pi[j]).sqrt() * v[j];
            }
            out[i] = s;
        }
    };
    let project = |v: &mut [f64]| {
        let d: f64 = v.iter().zip(&ground).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(&ground).for_each(|(a, b)| *a -= d * b);
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 113) as f64 / 113.0).collect();
    project(&mut v);
    let nv = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= nv);

    let max_steps = n.min(800);
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut last = f64::NAN;
    for k in 0..max_steps {
        apply(&basis[k], &mut w);
        let a = dot(&w, &basis[k]);
        alphas.push(a);
        for q in &basis {
            let c = dot(&w, q);
            w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
        }
        project(&mut w);
        let b = dot(&w, &w).sqrt();

        let m = alphas.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (imin, theta) =
            eig.eigenvalues.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).expect("non-empty");
        let resid = (b * eig.eigenvectors[(m - 1, imin)]).abs();
        if resid <= tol * theta.abs().max(f64::MIN_POSITIVE) || b < 1e-14 {
            return Ok(GapResult { gap: theta, method: GapMethod::Lanczos, iterations: k + 1 });
        }
        last = resid;
        betas.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    Err(ZrpError::NoConvergence { iterations: max_steps, residual: last })
}
