//! Dirichlet problems on a subset of a reversible chain.
//!
//! For unknowns `U` the equations `q_i x_i - sum_{j in U} r(i,j) x_j = b_i`
//! become symmetric after multiplying by `pi_i`. Small systems use a dense
//! Cholesky factorization of the unit-diagonal scaling; larger ones use
//! Jacobi-preconditioned conjugate gradients.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::chain::ChainSpec;
use crate::error::{Result, ZrpError};
use crate::par::{self, Execution};

/// Unknown count above which the iterative solver is used.
pub const DENSE_LIMIT: usize = 3000;
/// Relative residual targeted by the iterative solver.
pub const ITER_TOL: f64 = 1e-13;

enum Backend {
    Dense(Cholesky<f64, Dyn>),
    Iterative,
}

pub struct DirichletSystem<'a> {
    chain: &'a ChainSpec,
    free: Vec<usize>,
    pos: Vec<usize>,
    /// `pi_i q_i`, the diagonal of the symmetric form
    diag: Vec<f64>,
    backend: Backend,
}

impl<'a> DirichletSystem<'a> {
    /// Prepare the system whose unknowns are the states with `free[i]`.
    pub fn new(chain: &'a ChainSpec, free: &[bool]) -> Result<Self> {
        Self::with_limit(chain, free, DENSE_LIMIT)
    }

    pub fn with_limit(chain: &'a ChainSpec, free: &[bool], dense_limit: usize) -> Result<Self> {
        let n = chain.len();
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let mut pos = vec![usize::MAX; n];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        check_grounded(chain, free, &idx)?;
        let pi = chain.pi();
        let diag: Vec<f64> = idx.iter().map(|&i| pi[i] * chain.exit_rate(i)).collect();
        let backend = if idx.len() <= dense_limit {
            let m = idx.len();
            let mut a = DMatrix::<f64>::zeros(m, m);
            for (k, &i) in idx.iter().enumerate() {
                a[(k, k)] = 1.0;
                for (j, r) in chain.row(i) {
                    let l = pos[j];
                    if l != usize::MAX {
                        // symmetric form pi_i r_ij scaled to unit diagonal
                        a[(k, l)] = -pi[i] * r / (diag[k] * diag[l]).sqrt();
                    }
                }
            }
            let chol = Cholesky::new(a)
                .ok_or_else(|| ZrpError::Disconnected("Dirichlet matrix is not positive definite".into()))?;
            Backend::Dense(chol)
        } else {
            Backend::Iterative
        };
        Ok(Self { chain, free: idx, pos, diag, backend })
    }

    pub fn unknowns(&self) -> &[usize] {
        &self.free
    }

    /// Local index of chain state `i`, if it is an unknown.
    pub fn local(&self, i: usize) -> Option<usize> {
        let p = self.pos[i];
        (p != usize::MAX).then_some(p)
    }

    /// Solve for right-hand side `b` (indexed by unknown). Returns the
    /// solution and the relative residual of the unsymmetrized equations.
    pub fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, f64)> {
        let pi = self.chain.pi();
        let x = match &self.backend {
            Backend::Dense(chol) => {
                let rhs = DVector::from_iterator(
                    b.len(),
                    self.free.iter().zip(b).enumerate().map(|(k, (&i, &bi))| pi[i] * bi / self.diag[k].sqrt()),
                );
                let y = chol.solve(&rhs);
                y.iter().enumerate().map(|(k, v)| v / self.diag[k].sqrt()).collect()
            }
            Backend::Iterative => self.pcg(b)?,
        };
        let residual = self.residual(&x, b);
        Ok((x, residual))
    }

    /// Solve several right-hand sides, in parallel when enabled.
    pub fn solve_many(&self, rhs: &[Vec<f64>], exec: Execution) -> Result<Vec<(Vec<f64>, f64)>>
    where
        Self: Sync,
    {
        par::map_indexed(exec, rhs.len(), |k| self.solve(&rhs[k])).into_iter().collect()
    }

    /// `(A x)_k = q_i x_k - sum r(i,j) x_j` over unknowns.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (k, &i) in self.free.iter().enumerate() {
            let mut s = self.chain.exit_rate(i) * x[k];
            for (j, r) in self.chain.row(i) {
                let l = self.pos[j];
                if l != usize::MAX {
                    s -= r * x[l];
                }
            }
            out[k] = s;
        }
    }

    fn residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; x.len()];
        self.apply(x, &mut ax);
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        ax.iter().zip(b).map(|(a, bb)| (a - bb).abs()).fold(0.0, f64::max) / scale
    }

    fn pcg(&self, b: &[f64]) -> Result<Vec<f64>> {
        let m = b.len();
        let pi = self.chain.pi();
        // symmetric system S x = pi b with S_kl = pi_i A_kl
        let rhs: Vec<f64> = self.free.iter().zip(b).map(|(&i, &bi)| pi[i] * bi).collect();
        let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut x = vec![0.0; m];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let apply_s = |v: &[f64], out: &mut [f64]| {
            self.apply(v, out);
            for (k, &i) in self.free.iter().enumerate() {
                out[k] *= pi[i];
            }
        };
        let mut r = rhs.clone();
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(a, d)| a / d).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; m];
        let max_iter = (20 * m).max(1000);
        let mut rnorm = bnorm;
        for _ in 0..max_iter {
            apply_s(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if !(pap > 0.0) {
                return Err(ZrpError::Disconnected("Dirichlet matrix is not positive definite".into()));
            }
            let alpha = rz / pap;
            for k in 0..m {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rnorm <= ITER_TOL * bnorm {
                return Ok(x);
            }
            for k in 0..m {
                z[k] = r[k] / self.diag[k];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..m {
                p[k] = z[k] + beta * p[k];
            }
        }
        Err(ZrpError::NoConvergence { iterations: max_iter, residual: rnorm / bnorm })
    }
}

/// Every component of the free states must have a rate to a fixed state,
/// otherwise the Dirichlet problem is singular.
fn check_grounded(chain: &ChainSpec, free: &[bool], idx: &[usize]) -> Result<()> {
    let n = chain.len();
    let mut grounded = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    for &i in idx {
        if chain.row(i).any(|(j, _)| !free[j]) {
            grounded[i] = true;
            stack.push(i);
        }
    }
    while let Some(i) = stack.pop() {
        for (j, _) in chain.row(i) {
            if free[j] && !grounded[j] {
                grounded[j] = true;
                stack.push(j);
            }
        }
    }
    match idx.iter().find(|&&i| !grounded[i]) {
        Some(i) => Err(ZrpError::Disconnected(format!("state {i} cannot reach the boundary"))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> ChainSpec {
        let edges = (0..n - 1).flat_map(|i| [(i, i + 1, 1.0), (i + 1, i, 1.0)]);
        ChainSpec::new(vec![1.0; n], edges).unwrap()
    }

    #[test]
    fn dense_and_iterative_agree() {
        let c = path(60);
        let mut free = vec![true; 60];
        free[0] = false;
        free[59] = false;
        // harmonic with boundary 1 at 0 and 0 at 59: linear profile
        let mut b = vec![0.0; 58];
        b[0] = 1.0;
        let dense = DirichletSystem::with_limit(&c, &free, 1000).unwrap();
        let iter = DirichletSystem::with_limit(&c, &free, 0).unwrap();
        let (x1, r1) = dense.solve(&b).unwrap();
        let (x2, r2) = iter.solve(&b).unwrap();
        assert!(r1 < 1e-12 && r2 < 1e-10);
        for k in 0..58 {
            let exact = 1.0 - (k + 1) as f64 / 59.0;
            assert!((x1[k] - exact).abs() < 1e-12);
            assert!((x2[k] - exact).abs() < 1e-10);
        }
    }

    #[test]
    fn ungrounded_is_disconnected() {
        let c = ChainSpec::new(vec![1.0; 4], [(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)]).unwrap();
        let free = [false, true, true, true];
        assert!(matches!(DirichletSystem::new(&c, &free), Err(ZrpError::Disconnected(_))));
    }
}
