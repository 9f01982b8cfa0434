//! Birth-death chains with birth rate 1 and death rate `g(n)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZrpError};
use crate::model::JumpRateTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BDChain {
    pub b: f64,
    /// births are suppressed at the cap, giving `nu` conditioned on `0..=cap`
    pub cap: Option<usize>,
    pub state: usize,
}

impl BDChain {
    pub fn new(b: f64, cap: Option<usize>, state: usize) -> Result<Self> {
        if cap.is_some_and(|c| state > c) {
            return Err(ZrpError::InvalidParameter(format!("state {state} above cap {cap:?}")));
        }
        Ok(Self { b, cap, state })
    }

    pub fn birth_rate(&self) -> f64 {
        if self.cap == Some(self.state) {
            0.0
        } else {
            1.0
        }
    }

    pub fn death_rate(&self) -> f64 {
        JumpRateTable::rate(self.b, self.state)
    }

    /// One transition; returns the holding time.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let (up, down) = (self.birth_rate(), self.death_rate());
        let total = up + down;
        let dt = -(1.0 - rng.random::<f64>()).ln() / total;
        if rng.random::<f64>() * total < up {
            self.state += 1;
        } else {
            self.state -= 1;
        }
        dt
    }

    /// Unnormalized stationary weights `nu[n] z_c = n^{-b}` on `0..=n_max`.
    pub fn stationary_weights(&self, n_max: usize) -> Vec<f64> {
        let top = self.cap.map_or(n_max, |c| c.min(n_max));
        (0..=top).map(|n| if n == 0 { 1.0 } else { (n as f64).powf(-self.b) }).collect()
    }
}

/// `E_x[T_y]` for `x <= y`:
/// `sum_{z=x}^{y-1} (1 / nu[z]) sum_{n<=z} nu[n]` (birth rate 1).
///
/// The inner ratio obeys `S_z = g(z) S_{z-1} + 1`, `S_0 = 1`, a sum of
/// positive terms. States above `y` are never visited before `T_y`, so a cap
/// `>= y` does not enter.
pub fn bd_expected_hitting(x: usize, y: usize, rates: &JumpRateTable, cap: Option<usize>) -> Result<f64> {
    if x > y {
        return Err(ZrpError::Domain(format!("upward hitting needs x <= y (got {x}, {y})")));
    }
    if let Some(c) = cap {
        if y > c {
            return Err(ZrpError::Domain(format!("target {y} above cap {c}")));
        }
    }
    let mut s = 1.0;
    let mut tau = 0.0;
    for z in 0..y {
        if z > 0 {
            s = rates.g(z) * s + 1.0;
        }
        if z >= x {
            tau += s;
        }
    }
    Ok(tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{mean_hitting_exact, GeneratorMatrix};
    use crate::rng;
    use crate::stats::chi2_gof;

    /// First passage to `y` from the tridiagonal system
    /// `u_z = (1 + u_{z+1} + g(z) u_{z-1}) / (1 + g(z))`, `u_y = 0`, by the Thomas algorithm.
    fn thomas_hitting(y: usize, b: f64) -> Vec<f64> {
        let n = y;
        let (mut sub, mut diag, mut sup, mut rhs) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![1.0; n]);
        for z in 0..n {
            let g = JumpRateTable::rate(b, z);
            diag[z] = 1.0 + g;
            if z > 0 {
                sub[z] = -g;
            }
            if z + 1 < n {
                sup[z] = -1.0;
            }
        }
        for z in 1..n {
            let w = sub[z] / diag[z - 1];
            diag[z] -= w * sup[z - 1];
            rhs[z] -= w * rhs[z - 1];
        }
        let mut u = vec![0.0; n];
        u[n - 1] = rhs[n - 1] / diag[n - 1];
        for z in (0..n - 1).rev() {
            u[z] = (rhs[z] - sup[z] * u[z + 1]) / diag[z];
        }
        u
    }

    #[test]
    fn trivial_cases() {
        let r = JumpRateTable::new(3.0, 10);
        assert_eq!(bd_expected_hitting(4, 4, &r, None).unwrap(), 0.0);
        assert_eq!(bd_expected_hitting(0, 1, &r, None).unwrap(), 1.0);
        assert!(bd_expected_hitting(5, 4, &r, None).is_err());
        assert!(bd_expected_hitting(0, 4, &r, Some(3)).is_err());
    }

    #[test]
    fn formula_matches_linear_solve() {
        let b = 3.0;
        let r = JumpRateTable::new(b, 64);
        let u = thomas_hitting(50, b);
        for x in [0usize, 1, 10, 49] {
            let f = bd_expected_hitting(x, 50, &r, None).unwrap();
            assert!((f - u[x]).abs() <= 1e-8 * f, "{x}: {f} vs {}", u[x]);
        }
    }

    #[test]
    fn formula_matches_generator_solve() {
        let (b, y) = (4.0, 12usize);
        let rows: Vec<Vec<(usize, f64)>> = (0..=y)
            .map(|z| {
                let mut row = vec![];
                if z > 0 {
                    row.push((z - 1, JumpRateTable::rate(b, z)));
                }
                if z < y {
                    row.push((z + 1, 1.0));
                }
                row
            })
            .collect();
        let q = GeneratorMatrix::from_rows(rows);
        let mut target = vec![false; y + 1];
        target[y] = true;
        let u = mean_hitting_exact(&q, &target).unwrap();
        let r = JumpRateTable::new(b, y);
        for x in 0..=y {
            let f = bd_expected_hitting(x, y, &r, Some(y)).unwrap();
            assert!((f - u[x]).abs() <= 1e-8 * f.max(1.0));
        }
    }

    #[test]
    fn capped_chain_law() {
        let mut c = BDChain::new(3.0, Some(4), 0).unwrap();
        let mut rng = rng::stream(12, 0);
        let w = c.stationary_weights(100);
        let z: f64 = w.iter().sum();
        let probs: Vec<f64> = w.iter().map(|v| v / z).collect();
        let mut counts = vec![0u64; 5];
        let (mut t, mut next) = (0.0, 0.0);
        while counts.iter().sum::<u64>() < 50_000 {
            let s = c.state;
            t += c.step(&mut rng);
            while next < t {
                counts[s] += 1;
                next += 3.0;
            }
            assert!(c.state <= 4);
        }
        assert!(chi2_gof(&counts, &probs, 5.0).p_value > 0.001);
    }
}
