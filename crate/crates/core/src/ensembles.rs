//! Critical product measure, convolution tables and the canonical ensemble.
//!
//! Row `k` of a [`ConvolutionTable`] holds `p[k][m] = nu[S_k = m]` for
//! `0 <= m <= N`, stored as `row[m] * exp(log_scale[k])` with `max(row) = 1`
//! so that `nu[S_L = N]` stays representable at large `L`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZrpError};
use crate::model::{Configuration, JumpRateTable, ModelParams, WellPartition};
use crate::par::{self, Execution};

/// Default cap on `(L + 1) * (N + 1)` table entries.
pub const DEFAULT_BUDGET: u128 = 100_000_000;

/// Single-site law `nu[n] = 1 / (z_c n^b)`, `nu[0] = 1 / z_c`, truncated at `n_max`.
#[derive(Debug, Clone)]
pub struct CriticalMarginal {
    pub b: f64,
    pub z_c: f64,
    pmf: Vec<f64>,
    pub tail_mass: f64,
}

impl CriticalMarginal {
    pub fn new(b: f64, z_c: f64, n_max: usize) -> Self {
        let pmf: Vec<f64> = (0..=n_max).map(|n| if n == 0 { 1.0 / z_c } else { (n as f64).powf(-b) / z_c }).collect();
        let tail = crate::model::zeta_tail_sum(b, n_max + 1) / z_c;
        Self { b, z_c, pmf, tail_mass: tail }
    }

    pub fn for_model(mp: &ModelParams) -> Self {
        Self::new(mp.b, mp.z_c, mp.n)
    }

    pub fn n_max(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    #[inline]
    pub fn p(&self, n: usize) -> f64 {
        self.pmf.get(n).copied().unwrap_or(0.0)
    }

    /// `nu(eta^2)`; infinite for `b <= 3`.
    pub fn second_moment(b: f64, z_c: f64) -> f64 {
        if b <= 3.0 {
            f64::INFINITY
        } else {
            crate::model::zeta_tail_sum(b - 2.0, 1) / z_c
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvolutionTable {
    l: usize,
    n: usize,
    max_cap: Option<usize>,
    rows: Vec<Vec<f64>>,
    log_scale: Vec<f64>,
}

impl ConvolutionTable {
    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_cap(&self) -> Option<usize> {
        self.max_cap
    }

    /// Scaled row `k`; multiply by `exp(row_exponent(k))` for probabilities.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    pub fn row_exponent(&self, k: usize) -> f64 {
        self.log_scale[k]
    }

    pub fn value(&self, k: usize, m: usize) -> f64 {
        self.rows[k][m] * self.log_scale[k].exp()
    }

    pub fn log_value(&self, k: usize, m: usize) -> f64 {
        self.rows[k][m].ln() + self.log_scale[k]
    }

    /// `sum_n nu[n] p[k-1][m-n] / p[k][m]`; equals 1 up to rounding.
    pub fn conditional_normalization(&self, marginal: &CriticalMarginal, k: usize, m: usize) -> f64 {
        let prev = &self.rows[k - 1];
        let s: f64 = (0..=m).map(|j| self.site_weight(marginal, j) * prev[m - j]).sum();
        s * (self.log_scale[k - 1] - self.log_scale[k]).exp() / self.rows[k][m]
    }

    #[inline]
    fn site_weight(&self, marginal: &CriticalMarginal, j: usize) -> f64 {
        match self.max_cap {
            Some(h) if j > h => 0.0,
            _ => marginal.p(j),
        }
    }

    /// Audit export: columns `k, m, value, row_exponent`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "m", "value", "row_exponent"])?;
        for (k, row) in self.rows.iter().enumerate() {
            for (m, v) in row.iter().enumerate() {
                w.write_record([k.to_string(), m.to_string(), format!("{v:e}"), format!("{:e}", self.log_scale[k])])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `k`-fold convolutions of the (optionally capped) marginal on `[0, N]`,
/// rows `0..=L` with row 0 the point mass at 0.
pub fn build_convolution(
    l: usize,
    n: usize,
    marginal: &CriticalMarginal,
    max_cap: Option<usize>,
    budget: u128,
) -> Result<ConvolutionTable> {
    let needed = (l as u128 + 1) * (n as u128 + 1);
    if needed > budget {
        return Err(ZrpError::BudgetExceeded { needed, budget });
    }
    let top = max_cap.map_or(n, |h| h.min(n));
    let site: Vec<f64> = (0..=top).map(|j| marginal.p(j)).collect();
    let mut rows = Vec::with_capacity(l + 1);
    let mut log_scale = Vec::with_capacity(l + 1);
    let mut first = vec![0.0; n + 1];
    first[0] = 1.0;
    rows.push(first);
    log_scale.push(0.0);
    for k in 1..=l {
        let prev: &Vec<f64> = &rows[k - 1];
        let mut row = vec![0.0; n + 1];
        for (m, out) in row.iter_mut().enumerate() {
            let jmax = m.min(top);
            let mut s = 0.0;
            for j in (0..=jmax).rev() {
                s += site[j] * prev[m - j];
            }
            *out = s;
        }
        let peak = row.iter().cloned().fold(0.0f64, f64::max);
        let mut e = log_scale[k - 1];
        if peak > 0.0 {
            row.iter_mut().for_each(|v| *v /= peak);
            e += peak.ln();
        }
        rows.push(row);
        log_scale.push(e);
    }
    Ok(ConvolutionTable { l, n, max_cap, rows, log_scale })
}

/// Unconstrained table sized for the model.
pub fn model_table(mp: &ModelParams, budget: u128) -> Result<(CriticalMarginal, ConvolutionTable)> {
    let marginal = CriticalMarginal::for_model(mp);
    let table = build_convolution(mp.l, mp.n, &marginal, None, budget)?;
    Ok((marginal, table))
}

/// `log Z_{L,N} = L log z_c + log nu[S_L = N]`.
pub fn partition_log_z(mp: &ModelParams, table: &ConvolutionTable) -> Result<f64> {
    let v = table.row(mp.l)[mp.n];
    if !(v > 0.0) {
        return Err(ZrpError::ImpossibleState(format!("S_{} = {}", mp.l, mp.n)));
    }
    Ok(mp.l as f64 * mp.z_c.ln() + v.ln() + table.row_exponent(mp.l))
}

/// Relative error of the local limit approximation
/// `z_c nu[S_L = N] ~ L Ntilde^{-b}`.
pub fn local_limit_relative_error(mp: &ModelParams, budget: u128) -> Result<f64> {
    let (_, table) = model_table(mp, budget)?;
    let log_p = table.log_value(mp.l, mp.n);
    let log_pred = (mp.l as f64).ln() - mp.b * mp.n_tilde.ln() - mp.z_c.ln();
    Ok(((log_p - log_pred).exp() - 1.0).abs())
}

/// Unnormalized canonical weights `prod 1/g!(eta_x)` and the normalization.
#[derive(Debug, Clone)]
pub struct CanonicalWeights {
    rates: JumpRateTable,
    pub log_z: f64,
}

impl CanonicalWeights {
    pub fn new(mp: &ModelParams, budget: u128) -> Result<Self> {
        let (_, table) = model_table(mp, budget)?;
        Ok(Self { rates: JumpRateTable::new(mp.b, mp.n), log_z: partition_log_z(mp, &table)? })
    }

    pub fn log_weight(&self, cfg: &Configuration) -> f64 {
        -cfg.occ().iter().map(|&v| self.rates.log_gfact(v as usize)).sum::<f64>()
    }

    pub fn probability(&self, cfg: &Configuration) -> f64 {
        (self.log_weight(cfg) - self.log_z).exp()
    }
}

/// Exact sampler for the canonical measure built on an unconstrained table.
#[derive(Debug, Clone)]
pub struct CanonicalSampler {
    marginal: CriticalMarginal,
    table: ConvolutionTable,
}

impl CanonicalSampler {
    pub fn new(mp: &ModelParams, budget: u128) -> Result<Self> {
        let (marginal, table) = model_table(mp, budget)?;
        if !(table.row(mp.l)[mp.n] > 0.0) {
            return Err(ZrpError::ImpossibleState(format!("S_{} = {}", mp.l, mp.n)));
        }
        Ok(Self { marginal, table })
    }

    pub fn table(&self) -> &ConvolutionTable {
        &self.table
    }

    pub fn marginal(&self) -> &CriticalMarginal {
        &self.marginal
    }

    /// Draw site by site: `P[eta_1 = n] ∝ nu[n] p[k-1][m-n]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let l = self.table.l();
        let mut occ = vec![0u32; l];
        let mut m = self.table.n();
        let mut w = Vec::with_capacity(m + 1);
        for (i, slot) in occ.iter_mut().enumerate().take(l - 1) {
            let prev = self.table.row(l - i - 1);
            w.clear();
            w.extend((0..=m).map(|j| self.marginal.p(j) * prev[m - j]));
            let total: f64 = w.iter().sum();
            let mut u = rng.random::<f64>() * total;
            // rounding can carry u past the end; fall back to the last positive weight
            let mut pick = w.iter().rposition(|&x| x > 0.0).unwrap_or(0);
            for (j, &wj) in w.iter().enumerate() {
                if u < wj {
                    pick = j;
                    break;
                }
                u -= wj;
            }
            *slot = pick as u32;
            m -= pick;
        }
        occ[l - 1] = m as u32;
        Configuration::new(occ)
    }
}

/// Exact `mu[Delta]` split into the part below the condensate threshold and
/// the remainder (bulk excess or tied maxima).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaMass {
    pub total: f64,
    pub below_threshold: f64,
    pub bulk_excess: f64,
}

/// `mu[Delta]` from capped convolutions, consistent with `classify`:
/// a configuration lies in a well iff its maximum is unique, at least the
/// threshold, and every other site is at most `beta`.
pub fn delta_mass_exact(mp: &ModelParams, wp: &WellPartition, exec: Execution, budget: u128) -> Result<DeltaMass> {
    let (l, n) = (mp.l, mp.n);
    let marginal = CriticalMarginal::for_model(mp);
    let full = build_convolution(l, n, &marginal, None, budget)?;
    let z = full.row(l)[n];
    if !(z > 0.0) {
        return Err(ZrpError::ImpossibleState(format!("S_{l} = {n}")));
    }
    let ez = full.row_exponent(l);
    let t = wp.threshold_int(mp);
    let beta = wp.beta;

    if l == 1 {
        let inside = n >= t;
        let v = if inside { 0.0 } else { 1.0 };
        return Ok(DeltaMass { total: v, below_threshold: v, bulk_excess: 0.0 });
    }

    // sum over the condensate value k of L nu[k] p_h[L-1][N-k] / p[L][N]
    let ratio = |tab: &ConvolutionTable, k: usize| -> f64 {
        l as f64 * marginal.p(k) * tab.row(l - 1)[n - k] * (tab.row_exponent(l - 1) - ez).exp() / z
    };

    let capped = |h: usize| -> Result<ConvolutionTable> {
        build_convolution(l, n, &marginal, if h >= n { None } else { Some(h) }, budget)
    };

    let bulk = capped(beta)?;
    let lo = t.max(beta + 1);
    let mut good: f64 = (lo..=n).map(|k| ratio(&bulk, k)).sum();
    if t <= beta {
        // unique maximum k in [t, beta]: the others are at most k - 1
        let hi = beta.min(n);
        let ks: Vec<usize> = (t.max(1)..=hi).collect();
        let parts = par::map_indexed(exec, ks.len(), |i| {
            let k = ks[i];
            capped(k - 1).map(|tab| ratio(&tab, k))
        });
        for p in parts {
            good += p?;
        }
    }

    let below_threshold = if t == 0 {
        0.0
    } else if t > n {
        1.0
    } else {
        let tab = capped(t - 1)?;
        tab.row(l)[n] * (tab.row_exponent(l) - ez).exp() / z
    };
    let total = (1.0 - good).max(0.0);
    Ok(DeltaMass { total, below_threshold, bulk_excess: (total - below_threshold).max(0.0) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailDeviation {
    /// `mu_{L,N}[sum_A (eta_x - rho_c) <= -m]`
    pub canonical: f64,
    /// the same event under the product measure
    pub grand_canonical: f64,
    /// `exp(-m^2 / (v |A|))`, `v = 2 nu(eta^2)`
    pub chernoff: f64,
}

pub fn tail_deviation_exact(a_size: usize, m: f64, mp: &ModelParams, budget: u128) -> Result<TailDeviation> {
    let (l, n) = (mp.l, mp.n);
    if a_size == 0 || a_size >= l {
        return Err(ZrpError::InvalidParameter(format!("|A| = {a_size} must lie in 1..L")));
    }
    let (_, table) = model_table(mp, budget)?;
    let cut = mp.rho_c * a_size as f64 - m;
    let v = 2.0 * CriticalMarginal::second_moment(mp.b, mp.z_c);
    let chernoff = if v.is_finite() { (-m * m / (v * a_size as f64)).exp() } else { 1.0 };
    if cut < 0.0 {
        return Ok(TailDeviation { canonical: 0.0, grand_canonical: 0.0, chernoff });
    }
    let kmax = (cut.floor() as usize).min(n);
    let ra = table.row(a_size);
    let rb = table.row(l - a_size);
    let z = table.row(l)[n];
    let scale = (table.row_exponent(a_size) + table.row_exponent(l - a_size) - table.row_exponent(l)).exp();
    let canonical = (0..=kmax).map(|k| ra[k] * rb[n - k]).sum::<f64>() * scale / z;
    let grand_canonical = ra[..=kmax].iter().sum::<f64>() * table.row_exponent(a_size).exp();
    Ok(TailDeviation { canonical, grand_canonical, chernoff })
}
