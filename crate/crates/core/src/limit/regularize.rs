//! Box regularization of the microscopic generator and its comparison with
//! the limit generator on the torus.
//!
//! With translation-invariant scaled rates `R(z) = theta_L r^Lambda(z)` the
//! generator at `x` splits exactly into a near part `L1` (targets in the
//! central box), a within-box correction `L2A`, and the box-averaged part
//! `L2B = sum_m R(V_0, V_m) (f((x + c_m)/L) - f(x/L))`.

use serde::{Deserialize, Serialize};

use super::levy::LevyParams;
use super::quad::integrate;
use crate::error::{Result, ZrpError};
use crate::par::{self, Execution};

/// Central box `{-lbar..lbar}` and `M` boxes of width `2 ell + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegularizationScheme {
    pub l: usize,
    pub ell: usize,
    pub ell_bar: usize,
    pub m_bar: usize,
}

/// Constants for `ell = c_ell alpha log^3 L`, `lbar = c_bar alpha log^4 L`,
/// `alpha = L^{1/2 + 5/(2 b_scale)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConstants {
    pub b_scale: f64,
    pub c_ell: f64,
    pub c_bar: f64,
}

impl Default for SchemeConstants {
    fn default() -> Self {
        Self { b_scale: 20.0, c_ell: 2e-4, c_bar: 2e-3 }
    }
}

impl RegularizationScheme {
    pub fn new(l: usize, ell: usize, ell_bar: usize, m_bar: usize) -> Result<Self> {
        let s = Self { l, ell, ell_bar, m_bar };
        if 2 * ell_bar + 1 + m_bar * (2 * ell + 1) != l {
            return Err(ZrpError::InvalidParameter(format!(
                "boxes do not tile: 2*{ell_bar}+1 + {m_bar}*(2*{ell}+1) != {l}"
            )));
        }
        if m_bar == 0 {
            return Err(ZrpError::InvalidParameter("no boxes outside the centre".into()));
        }
        Ok(s)
    }

    /// Fit the tiling to `L`: keep `ell`, and take the smallest `lbar >= lbar_min`
    /// that leaves a whole number of boxes.
    pub fn fit(l: usize, ell: usize, ell_bar_min: usize) -> Result<Self> {
        let w = 2 * ell + 1;
        if 2 * ell_bar_min + 1 + w > l {
            return Err(ZrpError::InvalidParameter(format!("L = {l} too small for ell = {ell}, lbar = {ell_bar_min}")));
        }
        let mut m_bar = (l - 2 * ell_bar_min - 1) / w;
        // the centre must have odd size
        if (l - m_bar * w).is_multiple_of(2) {
            m_bar -= 1;
        }
        let ell_bar = (l - m_bar * w - 1) / 2;
        Self::new(l, ell, ell_bar, m_bar)
    }

    pub fn from_constants(l: usize, c: &SchemeConstants) -> Result<Self> {
        let lf = l as f64;
        let alpha = lf.powf(0.5 + 2.5 / c.b_scale);
        let log = lf.ln();
        let ell = ((c.c_ell * alpha * log.powi(3)).floor() as usize).max(1);
        let ell_bar = ((c.c_bar * alpha * log.powi(4)).floor() as usize).max(ell + 1);
        Self::fit(l, ell, ell_bar)
    }

    /// `M = L / (2 ell + 1)`.
    pub fn m(&self) -> f64 {
        self.l as f64 / (2 * self.ell + 1) as f64
    }

    /// Centre of box `m` (1-based), offset from the origin.
    pub fn centre(&self, m: usize) -> usize {
        self.ell_bar + (2 * self.ell + 1) * (m - 1) + self.ell + 1
    }

    /// Box index of lattice offset `y` (0 = central box).
    pub fn box_of(&self, y: usize) -> usize {
        let y = y % self.l;
        if y <= self.ell_bar || y >= self.l - self.ell_bar {
            0
        } else {
            1 + (y - self.ell_bar - 1) / (2 * self.ell + 1)
        }
    }

    /// `#{(y, z) in V_0 x Vbar_0 : z - y = d} / |V_0|` for `d = -(ell + lbar)..=ell + lbar`.
    pub fn near_kernel(&self) -> Vec<f64> {
        let (ell, lbar) = (self.ell as i64, self.ell_bar as i64);
        let span = ell + lbar;
        let w = (2 * ell + 1) as f64;
        (-span..=span)
            .map(|d| {
                // y in [-ell, ell] with y + d in [-lbar, lbar]
                let lo = (-ell).max(-lbar - d);
                let hi = ell.min(lbar - d);
                (hi - lo + 1).max(0) as f64 / w
            })
            .collect()
    }

    /// `R(V_0, V_m) = (1/|V_0|) sum_{y in V_0, z in V_m} R(z - y)` for `m = 1..=M`.
    pub fn box_rates(&self, rates: &[f64]) -> Vec<f64> {
        let l = self.l as i64;
        let ell = self.ell as i64;
        let w = (2 * self.ell + 1) as f64;
        (1..=self.m_bar)
            .map(|m| {
                let c = self.centre(m) as i64;
                let mut s = 0.0;
                for y in -ell..=ell {
                    for z in c - ell..=c + ell {
                        s += rates[(z - y).rem_euclid(l) as usize];
                    }
                }
                s / w
            })
            .collect()
    }
}

/// `theta_L r^Lambda(z) = H L cap_Lambda(0, z) = H (1/z + 1/(L - z))`; entry 0 is unused.
pub fn proxy_rates(l: usize, lp: &LevyParams) -> Vec<f64> {
    (0..l).map(|z| if z == 0 { 0.0 } else { lp.h * (1.0 / z as f64 + 1.0 / (l - z) as f64) }).collect()
}

/// `L^T f(u) = H int_0^1 (f(u + v) - f(u)) / (v (1 - v)) dv`.
pub fn limit_generator<F: Fn(f64) -> f64 + Sync>(f: &F, u: f64, lp: &LevyParams) -> Result<f64> {
    let fu = f(u);
    let g = |v: f64| (f(u + v) - fu) / (v * (1.0 - v));
    let a = integrate(g, 0.0, 0.5, 1e-11, 0.0)?;
    let b = integrate(g, 0.5, 1.0, 1e-11, 0.0)?;
    Ok(lp.h * (a + b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointComparison {
    pub x: usize,
    /// `theta_L L^Lambda f(x/L)`
    pub micro: f64,
    pub limit: f64,
    pub near: f64,
    pub box_average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizationReport {
    pub scheme: RegularizationScheme,
    /// `sup_x |theta_L L^Lambda f(x/L) - L^T f(x/L)|`
    pub error: f64,
    /// `sup_x |L2B f(x/L) - L^T f(x/L)|`, the box-averaged part alone
    pub regularized_error: f64,
    /// `sup_x |L1 f(x/L)|`
    pub near_sup: f64,
    /// `sup_x |L2A f(x/L)|`
    pub within_box_sup: f64,
    pub points: Vec<PointComparison>,
}

/// Compare `theta_L L^Lambda f` with `L^T f` at every `x/L`. `scaled_rates[z]`
/// is `theta_L r^Lambda(z)` for `z = 0..L`.
pub fn regularized_generator_compare<F: Fn(f64) -> f64 + Sync>(
    scaled_rates: &[f64],
    f: &F,
    scheme: &RegularizationScheme,
    lp: &LevyParams,
    exec: Execution,
) -> Result<RegularizationReport> {
    let l = scheme.l;
    if scaled_rates.len() != l {
        return Err(ZrpError::InvalidParameter(format!("{} rates for L = {l}", scaled_rates.len())));
    }
    let box_rates = scheme.box_rates(scaled_rates);
    let lf = l as f64;
    let li = l as i64;
    let near_kernel = scheme.near_kernel();
    let span = (scheme.ell + scheme.ell_bar) as i64;
    let points = par::map_indexed(exec, l, |x| -> Result<PointComparison> {
        let fx = f(x as f64 / lf);
        let at = |k: i64| f((x as i64 + k).rem_euclid(li) as f64 / lf);
        let micro: f64 = (1..l).map(|z| scaled_rates[z] * (at(z as i64) - fx)).sum();
        let near: f64 = (-span..=span)
            .filter(|&d| d != 0)
            .map(|d| near_kernel[(d + span) as usize] * scaled_rates[d.rem_euclid(li) as usize] * (at(d) - fx))
            .sum();
        let box_average: f64 =
            box_rates.iter().enumerate().map(|(k, r)| r * (at(scheme.centre(k + 1) as i64) - fx)).sum();
        let limit = limit_generator(f, x as f64 / lf, lp)?;
        Ok(PointComparison { x, micro, limit, near, box_average })
    });
    let points: Vec<PointComparison> = points.into_iter().collect::<Result<_>>()?;
    let sup = |g: &dyn Fn(&PointComparison) -> f64| points.iter().map(g).fold(0.0, f64::max);
    Ok(RegularizationReport {
        scheme: *scheme,
        error: sup(&|p| (p.micro - p.limit).abs()),
        regularized_error: sup(&|p| (p.box_average - p.limit).abs()),
        near_sup: sup(&|p| p.near.abs()),
        within_box_sup: sup(&|p| (p.micro - p.near - p.box_average).abs()),
        points,
    })
}

/// Largest relative error of the binned rate `M R(V_0, V_m) / H` against
/// `1 / (v_m (1 - v_m))`, `v_m = c_m / L`.
pub fn binned_rate_error(scheme: &RegularizationScheme, scaled_rates: &[f64], lp: &LevyParams) -> f64 {
    let m = scheme.m();
    scheme
        .box_rates(scaled_rates)
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let v = scheme.centre(k + 1) as f64 / scheme.l as f64;
            let target = 1.0 / (v * (1.0 - v));
            (m * r / lp.h - target).abs() / target
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit::levy::{char_exponent, LevyParams};
    use std::f64::consts::PI;

    fn lp() -> LevyParams {
        LevyParams::new(3.0, 4.0, 1e-4).unwrap()
    }

    #[test]
    fn tiling() {
        let s = RegularizationScheme::fit(101, 3, 10).unwrap();
        assert_eq!(2 * s.ell_bar + 1 + s.m_bar * 7, 101);
        // boxes partition the complement of the centre
        let mut seen = vec![0usize; s.m_bar + 1];
        for y in 0..101 {
            seen[s.box_of(y)] += 1;
        }
        assert_eq!(seen[0], 2 * s.ell_bar + 1);
        assert!(seen[1..].iter().all(|&c| c == 7));
        for m in 1..=s.m_bar {
            assert_eq!(s.box_of(s.centre(m)), m);
        }
        assert!(RegularizationScheme::new(100, 3, 10, 11).is_err());
    }

    #[test]
    fn constant_function() {
        let p = lp();
        let s = RegularizationScheme::fit(64, 2, 6).unwrap();
        let r = regularized_generator_compare(&proxy_rates(64, &p), &|_| 1.0, &s, &p, Execution::Sequential).unwrap();
        assert_eq!(r.error, 0.0);
        assert_eq!(r.regularized_error, 0.0);
    }

    #[test]
    fn limit_generator_on_cosine() {
        let p = lp();
        let f = |u: f64| (2.0 * PI * u).cos();
        let psi = char_exponent(1, &p).unwrap();
        for u in [0.0, 0.13, 0.5] {
            let v = limit_generator(&f, u, &p).unwrap();
            assert!((v + psi * f(u)).abs() < 1e-8);
        }
    }

    #[test]
    fn shift_invariance() {
        let p = lp();
        let l = 128;
        let s = RegularizationScheme::fit(l, 2, 12).unwrap();
        let rates = proxy_rates(l, &p);
        let f = |u: f64| (2.0 * PI * u).cos() + 0.3 * (4.0 * PI * u).sin();
        let a = regularized_generator_compare(&rates, &f, &s, &p, Execution::Parallel).unwrap();
        let k = 37.0 / l as f64;
        let g = move |u: f64| f(u - k);
        let b = regularized_generator_compare(&rates, &g, &s, &p, Execution::Parallel).unwrap();
        assert!((a.error - b.error).abs() < 1e-12);
        // the split is exact
        for q in &a.points {
            let parts = q.near + q.box_average + (q.micro - q.near - q.box_average);
            assert!((parts - q.micro).abs() < 1e-12);
        }
    }

    #[test]
    fn near_kernel_matches_double_sum() {
        let s = RegularizationScheme::fit(97, 2, 9).unwrap();
        let k = s.near_kernel();
        let span = (s.ell + s.ell_bar) as i64;
        let (ell, lbar) = (s.ell as i64, s.ell_bar as i64);
        let mut brute = vec![0.0; k.len()];
        for y in -ell..=ell {
            for z in -lbar..=lbar {
                brute[(z - y + span) as usize] += 1.0 / (2 * ell + 1) as f64;
            }
        }
        assert!(k.iter().zip(&brute).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn binned_rates_approach_kernel() {
        let p = lp();
        let errs: Vec<f64> = [256usize, 1024, 4096]
            .iter()
            .map(|&l| {
                let ell = ((l as f64).sqrt() / 4.0) as usize;
                let s = RegularizationScheme::fit(l, ell, 4 * ell * ell / 2).unwrap();
                binned_rate_error(&s, &proxy_rates(l, &p), &p)
            })
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }
}
