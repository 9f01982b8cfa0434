//! The limiting jump process of the condensate on the unit torus.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::quad::integrate;
use crate::error::{Result, ZrpError};
use crate::model::{critical_constants, SERIES_TOL};

/// Default small-jump cutoff.
pub const DEFAULT_EPS: f64 = 1e-4;

/// `I_b = int_0^1 x^b (1-x)^b dx = Gamma(b+1)^2 / Gamma(2b+2)`.
pub fn i_b(b: f64) -> f64 {
    (2.0 * ln_gamma(b + 1.0) - ln_gamma(2.0 * b + 2.0)).exp()
}

/// `I_b` by quadrature, for cross-checking the closed form.
pub fn i_b_quadrature(b: f64) -> Result<f64> {
    integrate(|x| (x * (1.0 - x)).powf(b), 0.0, 1.0, 1e-15, 1e-13)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyParams {
    pub b: f64,
    pub rho: f64,
    pub rho_c: f64,
    pub z_c: f64,
    pub i_b: f64,
    /// `H = 1 / ((rho - rho_c)^{1+b} z_c I_b)`
    pub h: f64,
    pub eps: f64,
}

impl LevyParams {
    pub fn new(b: f64, rho: f64, eps: f64) -> Result<Self> {
        let (z_c, rho_c) = critical_constants(b, SERIES_TOL)?;
        Self::from_constants(b, rho, rho_c, z_c, eps)
    }

    /// With the critical constants supplied; this also admits `b <= 2`,
    /// where the series diverge and only the formula is meaningful.
    pub fn from_constants(b: f64, rho: f64, rho_c: f64, z_c: f64, eps: f64) -> Result<Self> {
        if !(rho > rho_c) {
            return Err(ZrpError::InvalidParameter(format!("rho = {rho} is not above rho_c = {rho_c}")));
        }
        if !(eps > 0.0 && eps <= 0.5) {
            return Err(ZrpError::InvalidParameter(format!("cutoff eps = {eps} outside (0, 1/2]")));
        }
        let ib = i_b(b);
        let h = 1.0 / ((rho - rho_c).powf(1.0 + b) * z_c * ib);
        Ok(Self { b, rho, rho_c, z_c, i_b: ib, h, eps })
    }

    /// Rate of jumps with `|v|` in `(eps, 1 - eps)`: `2 H log((1 - eps) / eps)`.
    pub fn truncated_rate(&self) -> f64 {
        2.0 * self.h * ((1.0 - self.eps) / self.eps).ln()
    }

    /// Variance of the discarded small jumps per unit time, `H eps^2`.
    pub fn discarded_variance(&self) -> f64 {
        self.h * self.eps * self.eps
    }
}

/// A point of `[0, 1)` with arithmetic mod 1.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct TorusPoint(f64);

impl TorusPoint {
    pub fn new(u: f64) -> Self {
        let r = u.rem_euclid(1.0);
        // rem_euclid can round up to exactly 1
        Self(if r >= 1.0 { 0.0 } else { r })
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `d(0, v) = |v| (1 - |v|)`.
    pub fn dist0(self) -> f64 {
        self.0 * (1.0 - self.0)
    }

    /// Representative in `[-1/2, 1/2)`.
    pub fn signed(self) -> f64 {
        if self.0 < 0.5 {
            self.0
        } else {
            self.0 - 1.0
        }
    }
}

impl std::ops::Add for TorusPoint {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.0 + o.0)
    }
}

impl std::ops::Sub for TorusPoint {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.0 - o.0)
    }
}

/// Jump rate density `H / d(0, v)`.
pub fn r_torus(v: TorusPoint, lp: &LevyParams) -> Result<f64> {
    if v.0 == 0.0 {
        return Err(ZrpError::Domain("jump rate density is undefined at 0".into()));
    }
    Ok(lp.h / v.dist0())
}

/// `psi(k) = H int_0^1 (1 - cos(2 pi k y)) / d(0, y) dy`.
///
/// The numerator is evaluated as `2 sin^2(pi k y)`, which vanishes to second
/// order at the endpoints, and the integral is split at `1/2`.
pub fn char_exponent(k: i64, lp: &LevyParams) -> Result<f64> {
    if k == 0 {
        return Ok(0.0);
    }
    let kk = k.unsigned_abs() as f64;
    let f = |y: f64| {
        let s = (std::f64::consts::PI * kk * y).sin();
        2.0 * s * s / (y * (1.0 - y))
    };
    let tol = 1e-9 / lp.h.max(1.0);
    let a = integrate(f, 0.0, 0.5, 0.5 * tol, 0.0)?;
    let b = integrate(f, 0.5, 1.0, 0.5 * tol, 0.0)?;
    Ok(lp.h * (a + b))
}

/// Jumps of the truncated process on `[0, t_end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyPath {
    /// `(time, v)` with `v` in `(eps, 1 - eps)`
    pub jumps: Vec<(f64, f64)>,
    pub t_end: f64,
    /// variance of the omitted small jumps, `H eps^2 t_end`
    pub discarded_variance: f64,
}

impl LevyPath {
    /// Displacement on the real line, each jump taken in `[-1/2, 1/2)`.
    pub fn displacement(&self) -> f64 {
        self.jumps.iter().map(|&(_, v)| TorusPoint::new(v).signed()).sum()
    }

    /// Displacement accumulated over `(t0, t1]`.
    pub fn increment(&self, t0: f64, t1: f64) -> f64 {
        self.jumps.iter().filter(|&&(t, _)| t > t0 && t <= t1).map(|&(_, v)| TorusPoint::new(v).signed()).sum()
    }

    /// CSV with columns `t, u`: position on the torus after each jump, from `u = 0`.
    pub fn write_csv<W: Write>(&self, inner: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(inner);
        w.write_record(["t", "u"])?;
        let mut u = TorusPoint::new(0.0);
        w.write_record(["0".to_string(), format!("{:.17e}", u.value())])?;
        for &(t, v) in &self.jumps {
            u = u + TorusPoint::new(v);
            w.write_record([format!("{t:.17e}"), format!("{:.17e}", u.value())])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Poisson jump times at the truncated rate; sizes by the logistic inverse
/// CDF of the density proportional to `1 / (v (1 - v))` on `(eps, 1 - eps)`.
pub fn sample_levy_path<R: Rng + ?Sized>(lp: &LevyParams, t_end: f64, rng: &mut R) -> LevyPath {
    let rate = lp.truncated_rate();
    let mut jumps = Vec::new();
    if rate > 0.0 {
        let hi = ((1.0 - lp.eps) / lp.eps).ln();
        let mut t = 0.0;
        loop {
            t += -(1.0 - rng.random::<f64>()).ln() / rate;
            if t > t_end {
                break;
            }
            let u = -hi + 2.0 * hi * rng.random::<f64>();
            jumps.push((t, 1.0 / (1.0 + (-u).exp())));
        }
    }
    LevyPath { jumps, t_end, discarded_variance: lp.discarded_variance() * t_end }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::stats::{ks_two_sample, mean_se, sign_test};
    use proptest::prelude::*;

    /// `Cin(x) = sum_{n>=1} (-1)^{n+1} x^{2n} / (2n (2n)!)`, fine for moderate `x`.
    fn cin_series(x: f64) -> f64 {
        let mut term = 1.0; // x^{2n} / (2n)!
        let mut s = 0.0;
        for n in 1..200 {
            let m = 2.0 * n as f64;
            term *= x * x / ((m - 1.0) * m);
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            s += sign * term / m;
            if term / m < 1e-18 {
                break;
            }
        }
        s
    }

    fn params() -> LevyParams {
        LevyParams::new(3.0, 4.0, DEFAULT_EPS).unwrap()
    }

    #[test]
    fn i_b_closed_form_vs_quadrature() {
        for b in [1.0, 2.0, 3.0, 4.0, 5.0, 7.5] {
            assert!((i_b(b) - i_b_quadrature(b).unwrap()).abs() <= 1e-10, "b = {b}");
        }
        assert!((i_b(1.0) - 1.0 / 6.0).abs() < 1e-15);
        assert!((i_b(2.0) - 1.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn b_one_formula() {
        let (rho, rho_c, z_c) = (2.0, 0.5, 1.7);
        let lp = LevyParams::from_constants(1.0, rho, rho_c, z_c, 0.1).unwrap();
        let expect = 6.0 / ((rho - rho_c).powi(2) * z_c);
        assert!((lp.h - expect).abs() <= 1e-13 * expect);
    }

    #[test]
    fn rates_on_torus() {
        let lp = params();
        assert!((r_torus(TorusPoint::new(0.5), &lp).unwrap() - 4.0 * lp.h).abs() < 1e-12);
        assert!(r_torus(TorusPoint::new(0.0), &lp).is_err());
        assert!(r_torus(TorusPoint::new(3.0), &lp).is_err());
        assert!(LevyParams::new(3.0, 0.1, 1e-4).is_err());
    }

    #[test]
    fn char_exponent_oracle() {
        let lp = params();
        assert_eq!(char_exponent(0, &lp).unwrap(), 0.0);
        for k in [1i64, 2] {
            let q = char_exponent(k, &lp).unwrap();
            let exact = 2.0 * lp.h * cin_series(2.0 * std::f64::consts::PI * k as f64);
            assert!((q - exact).abs() < 1e-8, "k = {k}: {q} vs {exact}");
            assert_eq!(q, char_exponent(-k, &lp).unwrap());
        }
        let v: Vec<f64> = (1..=4).map(|k| char_exponent(k, &lp).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn empty_window() {
        let lp = LevyParams::new(3.0, 4.0, 0.5).unwrap();
        let p = sample_levy_path(&lp, 10.0, &mut rng::stream(1, 0));
        assert!(p.jumps.is_empty());
    }

    #[test]
    fn jump_count_and_symmetry() {
        let lp = params();
        let t = 0.5;
        let mut rng = rng::stream(2, 0);
        let paths: Vec<LevyPath> = (0..10_000).map(|_| sample_levy_path(&lp, t, &mut rng)).collect();
        let counts: Vec<f64> = paths.iter().map(|p| p.jumps.len() as f64).collect();
        let (m, se) = mean_se(&counts);
        assert!((m - t * lp.truncated_rate()).abs() <= 3.0 * se);
        let (mut pos, mut neg) = (0, 0);
        for p in &paths {
            for &(_, v) in &p.jumps {
                assert!(v > lp.eps && v < 1.0 - lp.eps);
                if TorusPoint::new(v).signed() > 0.0 {
                    pos += 1;
                } else {
                    neg += 1;
                }
            }
        }
        assert!(sign_test(pos, neg) > 0.01);
        let a: Vec<f64> = paths.iter().map(|p| p.increment(0.0, 0.25)).collect();
        let b: Vec<f64> = paths.iter().map(|p| p.increment(0.25, 0.5)).collect();
        assert!(ks_two_sample(&a, &b).1 > 0.01);
    }

    proptest! {
        #[test]
        fn torus_distance_symmetric(v in 0.0f64..1.0) {
            let a = TorusPoint::new(v).dist0();
            let b = TorusPoint::new(1.0 - v).dist0();
            prop_assert!((a - b).abs() < 1e-15);
            prop_assert!(a <= 0.25);
        }

        #[test]
        fn torus_arithmetic(u in -5.0f64..5.0, v in -5.0f64..5.0) {
            let s = TorusPoint::new(u) + TorusPoint::new(v);
            prop_assert!((0.0..1.0).contains(&s.value()));
            let back = s - TorusPoint::new(v);
            let d = (back.value() - TorusPoint::new(u).value()).abs();
            prop_assert!(d < 1e-12 || (1.0 - d) < 1e-12);
        }

        #[test]
        fn char_exponent_even_and_increasing(k in 1i64..40, rho in 3.0f64..8.0) {
            let lp = LevyParams::new(3.0, rho, 1e-4).unwrap();
            let p = char_exponent(k, &lp).unwrap();
            prop_assert!(p > 0.0);
            prop_assert_eq!(p, char_exponent(-k, &lp).unwrap());
            prop_assert!(char_exponent(k + 1, &lp).unwrap() >= p);
        }
    }
}
