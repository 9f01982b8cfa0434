//! Lattice model: parameters, configurations, jump rates, wells.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZrpError};

/// Default tolerance on the truncated series for `z_c` and `rho_c`.
pub const SERIES_TOL: f64 = 1e-12;

/// Tail of `sum_{n >= k} n^{-s}` by Euler-Maclaurin, with an estimate of the
/// first omitted term.
fn zeta_tail(s: f64, k: f64) -> (f64, f64) {
    let p = |m: i32| k.powf(-s - f64::from(m));
    let rising = |m: usize| (0..m).map(|i| s + i as f64).product::<f64>();
    let tail = k.powf(1.0 - s) / (s - 1.0) + 0.5 * p(0) + rising(1) / 12.0 * p(1) - rising(3) / 720.0 * p(3)
        + rising(5) / 30240.0 * p(5);
    let next = rising(7) / 1_209_600.0 * p(7);
    (tail, next)
}

/// `sum_{n >= 1} n^{-s}` for `s > 1`, to within `tol`.
fn zeta(s: f64, tol: f64) -> f64 {
    zeta_from(s, 1, tol)
}

/// `sum_{n >= start} n^{-s}` for `s > 1`, to within `tol`.
fn zeta_from(s: f64, start: usize, tol: f64) -> f64 {
    let start = start.max(1);
    let mut k = start.max(64);
    loop {
        let (tail, next) = zeta_tail(s, k as f64);
        if next.abs() < 1e-3 * tol || k >= 1 << 20 {
            // sum small terms first
            let head: f64 = (start..k).rev().map(|n| (n as f64).powf(-s)).sum();
            return head + tail;
        }
        k *= 4;
    }
}

/// `sum_{n >= start} n^{-s}` at the default series tolerance.
pub(crate) fn zeta_tail_sum(s: f64, start: usize) -> f64 {
    zeta_from(s, start, SERIES_TOL)
}

/// `(z_c, rho_c)` for exponent `b`: `z_c = 1 + sum n^{-b}`,
/// `rho_c = sum n^{1-b} / z_c`.
pub fn critical_constants(b: f64, tol: f64) -> Result<(f64, f64)> {
    if !(b > 2.0) || !b.is_finite() {
        return Err(ZrpError::DivergentSeries(b));
    }
    if !(tol > 0.0) {
        return Err(ZrpError::InvalidParameter(format!("series tolerance {tol}")));
    }
    let z_c = 1.0 + zeta(b, tol);
    let rho_c = zeta(b - 1.0, tol) / z_c;
    Ok((z_c, rho_c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub l: usize,
    pub n: usize,
    pub b: f64,
    pub rho: f64,
    pub rho_c: f64,
    pub z_c: f64,
    pub n_tilde: f64,
    pub theta: f64,
}

impl ModelParams {
    pub fn new(l: usize, n: usize, b: f64) -> Result<Self> {
        if l == 0 {
            return Err(ZrpError::InvalidParameter("L must be positive".into()));
        }
        if n == 0 {
            return Err(ZrpError::InvalidParameter("N must be positive".into()));
        }
        let (z_c, rho_c) = critical_constants(b, SERIES_TOL)?;
        let lf = l as f64;
        Ok(Self { l, n, b, rho: n as f64 / lf, rho_c, z_c, n_tilde: n as f64 - rho_c * lf, theta: lf.powf(1.0 + b) })
    }

    /// Parameters at density `rho`, with `N = round(rho * L)`.
    pub fn at_density(l: usize, rho: f64, b: f64) -> Result<Self> {
        let n = (rho * l as f64).round();
        if !(n >= 1.0) {
            return Err(ZrpError::InvalidParameter(format!("density {rho} gives no particles")));
        }
        Self::new(l, n as usize, b)
    }

    /// `N = round(factor * rho_c * L)`.
    pub fn at_critical_multiple(l: usize, factor: f64, b: f64) -> Result<Self> {
        let (_, rho_c) = critical_constants(b, SERIES_TOL)?;
        Self::at_density(l, factor * rho_c, b)
    }
}

/// Jump rates `g(0)=0, g(1)=1, g(n)=(n/(n-1))^b`, cached up to a cap.
#[derive(Debug, Clone)]
pub struct JumpRateTable {
    b: f64,
    g: Vec<f64>,
}

impl JumpRateTable {
    pub fn new(b: f64, cap: usize) -> Self {
        let g = (0..=cap.max(1)).map(|n| Self::rate(b, n)).collect();
        Self { b, g }
    }

    pub fn rate(b: f64, n: usize) -> f64 {
        match n {
            0 => 0.0,
            1 => 1.0,
            _ => (n as f64 / (n - 1) as f64).powf(b),
        }
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    #[inline]
    pub fn g(&self, n: usize) -> f64 {
        match self.g.get(n) {
            Some(&v) => v,
            None => Self::rate(self.b, n),
        }
    }

    /// `log g!(n) = b ln n`.
    pub fn log_gfact(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.b * (n as f64).ln()
        }
    }

    /// Largest rate, `g(2) = 2^b`.
    pub fn max_rate(&self) -> f64 {
        2f64.powf(self.b)
    }
}

/// `g(n)` for a single `n` without a table.
pub fn jump_rate(b: f64, n: usize) -> f64 {
    JumpRateTable::rate(b, n)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    occ: Vec<u32>,
    total: u64,
}

impl Configuration {
    pub fn new(occ: Vec<u32>) -> Self {
        let total = occ.iter().map(|&v| u64::from(v)).sum();
        Self { occ, total }
    }

    /// All `n` particles on `site`.
    pub fn condensed(l: usize, n: usize, site: usize) -> Self {
        let mut occ = vec![0u32; l];
        occ[site] = n as u32;
        Self::new(occ)
    }

    pub fn len(&self) -> usize {
        self.occ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occ.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn occ(&self) -> &[u32] {
        &self.occ
    }

    #[inline]
    pub fn get(&self, x: usize) -> usize {
        self.occ[x] as usize
    }

    /// Neighbour of `x` in direction `dir` on the ring.
    #[inline]
    pub fn neighbour(&self, x: usize, dir: i8) -> usize {
        let l = self.occ.len();
        if dir > 0 {
            if x + 1 == l {
                0
            } else {
                x + 1
            }
        } else if x == 0 {
            l - 1
        } else {
            x - 1
        }
    }

    /// Move one particle from `x` to `y`. Panics if `x` is empty.
    #[inline]
    pub fn move_particle(&mut self, x: usize, y: usize) {
        assert!(self.occ[x] > 0, "move from empty site {x}");
        self.occ[x] -= 1;
        self.occ[y] += 1;
    }

    /// `eta^{x,y}` as a new configuration.
    pub fn moved(&self, x: usize, y: usize) -> Self {
        let mut c = self.clone();
        c.move_particle(x, y);
        c
    }

    /// Translate by `k`: the particles at `i` end up at `i + k`.
    pub fn shift(&self, k: usize) -> Self {
        let l = self.occ.len();
        let mut occ = vec![0u32; l];
        for (i, &v) in self.occ.iter().enumerate() {
            occ[(i + k) % l] = v;
        }
        Self { occ, total: self.total }
    }

    pub fn observables(&self) -> Observables {
        let mut max_value = 0usize;
        let mut max_location = 0usize;
        let mut second_max = 0usize;
        for (i, &v) in self.occ.iter().enumerate() {
            let v = v as usize;
            if v > max_value {
                second_max = max_value;
                max_value = v;
                max_location = i;
            } else if v > second_max || (v == max_value && i != max_location) {
                second_max = v;
            }
        }
        if self.occ.len() < 2 {
            second_max = 0;
        }
        Observables { max_value, max_location, second_max, psi: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    Asymptotic,
    Explicit,
}

/// Well scales. Membership of `E^x`: `eta_x >= N - rho_c L - alpha` and all
/// other sites `<= beta`; the extended well uses `phi` in place of `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellPartition {
    pub alpha: f64,
    pub beta: usize,
    pub phi: usize,
    pub mode: ScaleMode,
}

impl WellPartition {
    /// `alpha = L^{1/2 + 5/(2b)}`, `beta = 2 floor(L^{4/(b-1)})`, `phi = L / log L`.
    pub fn asymptotic(mp: &ModelParams) -> Self {
        let l = mp.l as f64;
        let alpha = l.powf(0.5 + 2.5 / mp.b);
        let beta = 2 * l.powf(4.0 / (mp.b - 1.0)).floor() as usize;
        let phi = if mp.l > 1 { (l / l.ln()).floor() as usize } else { 0 };
        Self { alpha, beta, phi: phi.max(beta), mode: ScaleMode::Asymptotic }
    }

    pub fn explicit(alpha: f64, beta: usize, phi: usize) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(ZrpError::InvalidParameter(format!("alpha = {alpha}")));
        }
        if phi < beta {
            return Err(ZrpError::InvalidParameter(format!("phi = {phi} below beta = {beta}")));
        }
        Ok(Self { alpha, beta, phi, mode: ScaleMode::Explicit })
    }

    /// Smallest condensate occupation admitted into a well.
    pub fn threshold(&self, mp: &ModelParams) -> f64 {
        mp.n_tilde - self.alpha
    }

    /// Smallest integer occupation admitted, clamped at 0.
    pub fn threshold_int(&self, mp: &ModelParams) -> usize {
        let t = self.threshold(mp).ceil();
        if t <= 0.0 {
            0
        } else {
            t as usize
        }
    }

    /// The wells identify a unique condensate iff the threshold exceeds the bulk cap.
    pub fn is_separating(&self, mp: &ModelParams) -> bool {
        self.threshold(mp) > self.beta as f64
    }

    pub fn check_separating(&self, mp: &ModelParams) -> Result<()> {
        if self.is_separating(mp) {
            Ok(())
        } else {
            Err(ZrpError::InvalidParameter(format!(
                "wells overlap: N - rho_c L - alpha = {:.4} does not exceed beta = {}",
                self.threshold(mp),
                self.beta
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WellClass {
    Well(usize),
    ExtendedOnly(usize),
    Delta,
}

impl WellClass {
    pub fn well(self) -> Option<usize> {
        match self {
            WellClass::Well(x) => Some(x),
            _ => None,
        }
    }

    pub fn shift(self, k: usize, l: usize) -> Self {
        match self {
            WellClass::Well(x) => WellClass::Well((x + k) % l),
            WellClass::ExtendedOnly(x) => WellClass::ExtendedOnly((x + k) % l),
            WellClass::Delta => WellClass::Delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub max_value: usize,
    pub max_location: usize,
    pub second_max: usize,
    /// `x / L` when the configuration lies in a well.
    pub psi: Option<f64>,
}

/// Classify from precomputed max, location and second max.
pub fn classify_stats(
    max_value: usize,
    max_location: usize,
    second_max: usize,
    wp: &WellPartition,
    mp: &ModelParams,
) -> WellClass {
    let big = max_value as f64 >= wp.threshold(mp);
    // a tie means no unique condensate; impossible when wells separate
    if !big || second_max == max_value {
        debug_assert!(!(big && second_max <= wp.beta && wp.is_separating(mp)), "tied maximum inside a separating well");
        return WellClass::Delta;
    }
    if second_max <= wp.beta {
        WellClass::Well(max_location)
    } else if second_max <= wp.phi {
        WellClass::ExtendedOnly(max_location)
    } else {
        WellClass::Delta
    }
}

pub fn classify(cfg: &Configuration, wp: &WellPartition, mp: &ModelParams) -> WellClass {
    let o = cfg.observables();
    classify_stats(o.max_value, o.max_location, o.second_max, wp, mp)
}

/// Observables with `psi` filled in from the classifier.
pub fn observe(cfg: &Configuration, wp: &WellPartition, mp: &ModelParams) -> Observables {
    let mut o = cfg.observables();
    if let WellClass::Well(x) = classify_stats(o.max_value, o.max_location, o.second_max, wp, mp) {
        o.psi = Some(x as f64 / cfg.len() as f64);
    }
    o
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const ZETA2: f64 = 1.644_934_066_848_226_4;
    const ZETA3: f64 = 1.202_056_903_159_594_3;

    /// Partial sum to K plus the integral bracket
    /// `int_{K+1}^inf x^-s <= tail <= int_K^inf x^-s`.
    fn bracket(s: f64, k: usize) -> (f64, f64) {
        let head: f64 = (1..=k).rev().map(|n| (n as f64).powf(-s)).sum();
        let lo = ((k + 1) as f64).powf(1.0 - s) / (s - 1.0);
        let hi = (k as f64).powf(1.0 - s) / (s - 1.0);
        (head + lo, head + hi)
    }

    #[test]
    fn rates() {
        assert_eq!(jump_rate(3.0, 0), 0.0);
        assert_eq!(jump_rate(3.0, 1), 1.0);
        assert_eq!(jump_rate(3.0, 2), 8.0);
        let t = JumpRateTable::new(4.0, 10);
        assert_eq!(t.g(50), jump_rate(4.0, 50));
        assert_eq!(t.log_gfact(0), 0.0);
    }

    #[test]
    fn zeta_three_against_bracket() {
        let (z_c, rho_c) = critical_constants(3.0, SERIES_TOL).unwrap();
        let (lo, hi) = bracket(3.0, 200_000);
        assert!(z_c - 1.0 >= lo - 1e-13 && z_c - 1.0 <= hi + 1e-13);
        assert_relative_eq!(z_c, 1.0 + ZETA3, epsilon = 1e-13);
        assert_relative_eq!(rho_c, ZETA2 / (1.0 + ZETA3), epsilon = 1e-13);
    }

    #[test]
    fn large_b_limit() {
        let (z_c, rho_c) = critical_constants(80.0, SERIES_TOL).unwrap();
        assert_relative_eq!(z_c, 2.0, epsilon = 1e-15);
        assert_relative_eq!(rho_c, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn divergent_series_rejected() {
        assert!(matches!(critical_constants(2.0, 1e-12), Err(ZrpError::DivergentSeries(_))));
        assert!(critical_constants(1.5, 1e-12).is_err());
    }

    #[test]
    fn near_threshold_b_against_bracket() {
        // slow series: s = b - 1 = 1.2
        let (z_c, rho_c) = critical_constants(2.2, 1e-12).unwrap();
        let (lo, hi) = bracket(1.2, 1_000_000);
        let num = rho_c * z_c;
        assert!(num >= lo - 1e-9 && num <= hi + 1e-9, "{num} not in [{lo}, {hi}]");
    }

    #[test]
    fn derived_fields() {
        let mp = ModelParams::new(10, 30, 3.0).unwrap();
        assert_eq!(mp.n_tilde, 30.0 - mp.rho_c * 10.0);
        assert_eq!(mp.theta, 10f64.powf(4.0));
    }

    fn scales() -> (ModelParams, WellPartition) {
        let mp = ModelParams::new(4, 20, 3.0).unwrap();
        let wp = WellPartition::explicit(3.0, 2, 2).unwrap();
        (mp, wp)
    }

    #[test]
    fn classify_examples() {
        let (mp, wp) = scales();
        let c = |v: [u32; 4]| classify(&Configuration::new(v.to_vec()), &wp, &mp);
        assert_eq!(c([19, 1, 0, 0]), WellClass::Well(0));
        assert_eq!(c([16, 4, 0, 0]), WellClass::Delta);
        // threshold is 20 - 4 rho_c - 3 ~ 14.01
        assert!(wp.threshold(&mp) > 10.0);
        assert_eq!(c([10, 10, 0, 0]), WellClass::Delta);
        assert_eq!(c([0, 0, 18, 2]), WellClass::Well(2));
    }

    #[test]
    fn extended_wells() {
        let (mp, _) = scales();
        let wp = WellPartition::explicit(3.0, 2, 4).unwrap();
        let cfg = Configuration::new(vec![16, 4, 0, 0]);
        assert_eq!(classify(&cfg, &wp, &mp), WellClass::ExtendedOnly(0));
    }

    #[test]
    fn observables_tie_break() {
        let o = Configuration::new(vec![1, 5, 0, 5]).observables();
        assert_eq!((o.max_value, o.max_location, o.second_max), (5, 1, 5));
        let o = Configuration::new(vec![7, 2, 3, 1]).observables();
        assert_eq!((o.max_value, o.max_location, o.second_max), (7, 0, 3));
    }

    #[test]
    fn asymptotic_scales() {
        let mp = ModelParams::new(1024, 4096, 21.0).unwrap();
        let wp = WellPartition::asymptotic(&mp);
        assert_eq!(wp.mode, ScaleMode::Asymptotic);
        assert!(wp.beta >= 2 && (wp.beta as f64) < mp.l as f64);
        assert!(wp.phi >= wp.beta);
    }

    fn config_strategy() -> impl Strategy<Value = Vec<u32>> {
        prop::collection::vec(0u32..12, 2..9)
    }

    proptest! {
        #[test]
        fn moves_conserve_particles(occ in config_strategy()) {
            let cfg = Configuration::new(occ);
            for x in 0..cfg.len() {
                if cfg.get(x) == 0 { continue; }
                for dir in [-1i8, 1] {
                    let m = cfg.moved(x, cfg.neighbour(x, dir));
                    prop_assert_eq!(m.total(), cfg.total());
                    prop_assert_eq!(m.total(), m.occ().iter().map(|&v| u64::from(v)).sum::<u64>());
                }
            }
        }

        #[test]
        fn rate_monotone_and_log_factorial(b in 2.1f64..12.0, n in 2usize..5000) {
            let t = JumpRateTable::new(b, 100);
            prop_assert!(t.g(n) <= t.g(n - 1) || n == 2);
            prop_assert!(t.g(n) >= 1.0);
            let lhs = t.g(n).ln() + t.log_gfact(n - 1);
            prop_assert!((lhs - t.log_gfact(n)).abs() < 1e-12 * t.log_gfact(n).max(1.0));
        }

        #[test]
        fn classify_translation_covariant(occ in prop::collection::vec(0u32..8, 3..7), k in 0usize..7) {
            let cfg = Configuration::new(occ);
            let l = cfg.len();
            let mp = ModelParams::new(l, cfg.total().max(1) as usize, 3.0).unwrap();
            let wp = WellPartition::explicit(2.0, 2, 3).unwrap();
            let base = classify(&cfg, &wp, &mp);
            prop_assert_eq!(classify(&cfg.shift(k), &wp, &mp), base.shift(k, l));
        }
    }
}
