//! Symbols `m_v`, `m_u` of the rescaled wave equations, the phase-time zone
//! decomposition, elliptic zone boundaries, and the certification of the
//! elliptic-zone growth-rate bounds.

use crate::damping::DampingLaw;
use crate::error::{domain, invalid, Result};
use crate::quad::compensated_sum;
use serde::{Deserialize, Serialize};

/// The two wave families: `v` solves `y'' + b y' + k^2 y = 0`, `u` solves `y'' + k^2 y + (b y)' = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    V,
    U,
}

impl Family {
    /// Sign multiplying `b'/2` in the symbol: `m = k^2 - b^2/4 - sign * b'/2`.
    #[inline]
    fn sign(self) -> f64 {
        match self {
            Family::V => 1.0,
            Family::U => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::V => "V",
            Family::U => "U",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Zone thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneConfig {
    pub eps: f64,
    pub big_n: f64,
    pub t_ell: f64,
    pub c0: f64,
}

impl ZoneConfig {
    pub fn new(law: &DampingLaw, eps: f64, big_n: f64, t_ell: f64, c0: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < big_n) {
            return Err(invalid(format!("require 0 < eps < N, got eps = {eps}, N = {big_n}")));
        }
        if eps >= 0.5 {
            return Err(invalid(format!("eps must be below 1/2 for a nonempty elliptic zone, got {eps}")));
        }
        if !(t_ell >= 0.0) {
            return Err(invalid(format!("t_ell must be nonnegative, got {t_ell}")));
        }
        if !(c0 >= law.mu() * big_n) {
            return Err(invalid(format!("c0 must be >= mu N = {}, got {c0}", law.mu() * big_n)));
        }
        Ok(Self { eps, big_n, t_ell, c0 })
    }

    /// Default thresholds: `eps = 0.1`, `N = 2`, `c0 = mu N`, and `t_ell` the first time
    /// with `|b'|/b^2 <= 1/8`.
    pub fn default_for(law: &DampingLaw) -> Self {
        let (mu, l) = (law.mu(), law.lambda());
        // |b'|/b^2 = lambda (1+t)^(lambda-1) / mu <= 1/8
        let t_ell = if l == 0.0 { 0.0 } else { ((8.0 * l / mu).powf(1.0 / (1.0 - l)) - 1.0).max(0.0) };
        Self { eps: 0.1, big_n: 2.0, t_ell, c0: mu * 2.0 }
    }

    pub fn with_t_ell(mut self, t_ell: f64) -> Self {
        self.t_ell = t_ell;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }
}

/// Zone tag of a phase-time point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Zone {
    Hyperbolic,
    PseudoDiff,
    Reduced,
    Elliptic,
    BoundedResidual,
}

impl Zone {
    pub fn name(self) -> &'static str {
        match self {
            Zone::Hyperbolic => "Hyperbolic",
            Zone::PseudoDiff => "PseudoDiff",
            Zone::Reduced => "Reduced",
            Zone::Elliptic => "Elliptic",
            Zone::BoundedResidual => "BoundedResidual",
        }
    }
}

/// Value of a symbol and its square-root modulus with time derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolValue {
    pub m: f64,
    pub sqrt_abs_m: f64,
    pub d_sqrt_abs_m: f64,
}

/// Symbol with first and second time derivatives of `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolDerivs {
    pub m: f64,
    pub dm: f64,
    pub d2m: f64,
}

/// `m`, `m'`, `m''` without domain checks.
#[inline]
pub fn symbol_derivs(family: Family, law: &DampingLaw, t: f64, k: f64) -> SymbolDerivs {
    let d = law.derivs(t);
    let sg = family.sign();
    SymbolDerivs {
        m: k * k - 0.25 * d.b * d.b - sg * 0.5 * d.db,
        dm: -0.5 * d.b * d.db - sg * 0.5 * d.d2b,
        d2m: -0.5 * (d.db * d.db + d.b * d.d2b) - sg * 0.5 * d.d3b,
    }
}

/// Evaluates `m_v` or `m_u` at `(t, k)` with `sqrt|m|` and its time derivative.
pub fn symbol(family: Family, law: &DampingLaw, t: f64, k: f64) -> Result<SymbolValue> {
    if !(t >= 0.0) || !(k >= 0.0) {
        return Err(domain(format!("require t >= 0 and k >= 0, got t = {t}, k = {k}")));
    }
    let s = symbol_derivs(family, law, t, k);
    let a = s.m.abs().sqrt();
    let da = if a > 0.0 { s.m.signum() * s.dm / (2.0 * a) } else { 0.0 };
    Ok(SymbolValue { m: s.m, sqrt_abs_m: a, d_sqrt_abs_m: da })
}

/// Elliptic indicator `g = -m - eps^2 b^2`; the point is elliptic iff `g >= 0` and `t >= t_ell`.
#[inline]
fn elliptic_gap(family: Family, law: &DampingLaw, eps: f64, t: f64, k: f64) -> f64 {
    let b = law.b(t);
    -symbol_derivs(family, law, t, k).m - eps * eps * b * b
}

/// Classifies `(t, k)` with tie-break Elliptic > Reduced > PseudoDiff > Hyperbolic.
pub fn classify(family: Family, law: &DampingLaw, cfg: &ZoneConfig, t: f64, k: f64) -> Result<Zone> {
    let sv = symbol(family, law, t, k)?;
    let b = law.b(t);
    let a = sv.sqrt_abs_m;
    let eb = cfg.eps * b;
    if sv.m <= 0.0 && a >= eb {
        return Ok(if t >= cfg.t_ell { Zone::Elliptic } else { Zone::BoundedResidual });
    }
    if a <= eb {
        return Ok(Zone::Reduced);
    }
    // Here m > 0 and sqrt(m) > eps b.
    if a <= cfg.big_n * b {
        Ok(Zone::PseudoDiff)
    } else {
        Ok(Zone::Hyperbolic)
    }
}

/// Result of a supremum search over an elliptic fibre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    /// The fibre is empty.
    None,
    /// Finite supremum.
    Finite(f64),
    /// The fibre is unbounded.
    Infinite,
}

impl Boundary {
    pub fn finite(self) -> Option<f64> {
        match self {
            Boundary::Finite(x) => Some(x),
            _ => None,
        }
    }
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    // Invariant: f(lo) >= 0 > f(hi).
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `sup { t : (t, k) elliptic }`, by bracketing on a geometric scan and bisection.
pub fn t_xi(family: Family, law: &DampingLaw, cfg: &ZoneConfig, k: f64) -> Result<Boundary> {
    if !(k >= 0.0) {
        return Err(domain(format!("k must be nonnegative, got {k}")));
    }
    let g = |t: f64| elliptic_gap(family, law, cfg.eps, t, k);
    if law.lambda() == 0.0 {
        return Ok(if g(cfg.t_ell) >= 0.0 { Boundary::Infinite } else { Boundary::None });
    }
    if k == 0.0 {
        // |b'|/b^2 -> 0, so g = b^2 (1/4 - eps^2 -+ b'/(2 b^2)) is eventually positive.
        return Ok(Boundary::Infinite);
    }
    // Beyond t_max the gap is certainly negative: b^2/4 + |b'|/2 < k^2.
    let upper = |t: f64| {
        let d = law.derivs(t);
        0.25 * d.b * d.b + 0.5 * d.db.abs() - k * k
    };
    let mut t_max = (cfg.t_ell + 1.0) * 2.0;
    while upper(t_max) >= 0.0 {
        t_max *= 2.0;
        if t_max > 1e300 {
            return Ok(Boundary::Infinite);
        }
    }
    let n = 4000;
    let l0 = cfg.t_ell.ln_1p();
    let l1 = t_max.ln_1p();
    let grid: Vec<f64> = (0..=n).map(|i| (l0 + (l1 - l0) * i as f64 / n as f64).exp_m1()).collect();
    let mut last = None;
    for i in (0..=n).rev() {
        if g(grid[i]) >= 0.0 {
            last = Some(i);
            break;
        }
    }
    match last {
        None => Ok(Boundary::None),
        Some(i) if i == n => Ok(Boundary::Finite(grid[n])),
        Some(i) => Ok(Boundary::Finite(bisect(g, grid[i], grid[i + 1], 1e-10))),
    }
}

/// `sup { k : (t, k) elliptic }`; the elliptic slice is `k^2 <= -m(t,0) - eps^2 b^2`.
pub fn xi_t(family: Family, law: &DampingLaw, cfg: &ZoneConfig, t: f64) -> Result<Option<f64>> {
    if !(t >= 0.0) {
        return Err(domain(format!("t must be nonnegative, got {t}")));
    }
    if t < cfg.t_ell {
        return Ok(None);
    }
    let cap = elliptic_gap(family, law, cfg.eps, t, 0.0);
    Ok(if cap >= 0.0 { Some(cap.sqrt()) } else { None })
}

/// Same frequency cap located by bisection in `k` (independent cross-check).
pub fn xi_t_bisect(family: Family, law: &DampingLaw, cfg: &ZoneConfig, t: f64) -> Option<f64> {
    if t < cfg.t_ell {
        return None;
    }
    let g = |k: f64| elliptic_gap(family, law, cfg.eps, t, k);
    if g(0.0) < 0.0 {
        return None;
    }
    let mut hi = 1.0;
    while g(hi) >= 0.0 {
        hi *= 2.0;
    }
    Some(bisect(g, 0.0, hi, 1e-15))
}

/// Growth rate `sqrt|m| + (sqrt|m|)'/(2 sqrt|m|) - b/2` appearing in the elliptic
/// representation of the multipliers.
#[inline]
pub fn elliptic_rate(family: Family, law: &DampingLaw, t: f64, k: f64) -> f64 {
    let s = symbol_derivs(family, law, t, k);
    let am = s.m.abs();
    let a = am.sqrt();
    // (sqrt|m|)'/(2 sqrt|m|) = (|m|)'/(4|m|), and |m|' = -m' for m < 0.
    a - s.dm / (4.0 * am) - 0.5 * law.b(t)
}

/// Outcome of [`certify_ell_bounds`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertReport {
    pub family: Family,
    pub points: usize,
    /// Constant in front of `k^2/b` in the upper bound (`1` for `V`, fitted `C1` for `U`).
    pub c_upper: f64,
    /// Constant in front of `k^2/b` in the lower bound (`C3 + 2` for `V`, fitted `C2` for `U`).
    pub c_lower: f64,
    pub min_upper_slack: f64,
    pub min_lower_slack: f64,
    pub violations_upper: usize,
    pub violations_lower: usize,
    /// Fitted exponent of `sup_k |r(t,k)|` against `1+t`.
    pub remainder_exponent: f64,
    /// Fitted constant `C_r` with `|r| <= C_r (1+t)^(-(2-lambda))` on the grid.
    pub remainder_constant: f64,
    pub pass: bool,
}

/// Log-log OLS slope of `y` against `1+t`.
fn loglog_slope(ts: &[f64], ys: &[f64]) -> f64 {
    let xs: Vec<f64> = ts.iter().map(|t| t.ln_1p()).collect();
    let ls: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = xs.len() as f64;
    let mx = compensated_sum(xs.iter().copied()) / n;
    let my = compensated_sum(ls.iter().copied()) / n;
    let sxy = compensated_sum(xs.iter().zip(&ls).map(|(x, y)| (x - mx) * (y - my)));
    let sxx = compensated_sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    sxy / sxx
}

/// Standard certification grid: `n_t` log-spaced times in `[t_lo, t_hi]`, and at each
/// time `n_k` frequencies `k = frac * xi_t * j / n_k`, `j = 0..=n_k`.
#[allow(clippy::too_many_arguments)]
pub fn standard_grid(
    family: Family,
    law: &DampingLaw,
    cfg: &ZoneConfig,
    t_lo: f64,
    t_hi: f64,
    n_t: usize,
    n_k: usize,
    frac: f64,
) -> Result<Vec<(f64, f64)>> {
    let mut grid = Vec::with_capacity(n_t * (n_k + 1));
    for i in 0..n_t {
        let t = (t_lo.ln() + (t_hi.ln() - t_lo.ln()) * i as f64 / (n_t - 1).max(1) as f64).exp();
        let cap = xi_t(family, law, cfg, t)?.ok_or_else(|| domain(format!("empty elliptic slice at t = {t}")))?;
        for j in 0..=n_k {
            grid.push((t, frac * cap * j as f64 / n_k as f64));
        }
    }
    Ok(grid)
}

/// Checks the two-sided elliptic growth-rate bounds on a grid of elliptic points.
///
/// Family `V`: upper `rate <= -k^2/b + b'/b + |r_v|` with the exact remainder
/// `r_v = b''/(8|m_v|)`; lower `rate >= -C k^2/b + b'/b - (|b'|^2/b^3 + |b''|/b^2)` with
/// `C = C3 + 2`, `C3 = max_t |b'|/b^2`.
///
/// Family `U`: `-C1 k^2/b - r_u <= ... ` with `r_u = 2(|b'|^2/b^3 + |b''|/b^2)`; `C1`, `C2`
/// are fitted as the tightest constants consistent with the grid and must be finite and positive.
pub fn certify_ell_bounds(family: Family, law: &DampingLaw, cfg: &ZoneConfig, grid: &[(f64, f64)]) -> Result<CertReport> {
    for &(t, k) in grid {
        if classify(family, law, cfg, t, k)? != Zone::Elliptic {
            return Err(domain(format!("grid point (t = {t}, k = {k}) is not elliptic")));
        }
    }
    let c3 = law.lambda() / law.mu();
    let base_r = |t: f64| {
        let d = law.derivs(t);
        d.db * d.db / (d.b * d.b * d.b) + d.d2b.abs() / (d.b * d.b)
    };
    let mut up_slack = f64::INFINITY;
    let mut lo_slack = f64::INFINITY;
    let mut vu = 0;
    let mut vl = 0;
    let (c_upper, c_lower);
    // sup_k |r| per time for the exponent fit
    let mut rem: Vec<(f64, f64)> = Vec::new();
    let mut push_rem = |t: f64, r: f64| match rem.last_mut() {
        Some(last) if last.0 == t => last.1 = last.1.max(r),
        _ => rem.push((t, r)),
    };
    match family {
        Family::V => {
            c_upper = 1.0;
            c_lower = c3 + 2.0;
            for &(t, k) in grid {
                let d = law.derivs(t);
                let s = symbol_derivs(family, law, t, k);
                let rate = elliptic_rate(family, law, t, k);
                let rv = d.d2b / (8.0 * s.m.abs());
                let upper = -k * k / d.b + d.db / d.b + rv.abs();
                let lower = -c_lower * k * k / d.b + d.db / d.b - base_r(t);
                // Slacks are scaled by b so that they are comparable across time.
                let su = (upper - rate) / d.b;
                let sl = (rate - lower) / d.b;
                let tol = 1e-13;
                if su < -tol {
                    vu += 1;
                }
                if sl < -tol {
                    vl += 1;
                }
                up_slack = up_slack.min(su);
                lo_slack = lo_slack.min(sl);
                push_rem(t, rv.abs());
            }
        }
        Family::U => {
            // Fit C1 (largest admissible) and C2 (smallest admissible) on k > 0 points.
            let mut c1 = f64::INFINITY;
            let mut c2: f64 = 0.0;
            for &(t, k) in grid {
                let b = law.b(t);
                let rate = elliptic_rate(family, law, t, k);
                let ru = 2.0 * base_r(t);
                push_rem(t, ru);
                if k > 0.0 {
                    c1 = c1.min((ru - rate) * b / (k * k));
                    c2 = c2.max((-rate - ru) * b / (k * k));
                }
            }
            c_upper = c1;
            c_lower = c2;
            for &(t, k) in grid {
                let b = law.b(t);
                let rate = elliptic_rate(family, law, t, k);
                let ru = 2.0 * base_r(t);
                let su = (-c1 * k * k / b + ru - rate) / b;
                let sl = (rate + c2 * k * k / b + ru) / b;
                let tol = 1e-12;
                if su < -tol {
                    vu += 1;
                }
                if sl < -tol {
                    vl += 1;
                }
                up_slack = up_slack.min(su);
                lo_slack = lo_slack.min(sl);
            }
            if !(c1 > 0.0 && c1.is_finite() && c2.is_finite()) {
                vu += 1;
            }
        }
    }
    let ts: Vec<f64> = rem.iter().map(|p| p.0).collect();
    let rs: Vec<f64> = rem.iter().map(|p| p.1).collect();
    let remainder_exponent = if ts.len() >= 2 { loglog_slope(&ts, &rs) } else { f64::NAN };
    let target = 2.0 - law.lambda();
    let remainder_constant = rem.iter().map(|&(t, r)| r * (1.0 + t).powf(target)).fold(0.0, f64::max);
    Ok(CertReport {
        family,
        points: grid.len(),
        c_upper,
        c_lower,
        min_upper_slack: up_slack,
        min_lower_slack: lo_slack,
        violations_upper: vu,
        violations_lower: vl,
        remainder_exponent,
        remainder_constant,
        pass: vu == 0 && vl == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(mu: f64, l: f64) -> DampingLaw {
        DampingLaw::new(mu, l).unwrap()
    }

    fn cfg(l: &DampingLaw, t_ell: f64) -> ZoneConfig {
        ZoneConfig::new(l, 0.1, 2.0, t_ell, l.mu() * 2.0).unwrap()
    }

    #[test]
    fn symbol_examples() {
        assert!(symbol(Family::V, &law(2.0, 0.0), 3.0, 1.0).unwrap().m.abs() < 1e-15);
        assert!((symbol(Family::V, &law(2.0, 0.5), 0.0, 0.0).unwrap().m + 0.5).abs() < 1e-15);
        assert!((symbol(Family::U, &law(2.0, 0.5), 0.0, 0.0).unwrap().m + 1.5).abs() < 1e-15);
        assert!(symbol(Family::U, &law(2.0, 0.5), -1.0, 0.0).is_err());
    }

    #[test]
    fn sqrt_derivative_matches_finite_difference() {
        let l = law(1.0, 0.5);
        for fam in [Family::V, Family::U] {
            for &(t, k) in &[(10.0, 0.01), (50.0, 0.3), (3.0, 2.0)] {
                let h = 1e-5;
                let sv = symbol(fam, &l, t, k).unwrap();
                let fd = (symbol(fam, &l, t + h, k).unwrap().sqrt_abs_m - symbol(fam, &l, t - h, k).unwrap().sqrt_abs_m) / (2.0 * h);
                assert!((sv.d_sqrt_abs_m - fd).abs() < 1e-8, "{fam} {t} {k}");
                assert!((sv.sqrt_abs_m.powi(2) - sv.m.abs()).abs() <= 1e-12 * sv.m.abs());
            }
        }
    }

    #[test]
    fn classify_examples() {
        let l = law(2.0, 0.0);
        let c = cfg(&l, 0.0);
        assert_eq!(classify(Family::V, &l, &c, 5.0, 10.0).unwrap(), Zone::Hyperbolic);
        assert_eq!(classify(Family::V, &l, &c, 5.0, 0.5).unwrap(), Zone::Elliptic);
        assert_eq!(classify(Family::V, &l, &c, 5.0, 1.0).unwrap(), Zone::Reduced);
        assert_eq!(classify(Family::V, &l, &c, 5.0, 1.5).unwrap(), Zone::PseudoDiff);
        let c = cfg(&l, 10.0);
        assert_eq!(classify(Family::V, &l, &c, 5.0, 0.5).unwrap(), Zone::BoundedResidual);
    }

    #[test]
    fn t_xi_examples() {
        let l = law(2.0, 0.0);
        assert_eq!(t_xi(Family::V, &l, &cfg(&l, 0.0), 0.5).unwrap(), Boundary::Infinite);
        let l = law(1.0, 0.5);
        let c = cfg(&l, 10.0);
        assert_eq!(t_xi(Family::V, &l, &c, 0.9).unwrap(), Boundary::None);
        assert_eq!(t_xi(Family::V, &l, &c, 0.0).unwrap(), Boundary::Infinite);
        let ts = t_xi(Family::V, &l, &c, 0.01).unwrap().finite().unwrap();
        let sv = symbol(Family::V, &l, ts, 0.01).unwrap();
        assert!((sv.sqrt_abs_m - 0.1 * l.b(ts)).abs() < 1e-9);
    }

    #[test]
    fn t_xi_agrees_with_grid_scan() {
        let l = law(1.0, 0.5);
        let c = cfg(&l, 10.0);
        let k = 0.01;
        let ts = t_xi(Family::V, &l, &c, k).unwrap().finite().unwrap();
        // brute-force scan with step 1e-4 around the located boundary
        let mut last = None;
        let mut t = ts - 1.0;
        while t < ts + 1.0 {
            if classify(Family::V, &l, &c, t, k).unwrap() == Zone::Elliptic {
                last = Some(t);
            }
            t += 1e-4;
        }
        assert!((last.unwrap() - ts).abs() <= 1e-4 + 1e-9);
    }

    #[test]
    fn xi_t_values() {
        let l = law(2.0, 0.0);
        let x = xi_t(Family::V, &l, &cfg(&l, 0.0), 5.0).unwrap().unwrap();
        assert!((x - 0.96f64.sqrt()).abs() < 1e-14);
        let l = law(1.0, 0.5);
        let c = cfg(&l, 10.0);
        assert_eq!(xi_t(Family::V, &l, &c, 5.0).unwrap(), None);
        for &t in &[20.0, 100.0, 1e4] {
            let a = xi_t(Family::V, &l, &c, t).unwrap().unwrap();
            let b = xi_t_bisect(Family::V, &l, &c, t).unwrap();
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn certification_constant_coefficient_k0() {
        let l = law(2.0, 0.0);
        let c = cfg(&l, 0.0);
        let grid: Vec<(f64, f64)> = (1..10).map(|i| (i as f64 * 10.0, 0.0)).collect();
        let r = certify_ell_bounds(Family::V, &l, &c, &grid).unwrap();
        assert!(r.pass);
        assert!(r.min_upper_slack >= 0.0 && r.min_lower_slack >= 0.0);
    }

    #[test]
    fn certification_standard_grid() {
        let l = law(1.0, 0.5);
        let c = ZoneConfig::default_for(&l);
        let g = standard_grid(Family::V, &l, &c, 1e2, 1e5, 30, 12, 0.5).unwrap();
        let r = certify_ell_bounds(Family::V, &l, &c, &g).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.remainder_exponent + 1.5).abs() < 0.1, "{r:?}");
        let g = standard_grid(Family::U, &l, &c, 1e2, 1e5, 30, 12, 0.5).unwrap();
        let r = certify_ell_bounds(Family::U, &l, &c, &g).unwrap();
        assert!(r.pass, "{r:?}");
        assert!((r.remainder_exponent + 1.5).abs() < 0.1, "{r:?}");
    }
}
