//! Frequency-space propagators: the wave multipliers `Phi_1`, `Phi_2` of both
//! families and the Green matrix of the linearized first-order system
//! `(v, u)' = [[0, -k], [k, -b]] (v, u)`, integrated with Dormand–Prince 5(4).
//!
//! For frequencies in the oscillatory range the damped-energy rescaling
//! `y -> exp(1/2 int_s^t b) y` is applied internally, so the integrator tracks
//! O(1) quantities instead of sub-exponentially small ones.

use crate::damping::DampingLaw;
use crate::error::{domain, Error, Result};
use crate::ode::{dopri5_until, OdeOptions};
use crate::zones::{symbol_derivs, Family};
use serde::{Deserialize, Serialize};

/// When to integrate the rescaled system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rescale {
    /// Rescale iff the symbol is nonnegative at the initial or the final output time
    /// (the solution is oscillatory somewhere on the interval and then decays like `exp(-1/2 int b)`).
    Auto,
    Never,
    Always,
}

/// Options shared by all propagator solves.
#[derive(Debug, Clone, Copy)]
pub struct PropagatorOptions {
    pub ode: OdeOptions,
    pub rescale: Rescale,
    /// Stop integrating once `exp(-1/2 int b) * |rescaled state|` falls below this value
    /// (rescaled solves only); later outputs are reported as exact zeros.
    pub cutoff: Option<f64>,
}

impl Default for PropagatorOptions {
    fn default() -> Self {
        Self { ode: OdeOptions::default(), rescale: Rescale::Auto, cutoff: None }
    }
}

impl PropagatorOptions {
    /// Purely relative error control, for tracking solutions that become very small.
    pub fn relative(rtol: f64) -> Self {
        Self { ode: OdeOptions { rtol, atol: 1e-300, ..OdeOptions::default() }, ..Self::default() }
    }
}

/// One multiplier sample at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierSample {
    pub t: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub dphi1: f64,
    pub dphi2: f64,
}

impl MultiplierSample {
    pub fn wronskian(&self) -> f64 {
        self.phi1 * self.dphi2 - self.dphi1 * self.phi2
    }
}

/// Multipliers of one family at fixed `(k, s)` over a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub family: Family,
    pub k: f64,
    pub s: f64,
    pub samples: Vec<MultiplierSample>,
}

/// The 2x2 Green matrix `G(t, s, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenMatrix {
    pub k: f64,
    pub s: f64,
    pub t: f64,
    pub g11: f64,
    pub g12: f64,
    pub g21: f64,
    pub g22: f64,
}

impl GreenMatrix {
    pub fn det(&self) -> f64 {
        self.g11 * self.g22 - self.g12 * self.g21
    }

    pub fn max_abs(&self) -> f64 {
        self.g11.abs().max(self.g12.abs()).max(self.g21.abs()).max(self.g22.abs())
    }

    /// Elementwise maximum absolute difference.
    pub fn max_diff(&self, other: &GreenMatrix) -> f64 {
        (self.g11 - other.g11)
            .abs()
            .max((self.g12 - other.g12).abs())
            .max((self.g21 - other.g21).abs())
            .max((self.g22 - other.g22).abs())
    }

    /// Matrix product `self * rhs`.
    pub fn compose(&self, rhs: &GreenMatrix) -> GreenMatrix {
        GreenMatrix {
            k: self.k,
            s: rhs.s,
            t: self.t,
            g11: self.g11 * rhs.g11 + self.g12 * rhs.g21,
            g12: self.g11 * rhs.g12 + self.g12 * rhs.g22,
            g21: self.g21 * rhs.g11 + self.g22 * rhs.g21,
            g22: self.g21 * rhs.g12 + self.g22 * rhs.g22,
        }
    }

    /// Applies the matrix to data `(v0, u0)`.
    pub fn apply(&self, v0: f64, u0: f64) -> (f64, f64) {
        (self.g11 * v0 + self.g12 * u0, self.g21 * v0 + self.g22 * u0)
    }
}

fn check_grid(k: f64, s: f64, t_grid: &[f64]) -> Result<()> {
    if !(k >= 0.0) || !(s >= 0.0) {
        return Err(domain(format!("require k >= 0 and s >= 0, got k = {k}, s = {s}")));
    }
    if t_grid.iter().any(|&t| !(t >= s)) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(domain("time grid must be nondecreasing and start at or after s".to_string()));
    }
    Ok(())
}

fn tag_k(e: Error, k: f64) -> Error {
    match e {
        Error::StepUnderflow { t, .. } => Error::StepUnderflow { t, k },
        other => other,
    }
}

fn use_rescaled(opts: &PropagatorOptions, m_at_s: f64, m_at_end: f64) -> bool {
    match opts.rescale {
        Rescale::Auto => m_at_s >= 0.0 || m_at_end >= 0.0,
        Rescale::Never => false,
        Rescale::Always => true,
    }
}

/// Integrates the wave equation of `family` from the canonical data at `s`, returning
/// `Phi_1`, `Phi_2` and their time derivatives on `t_grid`.
pub fn solve_multipliers(family: Family, law: &DampingLaw, k: f64, s: f64, t_grid: &[f64]) -> Result<Multipliers> {
    solve_multipliers_with(family, law, k, s, t_grid, &PropagatorOptions::default())
}

pub fn solve_multipliers_with(
    family: Family,
    law: &DampingLaw,
    k: f64,
    s: f64,
    t_grid: &[f64],
    opts: &PropagatorOptions,
) -> Result<Multipliers> {
    check_grid(k, s, t_grid)?;
    let k2 = k * k;
    let m_s = symbol_derivs(family, law, s, k).m;
    let m_end = symbol_derivs(family, law, t_grid.last().copied().unwrap_or(s), k).m;
    let samples = if use_rescaled(opts, m_s, m_end) {
        // z = e^{B/2} y solves z'' + m z = 0; z(s) = y(s), z'(s) = y'(s) + b(s) y(s)/2.
        let bs = law.b(s);
        let y0 = [1.0, 0.5 * bs, 0.0, 1.0];
        let rhs = |t: f64, y: &[f64; 4]| {
            let m = symbol_derivs(family, law, t, k).m;
            [y[1], -m * y[0], y[3], -m * y[2]]
        };
        let cut = opts.cutoff;
        let (ys, _) = dopri5_until(rhs, s, y0, t_grid, &opts.ode, |_, t, y| match cut {
            Some(c) => (-0.5 * law.integral_b_unchecked(s, t)).exp() * y.iter().fold(0.0f64, |a, v| a.max(v.abs())) < c,
            None => false,
        })
        .map_err(|e| tag_k(e, k))?;
        t_grid
            .iter()
            .enumerate()
            .map(|(i, &t)| match ys.get(i) {
                Some(y) if i + 1 < ys.len() || cut.is_none() || ys.len() == t_grid.len() => {
                    let e = (-0.5 * law.integral_b_unchecked(s, t)).exp();
                    let b = law.b(t);
                    MultiplierSample {
                        t,
                        phi1: e * y[0],
                        dphi1: e * (y[1] - 0.5 * b * y[0]),
                        phi2: e * y[2],
                        dphi2: e * (y[3] - 0.5 * b * y[2]),
                    }
                }
                _ => MultiplierSample { t, phi1: 0.0, phi2: 0.0, dphi1: 0.0, dphi2: 0.0 },
            })
            .collect()
    } else {
        let rhs = |t: f64, y: &[f64; 4]| {
            let d = law.derivs(t);
            match family {
                Family::V => [y[1], -d.b * y[1] - k2 * y[0], y[3], -d.b * y[3] - k2 * y[2]],
                Family::U => [
                    y[1],
                    -d.b * y[1] - (k2 + d.db) * y[0],
                    y[3],
                    -d.b * y[3] - (k2 + d.db) * y[2],
                ],
            }
        };
        let (ys, _) = dopri5_until(rhs, s, [1.0, 0.0, 0.0, 1.0], t_grid, &opts.ode, |_, _, _| false).map_err(|e| tag_k(e, k))?;
        t_grid
            .iter()
            .zip(ys)
            .map(|(&t, y)| MultiplierSample { t, phi1: y[0], dphi1: y[1], phi2: y[2], dphi2: y[3] })
            .collect()
    };
    Ok(Multipliers { family, k, s, samples })
}

/// Green matrix on a time grid.
pub fn green_series(law: &DampingLaw, k: f64, s: f64, t_grid: &[f64], opts: &PropagatorOptions) -> Result<Vec<GreenMatrix>> {
    check_grid(k, s, t_grid)?;
    let m_s = symbol_derivs(Family::V, law, s, k).m;
    let m_end = symbol_derivs(Family::V, law, t_grid.last().copied().unwrap_or(s), k).m;
    let mk = |t: f64, y: &[f64; 4]| GreenMatrix { k, s, t, g11: y[0], g21: y[1], g12: y[2], g22: y[3] };
    if use_rescaled(opts, m_s, m_end) {
        // (p, q) = e^{B/2} (v, u): p' = b p/2 - k q, q' = k p - b q/2.
        let rhs = |t: f64, y: &[f64; 4]| {
            let hb = 0.5 * law.b(t);
            [hb * y[0] - k * y[1], k * y[0] - hb * y[1], hb * y[2] - k * y[3], k * y[2] - hb * y[3]]
        };
        let cut = opts.cutoff;
        let (ys, _) = dopri5_until(rhs, s, [1.0, 0.0, 0.0, 1.0], t_grid, &opts.ode, |_, t, y| match cut {
            Some(c) => (-0.5 * law.integral_b_unchecked(s, t)).exp() * y.iter().fold(0.0f64, |a, v| a.max(v.abs())) < c,
            None => false,
        })
        .map_err(|e| tag_k(e, k))?;
        let full = ys.len() == t_grid.len();
        Ok(t_grid
            .iter()
            .enumerate()
            .map(|(i, &t)| match ys.get(i) {
                // The sample that triggered the cutoff is reported as zero as well.
                Some(y) if full || i + 1 < ys.len() => {
                    let e = (-0.5 * law.integral_b_unchecked(s, t)).exp();
                    mk(t, &[e * y[0], e * y[1], e * y[2], e * y[3]])
                }
                _ => mk(t, &[0.0; 4]),
            })
            .collect())
    } else {
        let rhs = |t: f64, y: &[f64; 4]| {
            let b = law.b(t);
            [-k * y[1], k * y[0] - b * y[1], -k * y[3], k * y[2] - b * y[3]]
        };
        let (ys, _) = dopri5_until(rhs, s, [1.0, 0.0, 0.0, 1.0], t_grid, &opts.ode, |_, _, _| false).map_err(|e| tag_k(e, k))?;
        Ok(t_grid.iter().zip(ys).map(|(&t, y)| mk(t, &y)).collect())
    }
}

/// Green matrix `G(t, s, k)` of the linearized system.
pub fn green(law: &DampingLaw, k: f64, s: f64, t: f64) -> Result<GreenMatrix> {
    green_with(law, k, s, t, &PropagatorOptions::default())
}

pub fn green_with(law: &DampingLaw, k: f64, s: f64, t: f64, opts: &PropagatorOptions) -> Result<GreenMatrix> {
    if !(t >= s) {
        return Err(domain(format!("require s <= t, got s = {s}, t = {t}")));
    }
    Ok(green_series(law, k, s, &[t], opts)?[0])
}

/// Green matrix assembled from the two families' multipliers at the last common sample.
pub fn reconstruct_green(mult_v: &Multipliers, mult_u: &Multipliers, law: &DampingLaw) -> Result<GreenMatrix> {
    if mult_v.family != Family::V || mult_u.family != Family::U {
        return Err(Error::Usage("reconstruct_green expects (V, U) multipliers".into()));
    }
    let (sv, su) = match (mult_v.samples.last(), mult_u.samples.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Usage("empty multiplier records".into())),
    };
    if mult_v.k != mult_u.k || mult_v.s != mult_u.s || sv.t != su.t {
        return Err(Error::Usage(format!(
            "mismatched multiplier records: (k, s, t) = ({}, {}, {}) vs ({}, {}, {})",
            mult_v.k, mult_v.s, sv.t, mult_u.k, mult_u.s, su.t
        )));
    }
    Ok(reconstruct_from_samples(mult_v.k, mult_v.s, sv, su, law))
}

/// `g11 = Phi1v`, `g12 = -k Phi2v`, `g21 = k Phi2u`, `g22 = Phi1u - b(s) Phi2u`.
pub fn reconstruct_from_samples(k: f64, s: f64, v: &MultiplierSample, u: &MultiplierSample, law: &DampingLaw) -> GreenMatrix {
    GreenMatrix {
        k,
        s,
        t: v.t,
        g11: v.phi1,
        g12: -k * v.phi2,
        g21: k * u.phi2,
        g22: u.phi1 - law.b(s) * u.phi2,
    }
}

/// Relative defect `|G(t,s) - G(t-s,0)|_max / |G(t,s)|_max` of time-translation invariance.
pub fn translation_probe(law: &DampingLaw, k: f64, s: f64, t: f64) -> Result<f64> {
    if !(s >= 0.0) || !(t >= s) {
        return Err(domain(format!("require 0 <= s <= t, got s = {s}, t = {t}")));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    let g = green(law, k, s, t)?;
    let g0 = green(law, k, 0.0, t - s)?;
    Ok(g.max_diff(&g0) / g.max_abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(mu: f64, l: f64) -> DampingLaw {
        DampingLaw::new(mu, l).unwrap()
    }

    fn grid(s: f64, t: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| s + (t - s) * i as f64 / n as f64).collect()
    }

    #[test]
    fn v_family_k0_constant_damping() {
        let m = solve_multipliers(Family::V, &law(2.0, 0.0), 0.0, 0.0, &grid(0.0, 5.0, 10)).unwrap();
        for smp in &m.samples {
            assert!((smp.phi2 - (1.0 - (-2.0 * smp.t).exp()) / 2.0).abs() < 1e-10);
            assert!((smp.phi1 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn v_family_double_root() {
        let m = solve_multipliers(Family::V, &law(2.0, 0.0), 1.0, 0.0, &grid(0.0, 8.0, 16)).unwrap();
        for smp in &m.samples {
            let t = smp.t;
            assert!((smp.phi1 - (-t).exp() * (1.0 + t)).abs() < 1e-10);
            assert!((smp.phi2 - t * (-t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn u_family_k0_closed_form() {
        let l = law(1.0, 0.5);
        let s = 2.0;
        let ts = grid(s, 30.0, 14);
        let m = solve_multipliers(Family::U, &l, 0.0, s, &ts).unwrap();
        for smp in &m.samples {
            let big_b = l.integral_b(s, smp.t).unwrap();
            let inner = crate::quad::adaptive(|tau| l.integral_b(s, tau).unwrap().exp(), s, smp.t, 1e-13, 1e-13).unwrap();
            let phi1 = (-big_b).exp() * (1.0 + l.b(s) * inner);
            let phi2 = (-big_b).exp() * inner;
            assert!((smp.phi1 - phi1).abs() < 1e-9 * phi1.abs().max(1.0), "t = {}", smp.t);
            assert!((smp.phi2 - phi2).abs() < 1e-9 * phi2.abs().max(1.0));
        }
        let m = solve_multipliers(Family::U, &law(2.0, 0.0), 0.0, 0.0, &grid(0.0, 10.0, 5)).unwrap();
        assert!(m.samples.iter().all(|x| (x.phi1 - 1.0).abs() < 1e-10));
    }

    #[test]
    fn green_k0_and_identity() {
        let l = law(1.0, 0.5);
        let g = green(&l, 0.0, 1.0, 9.0).unwrap();
        assert!((g.g11 - 1.0).abs() < 1e-12 && g.g12 == 0.0 && g.g21 == 0.0);
        assert!((g.g22 - l.vorticity_factor(1.0, 9.0).unwrap()).abs() < 1e-11);
        let g = green(&l, 0.7, 3.0, 3.0).unwrap();
        assert_eq!((g.g11, g.g12, g.g21, g.g22), (1.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn reconstruction_matches_direct_green() {
        let l = law(1.0, 0.5);
        for &(k, s, t) in &[(0.1, 10.0, 40.0), (0.05, 20.0, 200.0), (2.0, 0.0, 30.0), (0.0, 1.0, 5.0)] {
            let g = green(&l, k, s, t).unwrap();
            let mv = solve_multipliers(Family::V, &l, k, s, &[t]).unwrap();
            let mu = solve_multipliers(Family::U, &l, k, s, &[t]).unwrap();
            let r = reconstruct_green(&mv, &mu, &l).unwrap();
            assert!(g.max_diff(&r) < 1e-8, "k={k} s={s} t={t}: {g:?} vs {r:?}");
        }
    }

    #[test]
    fn reconstruction_k0_cancellation() {
        let l = law(2.0, 0.0);
        let mv = solve_multipliers(Family::V, &l, 0.0, 1.0, &[4.0]).unwrap();
        let mu = solve_multipliers(Family::U, &l, 0.0, 1.0, &[4.0]).unwrap();
        let r = reconstruct_green(&mv, &mu, &l).unwrap();
        assert!((r.g22 - (-6f64).exp()).abs() < 1e-10);
        assert_eq!(r.g12, 0.0);
        assert_eq!(r.g21, 0.0);
        let bad = solve_multipliers(Family::U, &l, 0.1, 1.0, &[4.0]).unwrap();
        assert!(reconstruct_green(&mv, &bad, &l).is_err());
    }

    #[test]
    fn translation_probe_values() {
        assert!(translation_probe(&law(1.0, 0.0), 0.3, 5.0, 20.0).unwrap() < 1e-8);
        assert_eq!(translation_probe(&law(1.0, 0.5), 0.3, 0.0, 20.0).unwrap(), 0.0);
        assert!(translation_probe(&law(1.0, 0.5), 0.1, 10.0, 40.0).unwrap() > 0.1);
    }

    #[test]
    fn rescaled_and_direct_agree() {
        let l = law(1.0, 0.5);
        let ts = grid(0.0, 60.0, 30);
        for &k in &[0.8, 3.0] {
            let a = green_series(&l, k, 0.0, &ts, &PropagatorOptions { rescale: Rescale::Always, ..Default::default() }).unwrap();
            let b = green_series(&l, k, 0.0, &ts, &PropagatorOptions { rescale: Rescale::Never, ..Default::default() }).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!(x.max_diff(y) < 1e-8);
            }
        }
    }

    #[test]
    fn cutoff_zeroes_decayed_tail() {
        let l = law(1.0, 0.0);
        let ts = grid(0.0, 200.0, 200);
        let opts = PropagatorOptions { cutoff: Some(1e-20), ..Default::default() };
        let g = green_series(&l, 5.0, 0.0, &ts, &opts).unwrap();
        assert_eq!(g.len(), ts.len());
        assert_eq!(g.last().unwrap().max_abs(), 0.0);
        let full = green_series(&l, 5.0, 0.0, &ts, &PropagatorOptions::default()).unwrap();
        for (a, b) in g.iter().zip(&full) {
            assert!(a.max_diff(b) < 1e-19);
        }
    }
}
