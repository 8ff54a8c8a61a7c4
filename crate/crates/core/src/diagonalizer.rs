//! Elliptic-zone diagonalization of the rescaled wave equations.
//!
//! With `a = sqrt|m|` and `V = (a w, D_t w)`, `D_t = -i d/dt`, the equation
//! `w'' + m w = 0` (`m < 0`) becomes `D_t V = A V`. Conjugating with the
//! constant matrix `M` and the time-dependent `N1 = I + N^(1)` leaves a diagonal
//! part plus the integrable remainder `R1`, and the fundamental solution is
//! `E(t,s) = exp(int_s^t a + 1/2 ln(a(t)/a(s))) M N1(t) Q(t,s) N1(s)^(-1) M^(-1)`
//! where `Q` solves a Volterra equation of the second kind.

use crate::cmat::{CMat2, C64, I};
use crate::damping::DampingLaw;
use crate::error::{domain, Error, Result};
use crate::ode::{dopri5, OdeOptions};
use crate::quad::{adaptive_geometric, gauss_legendre};
use crate::zones::{classify, symbol_derivs, Family, Zone, ZoneConfig};
use serde::{Deserialize, Serialize};

/// How the right-hand conjugation factor of `E` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conjugation {
    /// `N1(s)^(-1)`: the factor at the initial time (exact fundamental solution).
    InitialTime,
    /// `N1(t)^(-1)`: both factors at the terminal time.
    TerminalTime,
}

/// `a = sqrt|m|` with its first two time derivatives (elliptic points, `m < 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootDerivs {
    pub a: f64,
    pub da: f64,
    pub d2a: f64,
}

pub fn root_derivs(family: Family, law: &DampingLaw, t: f64, k: f64) -> RootDerivs {
    let s = symbol_derivs(family, law, t, k);
    let a = (-s.m).sqrt();
    let da = -s.dm / (2.0 * a);
    let d2a = (-0.5 * s.d2m - da * da) / a;
    RootDerivs { a, da, d2a }
}

/// All matrices of the diagonalization at one elliptic point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagFrame {
    pub t: f64,
    pub k: f64,
    pub root: RootDerivs,
    pub a_mat: CMat2,
    pub m: CMat2,
    pub m_inv: CMat2,
    pub d: CMat2,
    pub r: CMat2,
    pub f0: CMat2,
    /// `N^(1) = n J` with `n = a'/(4 a^2)`, `J = [[0, 1], [-1, 0]]`.
    pub n1_part: CMat2,
    pub n1: CMat2,
    pub r1: CMat2,
}

pub fn m_matrix() -> CMat2 {
    CMat2::new(I, -I, C64::from(1.0), C64::from(1.0))
}

pub fn m_inverse() -> CMat2 {
    CMat2::new(-I, C64::from(1.0), I, C64::from(1.0)).scale(C64::from(0.5))
}

fn j_matrix() -> CMat2 {
    CMat2::real(0.0, 1.0, -1.0, 0.0)
}

fn frame_from_root(t: f64, k: f64, rd: RootDerivs, n_coeff: f64) -> Result<DiagFrame> {
    let RootDerivs { a, da, d2a } = rd;
    let c = -I * (da / (2.0 * a)); // D_t a / (2a)
    let a_mat = CMat2::new(-I * (da / a), C64::from(a), C64::from(-a), C64::from(0.0));
    let d = CMat2::diag(-I * a, I * a);
    let r = CMat2::new(c, -c, -c, c);
    let f0 = CMat2::diag(c, c);
    let n = n_coeff * da / (a * a);
    // d/dt of n for the standard coefficient; scaled consistently for other coefficients.
    let dn = n_coeff * (d2a / (a * a) - 2.0 * da * da / (a * a * a));
    let n1_part = j_matrix().scale(C64::from(n));
    let n1 = CMat2::identity() + n1_part;
    let dt_n1 = j_matrix().scale(-I * dn);
    let n1_inv = n1.inverse().ok_or_else(|| Error::NonConvergence(format!("N1 singular at t = {t}, k = {k}")))?;
    let r1 = -(n1_inv * (dt_n1 - r * n1_part + n1_part * f0));
    Ok(DiagFrame { t, k, root: rd, a_mat, m: m_matrix(), m_inv: m_inverse(), d, r, f0, n1_part, n1, r1 })
}

fn require_elliptic(family: Family, law: &DampingLaw, cfg: &ZoneConfig, t: f64, k: f64) -> Result<()> {
    match classify(family, law, cfg, t, k)? {
        Zone::Elliptic => Ok(()),
        z => Err(domain(format!("(t = {t}, k = {k}) lies in zone {} for family {family}, not Elliptic", z.name()))),
    }
}

/// Builds the diagonalization frame at an elliptic point.
pub fn build_frame(family: Family, law: &DampingLaw, cfg: &ZoneConfig, t: f64, k: f64) -> Result<DiagFrame> {
    require_elliptic(family, law, cfg, t, k)?;
    frame_from_root(t, k, root_derivs(family, law, t, k), 0.25)
}

/// Frame built with a different coefficient in `N^(1) = coeff * a'/a^2 * J`
/// (`0.25` is the value that solves the commutator equation).
pub fn build_frame_with_coefficient(family: Family, law: &DampingLaw, cfg: &ZoneConfig, t: f64, k: f64, coeff: f64) -> Result<DiagFrame> {
    require_elliptic(family, law, cfg, t, k)?;
    frame_from_root(t, k, root_derivs(family, law, t, k), coeff)
}

impl DiagFrame {
    /// `|A - M (D + R) M^(-1)|_max`.
    pub fn conjugation_residual(&self) -> f64 {
        (self.a_mat - self.m * (self.d + self.r) * self.m_inv).max_abs()
    }

    /// `|N D - D N - (R - F0)|_max` for `N = N^(1)`.
    pub fn commutator_residual(&self) -> f64 {
        (self.n1_part * self.d - self.d * self.n1_part - (self.r - self.f0)).max_abs()
    }
}

/// Solution of the Volterra equation for `Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolterraQ {
    pub q: CMat2,
    pub h: CMat2,
    pub iterations: usize,
    pub residual: f64,
    pub panels: usize,
    /// `int_s^t |R1|_max`.
    pub r1_integral: f64,
}

struct PanelRule {
    x: Vec<f64>,
    w: Vec<f64>,
    /// `s[i][j] = int_{-1}^{x_i} l_j(x) dx`.
    s: Vec<Vec<f64>>,
}

fn panel_rule(order: usize) -> PanelRule {
    let (x, w) = gauss_legendre(order);
    let lagrange = |j: usize, y: f64| -> f64 {
        let mut p = 1.0;
        for (m, &xm) in x.iter().enumerate() {
            if m != j {
                p *= (y - xm) / (x[j] - xm);
            }
        }
        p
    };
    let mut s = vec![vec![0.0; order]; order];
    for (xi, row) in x.iter().zip(&mut s) {
        let half = 0.5 * (xi + 1.0);
        for (j, sij) in row.iter_mut().enumerate() {
            *sij = x.iter().zip(&w).map(|(&g, &gw)| half * gw * lagrange(j, -1.0 + half * (g + 1.0))).sum();
        }
    }
    PanelRule { x, w, s }
}

fn segment_breaks(s: f64, t: f64, panels: usize) -> Vec<f64> {
    let ls = s.ln_1p();
    let lt = t.ln_1p();
    (0..=panels)
        .map(|i| match i {
            0 => s,
            i if i == panels => t,
            i => (ls + (lt - ls) * i as f64 / panels as f64).exp_m1(),
        })
        .collect()
}

fn solve_q_on(family: Family, law: &DampingLaw, k: f64, s: f64, t: f64, panels: usize, rule: &PanelRule) -> Result<VolterraQ> {
    let ord = rule.x.len();
    let br = segment_breaks(s, t, panels);
    let n = panels * ord;
    let mut theta = Vec::with_capacity(n);
    let mut hw = Vec::with_capacity(panels);
    for p in 0..panels {
        let h = 0.5 * (br[p + 1] - br[p]);
        hw.push(h);
        for &x in &rule.x {
            theta.push(br[p] + h * (x + 1.0));
        }
    }
    let frames: Vec<DiagFrame> = theta
        .iter()
        .map(|&th| frame_from_root(th, k, root_derivs(family, law, th, k), 0.25))
        .collect::<Result<_>>()?;
    let a_nodes: Vec<f64> = frames.iter().map(|f| f.root.a).collect();
    // Cumulative A(theta) = int_s^theta a at nodes and at panel ends.
    let mut a_node = vec![0.0; n];
    let mut a_end = vec![0.0; panels + 1];
    let mut r1_integral = 0.0;
    for p in 0..panels {
        for i in 0..ord {
            let mut acc = 0.0;
            for j in 0..ord {
                acc += rule.s[i][j] * a_nodes[p * ord + j];
            }
            a_node[p * ord + i] = a_end[p] + hw[p] * acc;
        }
        let mut acc = 0.0;
        let mut racc = 0.0;
        for j in 0..ord {
            acc += rule.w[j] * a_nodes[p * ord + j];
            racc += rule.w[j] * frames[p * ord + j].r1.max_abs();
        }
        a_end[p + 1] = a_end[p] + hw[p] * acc;
        r1_integral += hw[p] * racc;
    }
    let h_at = |big_a: f64| CMat2::diag(C64::from(1.0), C64::from((-2.0 * big_a).exp()));
    let mut q: Vec<CMat2> = a_node.iter().map(|&x| h_at(x)).collect();
    let h_end = h_at(a_end[panels]);
    let mut q_end = h_end;
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    let zero = C64::from(0.0);
    while iterations < 50 {
        iterations += 1;
        let f: Vec<CMat2> = frames.iter().zip(&q).map(|(fr, qq)| fr.r1 * *qq).collect();
        let mut new_q = vec![CMat2::zero(); n];
        let mut c1 = [zero; 2];
        let mut j2 = [zero; 2];
        for p in 0..panels {
            let base = p * ord;
            for i in 0..ord {
                let ai = a_node[base + i];
                let mut row1 = [zero; 2];
                let mut row2 = [zero; 2];
                for l in 0..ord {
                    let wl = rule.s[i][l] * hw[p];
                    let fl = f[base + l].0;
                    let e = (-2.0 * (ai - a_node[base + l])).exp();
                    for c in 0..2 {
                        row1[c] += fl[0][c] * wl;
                        row2[c] += fl[1][c] * (wl * e);
                    }
                }
                let decay = (-2.0 * (ai - a_end[p])).exp();
                let h = h_at(ai).0;
                let mut m = [[zero; 2]; 2];
                for c in 0..2 {
                    m[0][c] = h[0][c] + I * (c1[c] + row1[c]);
                    m[1][c] = h[1][c] + I * (j2[c] * decay + row2[c]);
                }
                new_q[base + i] = CMat2(m);
            }
            let decay = (-2.0 * (a_end[p + 1] - a_end[p])).exp();
            for c in 0..2 {
                let mut s1 = zero;
                let mut s2 = zero;
                for l in 0..ord {
                    let wl = rule.w[l] * hw[p];
                    let fl = f[base + l].0;
                    s1 += fl[0][c] * wl;
                    s2 += fl[1][c] * (wl * (-2.0 * (a_end[p + 1] - a_node[base + l])).exp());
                }
                c1[c] += s1;
                j2[c] = j2[c] * decay + s2;
            }
        }
        let mut end = h_end.0;
        for c in 0..2 {
            end[0][c] += I * c1[c];
            end[1][c] += I * j2[c];
        }
        let new_end = CMat2(end);
        change = new_q.iter().zip(&q).map(|(x, y)| (*x - *y).max_abs()).fold((new_end - q_end).max_abs(), f64::max);
        q = new_q;
        q_end = new_end;
        if change <= 1e-12 {
            break;
        }
    }
    if !(change <= 1e-12) {
        return Err(Error::NonConvergence(format!("Picard iteration for Q stalled with change {change:e}")));
    }
    Ok(VolterraQ { q: q_end, h: h_end, iterations, residual: change, panels, r1_integral })
}

fn require_elliptic_segment(family: Family, law: &DampingLaw, cfg: &ZoneConfig, k: f64, s: f64, t: f64) -> Result<()> {
    if !(s >= 0.0) || !(t >= s) {
        return Err(domain(format!("require 0 <= s <= t, got s = {s}, t = {t}")));
    }
    for &tau in &segment_breaks(s, t, 64) {
        require_elliptic(family, law, cfg, tau, k)?;
    }
    Ok(())
}

/// Solves the Volterra equation for `Q(t, s)` by Picard iteration on composite
/// 8-point Gauss panels, doubling the panel count until the result stabilizes.
pub fn solve_q(family: Family, law: &DampingLaw, cfg: &ZoneConfig, k: f64, s: f64, t: f64) -> Result<VolterraQ> {
    require_elliptic_segment(family, law, cfg, k, s, t)?;
    let h = CMat2::identity();
    if t == s {
        return Ok(VolterraQ { q: h, h, iterations: 0, residual: 0.0, panels: 0, r1_integral: 0.0 });
    }
    let rule = panel_rule(8);
    // Initial panels: ratio (1+t)/(1+s) per panel at most 1.25 and at most unit phase 2 int a.
    let int_a = root_derivs(family, law, s, k).a.max(root_derivs(family, law, t, k).a) * (t - s);
    let mut panels = ((t.ln_1p() - s.ln_1p()) / 1.25f64.ln()).ceil().max((2.0 * int_a).ceil()).max(2.0) as usize;
    let mut prev = solve_q_on(family, law, k, s, t, panels, &rule)?;
    for _ in 0..6 {
        panels *= 2;
        let next = solve_q_on(family, law, k, s, t, panels, &rule)?;
        let diff = (next.q - prev.q).max_abs();
        prev = next;
        if diff <= 1e-12 {
            break;
        }
    }
    Ok(prev)
}

/// `int_s^t a` by adaptive quadrature.
pub fn integral_root(family: Family, law: &DampingLaw, k: f64, s: f64, t: f64) -> Result<f64> {
    adaptive_geometric(|tau| root_derivs(family, law, tau, k).a, s, t, 16, 1e-14, 1e-13)
}

/// Fundamental solution `E(t, s)` of `D_t V = A V` from the diagonalization.
pub fn reconstruct_e(family: Family, law: &DampingLaw, cfg: &ZoneConfig, k: f64, s: f64, t: f64) -> Result<CMat2> {
    reconstruct_e_with(family, law, cfg, k, s, t, Conjugation::InitialTime)
}

/// `E~(t, s) = M N1(t) Q N1(.)^(-1) M^(-1)` (without the scalar growth factor).
pub fn reduced_e(family: Family, law: &DampingLaw, cfg: &ZoneConfig, k: f64, s: f64, t: f64, conj: Conjugation) -> Result<CMat2> {
    let q = solve_q(family, law, cfg, k, s, t)?;
    let ft = frame_from_root(t, k, root_derivs(family, law, t, k), 0.25)?;
    let right = match conj {
        Conjugation::InitialTime => frame_from_root(s, k, root_derivs(family, law, s, k), 0.25)?.n1,
        Conjugation::TerminalTime => ft.n1,
    };
    let right_inv = right.inverse().ok_or_else(|| Error::NonConvergence("N1 singular".into()))?;
    Ok(m_matrix() * ft.n1 * q.q * right_inv * m_inverse())
}

pub fn reconstruct_e_with(family: Family, law: &DampingLaw, cfg: &ZoneConfig, k: f64, s: f64, t: f64, conj: Conjugation) -> Result<CMat2> {
    if t == s {
        require_elliptic(family, law, cfg, s, k)?;
        return Ok(CMat2::identity());
    }
    let e_tilde = reduced_e(family, law, cfg, k, s, t, conj)?;
    let growth = integral_root(family, law, k, s, t)? + 0.5 * (root_derivs(family, law, t, k).a / root_derivs(family, law, s, k).a).ln();
    Ok(e_tilde.scale(C64::from(growth.exp())))
}

/// Fundamental matrix of `V' = i A V` by direct integration of its real 8-dimensional form.
pub fn direct_fundamental(family: Family, law: &DampingLaw, k: f64, s: f64, t: f64) -> Result<CMat2> {
    let rhs = |tau: f64, y: &[f64; 8]| {
        let rd = root_derivs(family, law, tau, k);
        let g = rd.da / rd.a;
        let a = rd.a;
        let mut out = [0.0; 8];
        for c in 0..2 {
            // column c: (X1, Y1, X2, Y2)
            let (x1, y1, x2, y2) = (y[4 * c], y[4 * c + 1], y[4 * c + 2], y[4 * c + 3]);
            out[4 * c] = g * x1 - a * y2;
            out[4 * c + 1] = g * y1 + a * x2;
            out[4 * c + 2] = a * y1;
            out[4 * c + 3] = -a * x1;
        }
        out
    };
    let y0 = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    let opts = OdeOptions { rtol: 1e-12, atol: 1e-14, ..OdeOptions::default() };
    let (ys, _) = dopri5(rhs, s, y0, &[t], &opts)?;
    let y = ys[0];
    Ok(CMat2::new(C64::new(y[0], y[1]), C64::new(y[4], y[5]), C64::new(y[2], y[3]), C64::new(y[6], y[7])))
}

/// Maximum elementwise deviation between the reconstructed and directly integrated
/// fundamental matrices, relative to the largest entry of the direct solution.
pub fn equivalence_check(family: Family, law: &DampingLaw, cfg: &ZoneConfig, k: f64, s: f64, t: f64) -> Result<f64> {
    equivalence_check_with(family, law, cfg, k, s, t, Conjugation::InitialTime)
}

pub fn equivalence_check_with(family: Family, law: &DampingLaw, cfg: &ZoneConfig, k: f64, s: f64, t: f64, conj: Conjugation) -> Result<f64> {
    if t == s {
        return Ok(0.0);
    }
    let e = reconstruct_e_with(family, law, cfg, k, s, t, conj)?;
    let f = direct_fundamental(family, law, k, s, t)?;
    Ok((e - f).max_abs() / f.max_abs())
}

/// `|E~(t,s) - 1/2 [[1, i], [-i, 1]]|_max`.
pub fn limit_deviation(family: Family, law: &DampingLaw, cfg: &ZoneConfig, k: f64, s: f64, t: f64) -> Result<f64> {
    let e = reduced_e(family, law, cfg, k, s, t, Conjugation::InitialTime)?;
    let lim = CMat2::new(C64::from(0.5), I * 0.5, -I * 0.5, C64::from(0.5));
    Ok((e - lim).max_abs())
}

/// Summary of the diagonalization checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagReport {
    pub family: Family,
    pub max_conjugation_residual: f64,
    pub max_commutator_residual: f64,
    /// Commutator residual of the variant `N^(1) = a'/(2a^2) J`.
    pub max_commutator_residual_half_coefficient: f64,
    pub equivalence_errors: Vec<(f64, f64, f64, f64)>,
    pub max_equivalence_error: f64,
    /// Same check with both conjugation factors at the terminal time.
    pub max_equivalence_error_terminal: f64,
    pub n1_exponent: f64,
    pub q_minus_h_exponent: f64,
    pub q_minus_h_constant: f64,
    pub max_picard_bound_excess: f64,
    pub t0_estimate: Option<f64>,
    pub limit_constant: f64,
}

/// OLS slope of `ln y` against `ln(1+x)`.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln_1p()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Smallest `s` in `s_grid` (ascending) from which on every probe `(k, t = c s)` satisfies
/// `|E~ - lim|_max <= 7/32`, i.e. half the distance that keeps `|E~_12| >= 1/16`.
pub fn estimate_t0(family: Family, law: &DampingLaw, cfg: &ZoneConfig, ks: &[f64], s_grid: &[f64], t_factors: &[f64]) -> Result<Option<f64>> {
    let mut ok = vec![true; s_grid.len()];
    for (i, &s) in s_grid.iter().enumerate() {
        for &k in ks {
            for &c in t_factors {
                let t = s * c;
                match limit_deviation(family, law, cfg, k, s, t) {
                    Ok(d) if d <= 7.0 / 32.0 => {}
                    Ok(_) => ok[i] = false,
                    Err(Error::Domain(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
    }
    // first index from which all later entries hold
    let mut t0 = None;
    for i in (0..s_grid.len()).rev() {
        if ok[i] {
            t0 = Some(s_grid[i]);
        } else {
            break;
        }
    }
    Ok(t0)
}

/// Probe set of a diagonalization report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagProbes {
    /// `(k, s, t)` triples for the equivalence check.
    pub equivalence: Vec<(f64, f64, f64)>,
    /// Frequency and initial times of the `|Q - H|` fit (with `t = 4 s`).
    pub q_k: f64,
    pub q_s: Vec<f64>,
    /// Frequency and times of the `|N^(1)|` fit.
    pub n1_k: f64,
    pub n1_t: Vec<f64>,
    /// `T0` search: frequencies, initial-time grid, `t / s` factors.
    pub t0_ks: Vec<f64>,
    pub t0_s: Vec<f64>,
    pub t0_factors: Vec<f64>,
}

impl Default for DiagProbes {
    /// The standard elliptic probe set (tuned to `mu = 1`, `lambda = 0.5`).
    fn default() -> Self {
        let geo = |a: f64, b: f64, n: usize| -> Vec<f64> { (0..n).map(|i| (a.ln() + (b.ln() - a.ln()) * i as f64 / (n - 1) as f64).exp()).collect() };
        Self {
            equivalence: vec![
                (1e-3, 100.0, 400.0),
                (1e-3, 100.0, 1000.0),
                (1e-3, 300.0, 1200.0),
                (3e-3, 100.0, 400.0),
                (3e-3, 200.0, 800.0),
                (0.0, 20.0, 80.0),
            ],
            q_k: 1e-3,
            q_s: geo(100.0, 3000.0, 8),
            n1_k: 1e-3,
            n1_t: vec![1e2, 1e3, 1e4],
            t0_ks: vec![1e-3, 3e-3],
            t0_s: geo(16.0, 1000.0, 10),
            t0_factors: vec![2.0, 4.0],
        }
    }
}

/// Runs the diagonalization checks of one family on a probe set.
pub fn diag_report(family: Family, law: &DampingLaw, cfg: &ZoneConfig, probes: &DiagProbes) -> Result<DiagReport> {
    let lam = law.lambda();
    let mut conj: f64 = 0.0;
    let mut comm: f64 = 0.0;
    let mut comm_half: f64 = 0.0;
    let mut eq = Vec::new();
    let mut eq_max: f64 = 0.0;
    let mut eq_term: f64 = 0.0;
    let mut limit_constant: f64 = 0.0;
    for &(k, s, t) in &probes.equivalence {
        for tau in [s, t] {
            let f = build_frame(family, law, cfg, tau, k)?;
            conj = conj.max(f.conjugation_residual());
            comm = comm.max(f.commutator_residual());
            comm_half = comm_half.max(build_frame_with_coefficient(family, law, cfg, tau, k, 0.5)?.commutator_residual());
        }
        let e = equivalence_check(family, law, cfg, k, s, t)?;
        let e_t = equivalence_check_with(family, law, cfg, k, s, t, Conjugation::TerminalTime)?;
        eq.push((k, s, t, e));
        eq_max = eq_max.max(e);
        eq_term = eq_term.max(e_t);
        let dev = limit_deviation(family, law, cfg, k, s, t)?;
        let scale = (1.0 + s).powf(-(1.0 - lam)) + (-2.0 * cfg.eps * law.integral_b(s, t)?).exp();
        limit_constant = limit_constant.max(dev / scale);
    }
    let mut qh = Vec::new();
    let mut picard: f64 = f64::NEG_INFINITY;
    for &s in &probes.q_s {
        let q = solve_q(family, law, cfg, probes.q_k, s, 4.0 * s)?;
        let d = (q.q - q.h).max_abs();
        picard = picard.max(d - q.r1_integral.exp_m1());
        qh.push(d);
    }
    let q_minus_h_exponent = loglog_fit(&probes.q_s, &qh);
    let q_minus_h_constant = probes.q_s.iter().zip(&qh).map(|(s, d)| d * (1.0 + s).powf(1.0 - lam)).fold(0.0, f64::max);
    let n1: Vec<f64> = probes
        .n1_t
        .iter()
        .map(|&t| build_frame(family, law, cfg, t, probes.n1_k).map(|f| f.n1_part.max_abs()))
        .collect::<Result<_>>()?;
    let n1_exponent = loglog_fit(&probes.n1_t, &n1);
    let t0_estimate = estimate_t0(family, law, cfg, &probes.t0_ks, &probes.t0_s, &probes.t0_factors)?;
    Ok(DiagReport {
        family,
        max_conjugation_residual: conj,
        max_commutator_residual: comm,
        max_commutator_residual_half_coefficient: comm_half,
        equivalence_errors: eq,
        max_equivalence_error: eq_max,
        max_equivalence_error_terminal: eq_term,
        n1_exponent,
        q_minus_h_exponent,
        q_minus_h_constant,
        max_picard_bound_excess: picard,
        t0_estimate,
        limit_constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(mu: f64, l: f64) -> DampingLaw {
        DampingLaw::new(mu, l).unwrap()
    }

    #[test]
    fn frame_identities() {
        let l = law(1.0, 0.5);
        let c = ZoneConfig::default_for(&l);
        for fam in [Family::V, Family::U] {
            let f = build_frame(fam, &l, &c, 100.0, 0.001).unwrap();
            assert!(f.conjugation_residual() <= 1e-12);
            assert!(f.commutator_residual() <= 1e-12);
            assert!((f.m * f.m_inv - CMat2::identity()).max_abs() < 1e-15);
            let g = build_frame_with_coefficient(fam, &l, &c, 100.0, 0.001, 0.5).unwrap();
            assert!(g.commutator_residual() > 1e-6);
        }
        assert!(build_frame(Family::V, &l, &c, 100.0, 1.0).is_err());
    }

    #[test]
    fn r1_satisfies_conjugation_relation() {
        // (D + R) N1 - N1 (D + F0 + R1) = D_t N1 must hold pointwise.
        let l = law(1.0, 0.5);
        let c = ZoneConfig::default_for(&l);
        let (t, k) = (200.0, 0.002);
        let f = build_frame(Family::V, &l, &c, t, k).unwrap();
        let h = 1e-3;
        let np = build_frame(Family::V, &l, &c, t + h, k).unwrap().n1;
        let nm = build_frame(Family::V, &l, &c, t - h, k).unwrap().n1;
        let dt_n1 = (np - nm).scale(C64::new(0.0, -1.0 / (2.0 * h)));
        let lhs = (f.d + f.r) * f.n1 - f.n1 * (f.d + f.f0 + f.r1);
        assert!((lhs - dt_n1).max_abs() < 1e-9 * f.n1_part.max_abs().max(1e-12) + 1e-13);
    }

    #[test]
    fn constant_coefficient_frame_vanishes() {
        let l = law(2.0, 0.0);
        let c = ZoneConfig::default_for(&l);
        let f = build_frame(Family::V, &l, &c, 10.0, 0.0).unwrap();
        assert_eq!(f.n1_part.max_abs(), 0.0);
        assert_eq!(f.r.max_abs(), 0.0);
        assert_eq!(f.r1.max_abs(), 0.0);
        let q = solve_q(Family::V, &l, &c, 0.0, 1.0, 5.0).unwrap();
        assert!((q.q - q.h).max_abs() == 0.0);
        assert!((q.h.get(1, 1).re - (-2.0 * 4.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn q_identity_at_equal_times() {
        let l = law(1.0, 0.5);
        let c = ZoneConfig::default_for(&l);
        let q = solve_q(Family::V, &l, &c, 0.001, 100.0, 100.0).unwrap();
        assert_eq!(q.q, CMat2::identity());
        assert_eq!(reconstruct_e(Family::V, &l, &c, 0.001, 100.0, 100.0).unwrap(), CMat2::identity());
    }

    #[test]
    fn autonomous_fundamental_solution() {
        let l = law(2.0, 0.0);
        let c = ZoneConfig::default_for(&l);
        let e = reconstruct_e(Family::V, &l, &c, 0.0, 0.0, 3.0).unwrap();
        // A = [[0, 1], [-1, 0]] with a = 1: V' = iAV has fundamental matrix M diag(e^{t}, e^{-t}) M^{-1}.
        let exact = m_matrix() * CMat2::diag(C64::from(3f64.exp()), C64::from((-3f64).exp())) * m_inverse();
        assert!((e - exact).max_abs() < 1e-12 * exact.max_abs());
        assert!(equivalence_check(Family::V, &l, &c, 0.0, 0.0, 3.0).unwrap() < 1e-10);
    }

    #[test]
    fn standard_probe_equivalence() {
        let l = law(1.0, 0.5);
        let c = ZoneConfig::default_for(&l);
        for fam in [Family::V, Family::U] {
            let err = equivalence_check(fam, &l, &c, 1e-3, 100.0, 400.0).unwrap();
            assert!(err < 1e-5, "{fam}: {err}");
            let err_t = equivalence_check_with(fam, &l, &c, 1e-3, 100.0, 400.0, Conjugation::TerminalTime).unwrap();
            assert!(err_t > err);
        }
    }

    #[test]
    fn picard_sum_bound() {
        let l = law(1.0, 0.5);
        let c = ZoneConfig::default_for(&l);
        let q = solve_q(Family::V, &l, &c, 1e-3, 100.0, 1000.0).unwrap();
        assert!((q.q - q.h).max_abs() <= q.r1_integral.exp_m1());
        assert!(q.residual <= 1e-12);
    }

    #[test]
    fn standard_report() {
        let l = law(1.0, 0.5);
        let c = ZoneConfig::default_for(&l);
        let r = diag_report(Family::V, &l, &c, &DiagProbes::default()).unwrap();
        assert!(r.max_equivalence_error < 1e-5, "{r:?}");
        assert!((r.q_minus_h_exponent + 0.5).abs() < 0.1, "{r:?}");
        assert!((r.n1_exponent + 0.5).abs() < 0.05, "{r:?}");
        assert!(r.max_picard_bound_excess <= 0.0);
        assert!(r.max_commutator_residual <= 1e-12);
        assert!(r.max_commutator_residual_half_coefficient > 1e-6);
    }

    #[test]
    fn rejects_non_elliptic_segments() {
        let l = law(1.0, 0.5);
        let c = ZoneConfig::default_for(&l);
        // k = 0.01 leaves the elliptic zone well before t = 1e4
        assert!(solve_q(Family::V, &l, &c, 0.01, 100.0, 1e4).is_err());
    }
}
