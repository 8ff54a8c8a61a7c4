//! The acceptance suite: one check function per criterion, with pinned probe sets and
//! tolerances. Each check reports a one-line summary and structured details.

use crate::output::num;
use deul_core::diagonalizer::{diag_report, DiagProbes, DiagReport};
use deul_core::envelopes::{
    cancellation_curve, check_cancellation, check_phi_lower, check_phi_upper, elliptic_probes, hyperbolic_probes, min_integral_bound, mixed_probes,
    multipliers_at, EnvelopeConfig, EnvelopeReport, IntegralKind, Probe, ZoneCase,
};
use deul_core::nonlinear::{order_check, run_with, EulerParams, InitKind, RunOptions, RunOutput, SolverConfig, fit_energy_constant, energy_check};
use deul_core::ode::{dopri5, OdeOptions};
use deul_core::propagator::{green_series, reconstruct_from_samples, solve_multipliers_with, translation_probe, PropagatorOptions};
use deul_core::spectra::{
    evolution_options, evolve_field, evolve_norms, find_series, fit_slope, log_grid, make_profile, NodeLayout, NormKind, NormSeries, ProfileKind,
};
use deul_core::zones::{certify_ell_bounds, standard_grid, CertReport};
use deul_core::diagonalizer::estimate_t0;
use deul_core::{DampingLaw, Family, Result, ZoneConfig};
use serde::Serialize;
use serde_json::{json, Value};
use std::time::Instant;

/// Number of acceptance criteria.
pub const CRITERIA: u32 = 15;

/// Wall-clock budget of the whole suite, in seconds.
pub const SUITE_BUDGET_SECONDS: f64 = 900.0;

pub fn criterion_name(id: u32) -> &'static str {
    match id {
        1 => "linear v-rate",
        2 => "linear u-rate",
        3 => "derivative ladder",
        4 => "lambda-sweep monotonicity",
        5 => "L-infinity proxy rate",
        6 => "Green reconstruction",
        7 => "non-translation-invariance",
        8 => "diagonalization equivalence",
        9 => "elliptic growth-rate certification",
        10 => "multiplier envelope suite",
        11 => "cancellation",
        12 => "integral lemmas",
        13 => "vorticity",
        14 => "nonlinear solver",
        15 => "suite runtime and exit status",
        _ => "unknown",
    }
}

/// Suite options.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyOptions {
    /// The pinned desk-scale suite; the full suite adds grid-refinement and late-window diagnostics.
    pub quick: bool,
    /// Restrict to these criteria (all when `None`).
    pub only: Option<Vec<u32>>,
}

impl VerifyOptions {
    pub fn selected(&self, id: u32) -> bool {
        self.only.as_ref().is_none_or(|v| v.contains(&id))
    }
}

/// Result of one criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub summary: String,
    pub details: Value,
    pub seconds: f64,
}

impl CriterionResult {
    /// One status line.
    pub fn line(&self) -> String {
        format!("[{}] criterion {:>2} ({}): {} [{:.1} s]", if self.pass { "PASS" } else { "FAIL" }, self.id, self.name, self.summary, self.seconds)
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn pm(x: f64) -> String {
    format!("{x:.4}")
}

// ---------------------------------------------------------------------------------------------
// Linear decay rates

/// Predicted slope of a norm of the linear solution (hat data in `v`).
///
/// `L2`: `-(1+lambda)/2 (n/2 + a)`; `L-infinity`: `-(1+lambda)/2 (n + a)`; the `u` field decays
/// faster by the extra `(1-lambda)/2`.
pub fn predicted_rate(lambda: f64, n: usize, field: &str, kind: NormKind, order: u32) -> f64 {
    let gamma = match kind {
        NormKind::L2 => 0.5 * n as f64,
        NormKind::LinfProxy => n as f64,
    };
    let base = -0.5 * (1.0 + lambda) * (gamma + order as f64);
    if field == "u" {
        base - 0.5 * (1.0 - lambda)
    } else {
        base
    }
}

/// Tolerance on fitted slopes: 0.03 for undifferentiated `L2` rows, 0.05 otherwise.
pub fn rate_tolerance(kind: NormKind, order: u32) -> f64 {
    if kind == NormKind::L2 && order == 0 {
        0.03
    } else {
        0.05
    }
}

/// One row of a rate table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub lambda: f64,
    pub label: String,
    pub field: String,
    pub norm: &'static str,
    pub order: u32,
    pub predicted: f64,
    pub fitted: f64,
    pub stderr: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Setup of a linear rate experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSetup {
    pub n: usize,
    pub profile: ProfileKind,
    pub layout: NodeLayout,
    pub window: (f64, f64),
    pub samples: usize,
    pub orders: Vec<u32>,
}

impl Default for RateSetup {
    /// Hat data (`R = 1`) in `v`, `s = 0`, 41 log-spaced samples on `[1e2, 1e4]`, the 400-node layout.
    fn default() -> Self {
        Self { n: 2, profile: ProfileKind::Hat { r: 1.0 }, layout: NodeLayout::default(), window: (1e2, 1e4), samples: 41, orders: vec![0, 1, 2] }
    }
}

/// Evolves hat data in `v` (zero `u`) from `s = 0` and fits every norm series on the window.
pub fn linear_rates(law: &DampingLaw, setup: &RateSetup) -> Result<(Vec<NormSeries>, Vec<RateRow>)> {
    let pv = make_profile(setup.profile, setup.n, &setup.layout)?;
    let pu = pv.zeros_like();
    let mut tg = vec![0.0];
    tg.extend(log_grid(setup.window.0, setup.window.1, setup.samples));
    let ev = deul_core::spectra::Evolution { law: *law, profile_v: &pv, profile_u: &pu, profile_w: None, s: 0.0, t_grid: &tg, orders: &setup.orders };
    let series = evolve_norms(&ev)?;
    let mut rows = Vec::new();
    for s in &series {
        let fit = fit_slope(s, setup.window)?;
        let predicted = predicted_rate(law.lambda(), setup.n, &s.field, s.kind, s.order);
        let tolerance = rate_tolerance(s.kind, s.order);
        rows.push(RateRow {
            lambda: law.lambda(),
            label: s.label.clone(),
            field: s.field.clone(),
            norm: match s.kind {
                NormKind::L2 => "L2",
                NormKind::LinfProxy => "Linf",
            },
            order: s.order,
            predicted,
            fitted: fit.exponent,
            stderr: fit.stderr,
            tolerance,
            pass: within(fit.exponent, predicted, tolerance),
        });
    }
    Ok((series, rows))
}

fn row<'a>(rows: &'a [RateRow], label: &str) -> &'a RateRow {
    rows.iter().find(|r| r.label == label).expect("rate row present")
}

/// Cached rate runs shared by criteria 1-5.
#[derive(Default)]
struct RateCache {
    runs: Vec<(f64, Vec<NormSeries>, Vec<RateRow>)>,
}

impl RateCache {
    fn get(&mut self, lambda: f64) -> Result<(&[NormSeries], &[RateRow])> {
        if !self.runs.iter().any(|r| r.0 == lambda) {
            let law = DampingLaw::new(1.0, lambda)?;
            let (s, r) = linear_rates(&law, &RateSetup::default())?;
            self.runs.push((lambda, s, r));
        }
        let r = self.runs.iter().find(|r| r.0 == lambda).expect("cached");
        Ok((&r.1, &r.2))
    }
}

fn single_rate(cache: &mut RateCache, label: &str, target: f64, tol: f64, quick: bool) -> Result<(bool, String, Value)> {
    let (_, rows) = cache.get(0.5)?;
    let r = row(rows, label).clone();
    let mut pass = within(r.fitted, target, tol);
    let mut summary = format!("{label} slope {} ± {:.1e} on [1e2, 1e4], target {target} ± {tol}", pm(r.fitted), r.stderr);
    let mut details = json!({ "row": r });
    if !quick {
        let law = DampingLaw::new(1.0, 0.5)?;
        let refined = RateSetup { layout: NodeLayout::default().refined(), ..RateSetup::default() };
        let (_, rr) = linear_rates(&law, &refined)?;
        let d = (row(&rr, label).fitted - r.fitted).abs();
        pass &= d <= 1e-3;
        summary.push_str(&format!("; refined-grid slope change {d:.1e} (<= 1e-3)"));
        details["refined_slope_change"] = json!(d);
    }
    Ok((pass, summary, details))
}

fn criterion_1(cache: &mut RateCache, quick: bool) -> Result<(bool, String, Value)> {
    single_rate(cache, "v:L2:a=0", -0.75, 0.03, quick)
}

fn criterion_2(cache: &mut RateCache, quick: bool) -> Result<(bool, String, Value)> {
    single_rate(cache, "u:L2:a=0", -1.0, 0.03, quick)
}

fn criterion_3(cache: &mut RateCache, quick: bool) -> Result<(bool, String, Value)> {
    let (_, rows) = cache.get(0.5)?;
    let targets = [(0u32, -0.75), (1, -1.5), (2, -2.25)];
    let mut pass = true;
    let mut parts = Vec::new();
    let mut picked = Vec::new();
    for (a, target) in targets {
        let r = row(rows, &format!("v:L2:a={a}")).clone();
        let ok = within(r.fitted, target, 0.05);
        pass &= ok;
        parts.push(format!("a={a}: {} (target {target}{})", pm(r.fitted), if ok { "" } else { ", OUT OF TOLERANCE" }));
        picked.push(r);
    }
    let mut details = json!({ "rows": picked, "tolerance": 0.05 });
    // Late-window diagnostic for the highest rung (not part of the pass flag).
    let law = DampingLaw::new(1.0, 0.5)?;
    let late = RateSetup { window: (1e3, 1e5), samples: 41, orders: vec![2], ..RateSetup::default() };
    let (_, lr) = linear_rates(&law, &late)?;
    let late_slope = row(&lr, "v:L2:a=2").fitted;
    details["late_window_a2"] = json!({ "window": [1e3, 1e5], "slope": late_slope });
    let mut summary = format!("{}; diagnostic a=2 on [1e3, 1e5]: {}", parts.join(", "), pm(late_slope));
    if !quick {
        let refined = RateSetup { layout: NodeLayout::default().refined(), ..RateSetup::default() };
        let (_, rr) = linear_rates(&law, &refined)?;
        let d = targets.iter().map(|(a, _)| (row(&rr, &format!("v:L2:a={a}")).fitted - row(&picked, &format!("v:L2:a={a}")).fitted).abs()).fold(0.0, f64::max);
        summary.push_str(&format!("; refined-grid slope change {d:.1e}"));
        details["refined_slope_change"] = json!(d);
    }
    Ok((pass, summary, details))
}

fn criterion_4(cache: &mut RateCache) -> Result<(bool, String, Value)> {
    let lambdas = [0.0, 0.25, 0.5, 0.75];
    let mut slopes = Vec::new();
    for &l in &lambdas {
        let (_, rows) = cache.get(l)?;
        slopes.push(row(rows, "v:L2:a=0").fitted);
    }
    let decreasing = slopes.windows(2).all(|w| w[1] < w[0]);
    let base_ok = within(slopes[0], -0.5, 0.03);
    let summary = format!(
        "slopes {} for lambda = 0, 0.25, 0.5, 0.75 ({}); lambda = 0: {} (target -0.5 ± 0.03)",
        slopes.iter().map(|s| pm(*s)).collect::<Vec<_>>().join(", "),
        if decreasing { "strictly decreasing" } else { "NOT strictly decreasing" },
        pm(slopes[0])
    );
    Ok((decreasing && base_ok, summary, json!({ "lambdas": lambdas, "slopes": slopes })))
}

fn criterion_5(cache: &mut RateCache, quick: bool) -> Result<(bool, String, Value)> {
    single_rate(cache, "v:Linf:a=0", -1.5, 0.05, quick)
}

// ---------------------------------------------------------------------------------------------
// Propagator identities

/// Largest elementwise `|G - G_reconstructed|` on a `(k, s, t)` lattice.
pub fn green_reconstruction_error(law: &DampingLaw, ks: &[f64], ss: &[f64], dts: &[f64]) -> Result<(f64, (f64, f64, f64))> {
    let opts = PropagatorOptions::default();
    let mut worst = (0.0, (0.0, 0.0, 0.0));
    for &k in ks {
        for &s in ss {
            let ts: Vec<f64> = dts.iter().map(|d| s + d).collect();
            let g = green_series(law, k, s, &ts, &opts)?;
            let mv = solve_multipliers_with(Family::V, law, k, s, &ts, &opts)?;
            let mu = solve_multipliers_with(Family::U, law, k, s, &ts, &opts)?;
            for (i, gi) in g.iter().enumerate() {
                let r = reconstruct_from_samples(k, s, &mv.samples[i], &mu.samples[i], law);
                let d = gi.max_diff(&r);
                if d > worst.0 {
                    worst = (d, (k, s, ts[i]));
                }
            }
        }
    }
    Ok(worst)
}

fn criterion_6() -> Result<(bool, String, Value)> {
    let law = DampingLaw::new(1.0, 0.5)?;
    let ks = log_grid(1e-2, 10.0, 10);
    let ss = [0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0];
    let dts = log_grid(0.1, 1e3, 10);
    let (err, at) = green_reconstruction_error(&law, &ks, &ss, &dts)?;
    let pass = err <= 1e-8;
    Ok((
        pass,
        format!("max |G - reconstruct| = {err:.2e} on 10x10x10 (k, s, t) lattice (tolerance 1e-8), worst at (k, s, t) = ({:.3e}, {}, {:.4e})", at.0, at.1, at.2),
        json!({ "max_error": err, "worst": [at.0, at.1, at.2], "tolerance": 1e-8 }),
    ))
}

/// Pinned positive floor of the translation defect at `lambda = 0.5, k = 0.1, s = 10, t = 40`
/// (the first oracle run measured about 0.45; the floor keeps a 4x margin).
pub const TRANSLATION_FLOOR: f64 = 0.1;

fn criterion_7() -> Result<(bool, String, Value)> {
    let l0 = DampingLaw::new(1.0, 0.0)?;
    let mut worst: f64 = 0.0;
    for &k in &[0.01, 0.1, 1.0, 10.0] {
        for &s in &[1.0, 10.0, 100.0] {
            for &d in &[1.0, 10.0, 100.0] {
                worst = worst.max(translation_probe(&l0, k, s, s + d)?);
            }
        }
    }
    let l5 = DampingLaw::new(1.0, 0.5)?;
    let probe = translation_probe(&l5, 0.1, 10.0, 40.0)?;
    let pass = worst <= 1e-8 && probe > TRANSLATION_FLOOR;
    Ok((
        pass,
        format!("lambda = 0: max defect {worst:.2e} (<= 1e-8); lambda = 0.5, k = 0.1, s = 10, t = 40: {probe:.4} (> floor {TRANSLATION_FLOOR})"),
        json!({ "lambda0_max": worst, "lambda05_probe": probe, "floor": TRANSLATION_FLOOR }),
    ))
}

// ---------------------------------------------------------------------------------------------
// Diagonalization and zones

/// Diagonalization reports for both families on the standard probe set.
pub fn diag_reports(law: &DampingLaw, cfg: &ZoneConfig) -> Result<Vec<DiagReport>> {
    [Family::V, Family::U].iter().map(|&f| diag_report(f, law, cfg, &DiagProbes::default())).collect()
}

fn criterion_8() -> Result<(bool, String, Value)> {
    let law = DampingLaw::new(1.0, 0.5)?;
    let cfg = ZoneConfig::default_for(&law);
    let reports = diag_reports(&law, &cfg)?;
    let target = -(1.0 - law.lambda());
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &reports {
        let ok = r.max_equivalence_error <= 1e-5 && within(r.q_minus_h_exponent, target, 0.1);
        pass &= ok;
        parts.push(format!(
            "{}: equivalence {:.2e} (<= 1e-5), |Q-H| exponent {} (target {target} ± 0.1)",
            r.family.name(),
            r.max_equivalence_error,
            pm(r.q_minus_h_exponent)
        ));
    }
    Ok((pass, parts.join("; "), serde_json::to_value(&reports).unwrap_or(Value::Null)))
}

/// Certification on the standard grid (30 times in `[1e2, 1e5]`, 13 frequencies up to `xi_t / 2`).
pub fn certification(law: &DampingLaw, cfg: &ZoneConfig) -> Result<Vec<CertReport>> {
    [Family::V, Family::U]
        .iter()
        .map(|&f| {
            let grid = standard_grid(f, law, cfg, 1e2, 1e5, 30, 12, 0.5)?;
            certify_ell_bounds(f, law, cfg, &grid)
        })
        .collect()
}

fn criterion_9() -> Result<(bool, String, Value)> {
    let law = DampingLaw::new(1.0, 0.5)?;
    let cfg = ZoneConfig::default_for(&law);
    let reports = certification(&law, &cfg)?;
    let target = -(2.0 - law.lambda());
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &reports {
        let v = r.violations_upper + r.violations_lower;
        let ok = v == 0 && within(r.remainder_exponent, target, 0.1);
        pass &= ok;
        parts.push(format!("{}: {} points, {v} violations, remainder exponent {} (target {target} ± 0.1)", r.family.name(), r.points, pm(r.remainder_exponent)));
    }
    Ok((pass, parts.join("; "), serde_json::to_value(&reports).unwrap_or(Value::Null)))
}

// ---------------------------------------------------------------------------------------------
// Envelopes

/// Estimated `T0` of one family.
pub type FamilyT0 = (Family, f64);

/// Full multiplier-envelope suite: upper bounds in the three zone cases and lower bounds for
/// `s >= T0`, for both families. Returns `(T0 per family, reports)`.
pub fn envelope_suite(law: &DampingLaw, cfg: &ZoneConfig, ecfg: &EnvelopeConfig) -> Result<(Vec<FamilyT0>, Vec<EnvelopeReport>)> {
    let mut reports = Vec::new();
    let mut t0s = Vec::new();
    let s_grid = log_grid(16.0, 1000.0, 10);
    for fam in [Family::V, Family::U] {
        let t0 = estimate_t0(fam, law, cfg, &[1e-3, 3e-3], &s_grid, &[2.0, 4.0])?
            .ok_or_else(|| deul_core::Error::NonConvergence(format!("no T0 found for family {}", fam.name())))?;
        t0s.push((fam, t0));
        let p = elliptic_probes(fam, law, cfg, 16.0, 1e4, 12, &[0.0, 0.1, 0.3, 0.6, 0.9], &[0.0, 0.25, 0.5, 0.9, 1.0], 0.0)?;
        reports.extend(check_phi_upper(fam, ZoneCase::Ell, law, cfg, ecfg, &p)?);
        let p = hyperbolic_probes(fam, law, cfg, &[2.0, 5.0, 10.0], &log_grid(1.0, 1e3, 8), &[0.0, 0.5, 1.0])?;
        reports.extend(check_phi_upper(fam, ZoneCase::Hyp, law, cfg, ecfg, &p)?);
        let p = mixed_probes(fam, law, cfg, &log_grid(0.01, 2.0, 16), &log_grid(16.0, 1e4, 16), &[0.0, 0.25, 0.5, 0.75, 1.0])?;
        reports.extend(check_phi_upper(fam, ZoneCase::Mixed, law, cfg, ecfg, &p)?);
        // Lower bounds need separated times (t >= 2s, as in the T0 search): start at t = 2 T0.
        let p = elliptic_probes(fam, law, cfg, 2.0 * t0, 1e4, 12, &[0.0, 0.1, 0.3, 0.6, 0.9], &[0.25, 0.5], t0)?;
        reports.extend(check_phi_lower(fam, law, cfg, ecfg, &p, t0)?);
    }
    Ok((t0s, reports))
}

fn criterion_10() -> Result<(bool, String, Value)> {
    let law = DampingLaw::new(1.0, 0.5)?;
    let cfg = ZoneConfig::default_for(&law);
    let ecfg = EnvelopeConfig::default();
    let (t0s, reports) = envelope_suite(&law, &cfg, &ecfg)?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.claim.as_str()).collect();
    let pass = failed.is_empty();
    let worst_val = reports.iter().map(|r| r.validation).fold(0.0, f64::max);
    let summary = format!(
        "{} envelope reports ({} failing{}), T0 = {}, max held-out/train ratio {:.3} (<= {})",
        reports.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(": {}", failed.join(", ")) },
        t0s.iter().map(|(f, t)| format!("{} {t:.4}", f.name())).collect::<Vec<_>>().join(" / "),
        worst_val,
        ecfg.validate_factor
    );
    Ok((pass, summary, json!({ "t0": t0s.iter().map(|(f, t)| json!({"family": f.name(), "t0": t})).collect::<Vec<_>>(), "reports": reports })))
}

/// Operationalized decrease of a cancellation curve: strictly decreasing up to its minimum
/// and never recovering above `1e-3` times its initial value afterwards.
pub fn curve_decreases(values: &[f64]) -> bool {
    if values.len() < 2 {
        return false;
    }
    let imin = values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|x| x.0).unwrap_or(0);
    imin > 0 && values[..=imin].windows(2).all(|w| w[1] < w[0]) && values[imin..].iter().all(|&v| v <= 1e-3 * values[0])
}

fn criterion_11() -> Result<(bool, String, Value)> {
    let law = DampingLaw::new(1.0, 0.5)?;
    let cfg = ZoneConfig::default_for(&law);
    let ecfg = EnvelopeConfig::default();
    // k = 0: the combination is the (2,2) Green entry, integrated directly (no subtraction).
    // The multiplier-difference form is checked against the size of its individual terms.
    let mut k0_err: f64 = 0.0;
    let mut k0_diff_err: f64 = 0.0;
    let opts = PropagatorOptions { ode: OdeOptions { rtol: 1e-12, atol: 1e-300, ..OdeOptions::default() }, ..PropagatorOptions::default() };
    for &s in &[0.0, 1.0, 10.0, 100.0] {
        let ts: Vec<f64> = [0.5, 5.0, 50.0, 500.0].iter().map(|d| s + d).collect();
        let g = green_series(&law, 0.0, s, &ts, &opts)?;
        for (gi, &t) in g.iter().zip(&ts) {
            let exact = (-law.integral_b(s, t)?).exp();
            k0_err = k0_err.max((gi.g22.abs() - exact).abs() / exact);
            let (f1, f2) = multipliers_at(Family::U, &law, &Probe { s, t, k: 0.0 })?;
            let scale = f1.abs().max(law.b(s) * f2.abs());
            k0_diff_err = k0_diff_err.max(((f1 - law.b(s) * f2).abs() - exact).abs() / scale);
        }
    }
    // k > 0 elliptic: decrease along t in [s, 4s].
    let curve = cancellation_curve(&law, &ecfg, 1e-3, 100.0, &log_grid(100.0, 400.0, 12))?;
    let vals: Vec<f64> = curve.iter().map(|c| c.1).collect();
    let dec = curve_decreases(&vals);
    // Improved envelope, fitted and validated on u-elliptic probes beyond T0.
    let t0 = estimate_t0(Family::U, &law, &cfg, &[1e-3, 3e-3], &log_grid(16.0, 1000.0, 10), &[2.0, 4.0])?.unwrap_or(1000.0);
    let probes = elliptic_probes(Family::U, &law, &cfg, t0, 1e4, 10, &[0.0, 0.1, 0.3, 0.6], &[0.25, 0.5, 1.0], t0)?;
    let rep = check_cancellation(&law, &cfg, &ecfg, &probes, t0)?;
    let pass = k0_err <= 1e-10 && k0_diff_err <= 1e-10 && dec && rep.improved.pass;
    let summary = format!(
        "k = 0: max rel. deviation of |G22| from exp(-int b) {k0_err:.2e}, multiplier difference {k0_diff_err:.2e} of term size (both <= 1e-10); k = 1e-3, s = 100: ratio {:.3e} -> min {:.3e} -> {:.3e} at t = 4s ({}); improved envelope C = {:.3} validation {:.3} ({})",
        vals[0],
        vals.iter().copied().fold(f64::INFINITY, f64::min),
        vals[vals.len() - 1],
        if dec { "decreasing" } else { "NOT decreasing" },
        rep.improved.constant,
        rep.improved.validation,
        if rep.improved.pass { "pass" } else { "fail" }
    );
    Ok((pass, summary, json!({ "k0_max_rel_error": k0_err, "k0_multiplier_difference_error": k0_diff_err, "curve": curve, "improved": rep.improved, "residual_term_ratio": rep.residual_term_ratio })))
}

/// The integral-lemma cases: `(kind, beta, gamma)` covering the fast, logarithmic and slow regimes.
pub fn integral_cases(lambda: f64) -> Vec<(IntegralKind, f64, f64)> {
    let q = 1.0 + lambda;
    vec![
        (IntegralKind::Power, 1.0, 2.0),
        (IntegralKind::Power, 1.0 / q, 0.5),
        (IntegralKind::Power, 0.4, 0.5),
        (IntegralKind::Power, 0.4, 1.0),
        (IntegralKind::Power, 1.0 / q, 0.3),
        (IntegralKind::Envelope { k: 1.0 }, 1.0, 0.5),
        (IntegralKind::Envelope { k: 0.0 }, 2.0 / q, 0.5),
        (IntegralKind::Envelope { k: 0.0 }, 0.5, 0.3),
    ]
}

/// Pinned bracket for numeric / closed-form ratios of the integral lemmas.
pub const INTEGRAL_BRACKET: (f64, f64) = (1e-2, 1e2);

fn criterion_12() -> Result<(bool, String, Value)> {
    let law = DampingLaw::new(1.0, 0.5)?;
    let ts = log_grid(1.0, 1e4, 17);
    let mut rows = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut regimes = std::collections::BTreeSet::new();
    let mut max_drift = f64::NEG_INFINITY;
    for (kind, beta, gamma) in integral_cases(law.lambda()) {
        let mut ratios = Vec::new();
        let mut regime = None;
        for &t in &ts {
            let b = min_integral_bound(kind, beta, gamma, &law, t)?;
            regime = Some(b.regime);
            ratios.push(b.numeric / b.closed);
        }
        let regime = regime.expect("nonempty grid");
        regimes.insert(format!("{regime:?}"));
        lo = ratios.iter().copied().fold(lo, f64::min);
        hi = ratios.iter().copied().fold(hi, f64::max);
        // growth of the ratio over the last decade: a bounded ratio may fall but must not grow
        let n = ratios.len();
        let drift = (ratios[n - 1] / ratios[n - 5]).ln() / (ts[n - 1] / ts[n - 5]).ln();
        max_drift = max_drift.max(drift);
        rows.push(json!({ "kind": format!("{kind:?}"), "beta": beta, "gamma": gamma, "regime": format!("{regime:?}"), "ratios": ratios, "last_decade_growth": drift }));
    }
    let all_regimes = ["Fast", "Log", "Slow"].iter().all(|r| regimes.contains(*r));
    let pass = lo >= INTEGRAL_BRACKET.0 && hi <= INTEGRAL_BRACKET.1 && all_regimes && max_drift <= 0.05;
    Ok((
        pass,
        format!(
            "{} cases over t in [1, 1e4], regimes {:?}: ratios in [{lo:.3}, {hi:.3}] (bracket [{}, {}]), max last-decade growth exponent {max_drift:.3} (<= 0.05)",
            rows.len(),
            regimes,
            INTEGRAL_BRACKET.0,
            INTEGRAL_BRACKET.1
        ),
        json!({ "cases": rows }),
    ))
}

// ---------------------------------------------------------------------------------------------
// Vorticity

/// Largest relative deviation of the evolved vorticity channel from `w0 exp(-int b)`, where the
/// reference factor comes from an independent adaptive integration of `w' = -b w`.
pub fn vorticity_error(law: &DampingLaw, s: f64, ts: &[f64]) -> Result<f64> {
    let layout = NodeLayout::default();
    let pw = make_profile(ProfileKind::Gaussian { sigma: 0.5 }, 2, &layout)?;
    let zero = pw.zeros_like();
    let ev = deul_core::spectra::Evolution { law: *law, profile_v: &zero, profile_u: &zero, profile_w: Some(&pw), s, t_grid: ts, orders: &[0] };
    let field = evolve_field(&ev, &evolution_options())?;
    let l = *law;
    let opts = OdeOptions { rtol: 1e-13, atol: 1e-300, ..OdeOptions::default() };
    let (ys, _) = dopri5(move |t, y: &[f64; 1]| [-l.b(t) * y[0]], s, [1.0], ts, &opts)?;
    let w = field.w.expect("w channel evolved");
    // Relative error in the sup norm over nodes (pointwise ratios are meaningless for
    // amplitudes in the subnormal range of the Gaussian tail).
    let peak = pw.amplitudes.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mut worst: f64 = 0.0;
    for (i, y) in ys.iter().enumerate() {
        let dev = pw.amplitudes.iter().enumerate().fold(0.0f64, |a, (j, &w0)| a.max((w[i][j] - w0 * y[0]).abs()));
        worst = worst.max(dev / (peak * y[0]));
    }
    Ok(worst)
}

fn criterion_13() -> Result<(bool, String, Value)> {
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for (mu, lam, s) in [(1.0, 0.5, 0.0), (1.0, 0.5, 10.0), (2.0, 0.0, 0.0), (0.5, 0.75, 3.0)] {
        let law = DampingLaw::new(mu, lam)?;
        // keep exp(-int b) in the normal floating-point range
        let mut ts = Vec::new();
        for t in log_grid(s + 1.0, s + 1e3, 13) {
            if law.integral_b(s, t)? <= 500.0 {
                ts.push(t);
            }
        }
        let e = vorticity_error(&law, s, &ts)?;
        worst = worst.max(e);
        rows.push(json!({ "mu": mu, "lambda": lam, "s": s, "t_max": ts.last(), "max_rel_error": e }));
    }
    Ok((worst <= 1e-10, format!("max relative deviation from w0 exp(-int b) {worst:.2e} over 4 laws (<= 1e-10)"), json!({ "rows": rows })))
}

// ---------------------------------------------------------------------------------------------
// Nonlinear solver

/// The pinned nonlinear configuration: `lambda = 0.5, n = 2, L = 200, N = 512, T = 80`.
pub fn nonlinear_config(eps: f64) -> SolverConfig {
    SolverConfig { eps, dt: crate::config::DEFAULT_DT, ..SolverConfig::default() }
}

/// Small grid used for the temporal order check.
pub fn order_config() -> SolverConfig {
    SolverConfig { l: 50.0, n: 64, t_end: 10.0, dt: 0.3125, eps: 0.01, r0: 4.0, output_every: 1.0, nonlinear: true, init: InitKind::GaussianBump }
}

/// Summary of the nonlinear acceptance probe.
#[derive(Debug, Clone, Serialize)]
pub struct NonlinearSummary {
    pub mass_drift: f64,
    pub order_factor: f64,
    pub deviation_main: f64,
    pub deviation_half: f64,
    pub halving_factor: f64,
    pub max_deviation: f64,
    pub c_e: f64,
    pub ledger_ratio: f64,
    pub energy_pass: bool,
    pub v_slope: f64,
    pub u_slope: f64,
    pub weighted_energy_sup: f64,
    pub data_norm: f64,
    pub max_hermitian_defect: f64,
    pub steps: usize,
    pub dt: f64,
}

pub fn nonlinear_summary(main: &RunOutput, half: &RunOutput, order_factor: f64) -> Result<NonlinearSummary> {
    let dm = main.deviation.as_ref().ok_or_else(|| deul_core::Error::Usage("main run lacks the linear comparison".into()))?;
    let dh = half.deviation.as_ref().ok_or_else(|| deul_core::Error::Usage("half run lacks the linear comparison".into()))?;
    let deviation_main = *dm.values.last().expect("nonempty");
    let deviation_half = *dh.values.last().expect("nonempty");
    let c_e = fit_energy_constant(&half.ledger);
    let ec = energy_check(&main.ledger, c_e);
    let window = (20.0, main.config.t_end);
    let v_slope = fit_slope(find_series(&main.series, "v:L2:a=0")?, window)?.exponent;
    let u_slope = fit_slope(find_series(&main.series, "u:L2:a=0")?, window)?.exponent;
    Ok(NonlinearSummary {
        mass_drift: main.mass_drift().max(half.mass_drift()),
        order_factor,
        deviation_main,
        deviation_half,
        halving_factor: if deviation_half > 0.0 { deviation_main / deviation_half } else { f64::NAN },
        max_deviation: dm.values.iter().copied().fold(0.0, f64::max),
        c_e,
        ledger_ratio: ec.max_ratio,
        energy_pass: ec.pass,
        v_slope,
        u_slope,
        weighted_energy_sup: main.weighted.last().map(|w| w.1).unwrap_or(0.0),
        data_norm: main.data_norm,
        max_hermitian_defect: main.max_hermitian_defect.max(half.max_hermitian_defect),
        steps: main.steps,
        dt: main.dt,
    })
}

fn criterion_14() -> Result<(bool, String, Value)> {
    let law = DampingLaw::new(1.0, 0.5)?;
    let params = EulerParams::new(1.4, law)?;
    let order = order_check(params, &order_config(), 0.3125)?;
    let opts = RunOptions { compare_linear: true };
    let main = run_with(params, &nonlinear_config(0.01), opts, &mut |_, _| Ok(()))?;
    let half = run_with(params, &nonlinear_config(0.005), opts, &mut |_, _| Ok(()))?;
    let s = nonlinear_summary(&main, &half, order.factor)?;
    let lam = law.lambda();
    let checks = [
        ("mass", s.mass_drift <= 1e-8),
        ("order", (12.0..=20.0).contains(&s.order_factor)),
        ("halving", within(s.halving_factor, 2.0, 0.4)),
        ("energy", s.energy_pass),
        ("v-slope", within(s.v_slope, -0.75, 0.15)),
        ("u-slope", s.u_slope <= s.v_slope - 0.5 * (1.0 - lam) + 0.15),
    ];
    let pass = checks.iter().all(|c| c.1);
    let summary = format!(
        "mass drift {:.2e} (<= 1e-8); RK4 factor {:.2} (in [12, 20]); deviation halving {:.3} (2 ± 0.4); ledger {:.4} <= C_E {:.4}; |v| slope {} (-0.75 ± 0.15); |u| slope {} (<= {}){}",
        s.mass_drift,
        s.order_factor,
        s.halving_factor,
        s.ledger_ratio,
        s.c_e,
        pm(s.v_slope),
        pm(s.u_slope),
        pm(s.v_slope - 0.5 * (1.0 - lam) + 0.15),
        if pass {
            String::new()
        } else {
            format!("; failing: {}", checks.iter().filter(|c| !c.1).map(|c| c.0).collect::<Vec<_>>().join(", "))
        }
    );
    Ok((pass, summary, json!({ "summary": s, "order_check": order, "deviation_main": main.deviation, "deviation_half": half.deviation })))
}

// ---------------------------------------------------------------------------------------------
// Suite driver

fn timed(id: u32, f: impl FnOnce() -> Result<(bool, String, Value)>) -> CriterionResult {
    let start = Instant::now();
    let (pass, summary, details) = match f() {
        Ok(x) => x,
        Err(e) => (false, format!("error: {e}"), json!({ "error": e.to_string() })),
    };
    CriterionResult { id, name: criterion_name(id), pass, summary, details, seconds: start.elapsed().as_secs_f64() }
}

/// Runs the selected criteria in order, reporting each result as soon as it is available.
/// Criterion 15 (when selected) is evaluated last from the suite's own runtime and results.
pub fn run_suite(opts: &VerifyOptions, on_result: &mut dyn FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    let start = Instant::now();
    let mut cache = RateCache::default();
    let mut out = Vec::new();
    for id in 1..CRITERIA {
        if !opts.selected(id) {
            continue;
        }
        let quick = opts.quick;
        let r = timed(id, || match id {
            1 => criterion_1(&mut cache, quick),
            2 => criterion_2(&mut cache, quick),
            3 => criterion_3(&mut cache, quick),
            4 => criterion_4(&mut cache),
            5 => criterion_5(&mut cache, quick),
            6 => criterion_6(),
            7 => criterion_7(),
            8 => criterion_8(),
            9 => criterion_9(),
            10 => criterion_10(),
            11 => criterion_11(),
            12 => criterion_12(),
            13 => criterion_13(),
            14 => criterion_14(),
            _ => unreachable!(),
        });
        on_result(&r);
        out.push(r);
    }
    if opts.selected(CRITERIA) {
        let elapsed = start.elapsed().as_secs_f64();
        let complete = (1..CRITERIA).all(|id| out.iter().any(|r| r.id == id));
        let failing: Vec<u32> = out.iter().filter(|r| !r.pass).map(|r| r.id).collect();
        let pass = complete && failing.is_empty() && elapsed <= SUITE_BUDGET_SECONDS;
        let summary = format!(
            "suite runtime {elapsed:.0} s (budget {SUITE_BUDGET_SECONDS:.0} s, {} worker thread(s)); {}",
            rayon::current_num_threads(),
            if !complete {
                "not all criteria executed".to_string()
            } else if failing.is_empty() {
                "all criteria pass, exit status 0".to_string()
            } else {
                format!("failing criteria {failing:?}, exit status 1")
            }
        );
        let r = CriterionResult {
            id: CRITERIA,
            name: criterion_name(CRITERIA),
            pass,
            summary,
            details: json!({ "elapsed_seconds": elapsed, "threads": rayon::current_num_threads(), "failing": failing }),
            seconds: elapsed,
        };
        on_result(&r);
        out.push(r);
    }
    out
}

/// Numeric value in the 17-digit format (for CSV exports of suite results).
pub fn result_csv(results: &[CriterionResult]) -> String {
    let mut t = crate::output::Table::new(&["criterion", "name", "pass", "seconds", "summary"]);
    for r in results {
        t.push(vec![r.id.to_string(), r.name.to_string(), r.pass.to_string(), num(r.seconds), format!("\"{}\"", r.summary.replace('"', "'"))]);
    }
    t.to_csv()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predictions() {
        assert_eq!(predicted_rate(0.5, 2, "v", NormKind::L2, 0), -0.75);
        assert_eq!(predicted_rate(0.5, 2, "u", NormKind::L2, 0), -1.0);
        assert_eq!(predicted_rate(0.5, 2, "v", NormKind::L2, 2), -2.25);
        assert_eq!(predicted_rate(0.5, 2, "v", NormKind::LinfProxy, 0), -1.5);
        assert_eq!(predicted_rate(0.0, 2, "v", NormKind::L2, 0), -0.5);
    }

    #[test]
    fn decrease_operationalization() {
        assert!(curve_decreases(&[1.0, 0.1, 1e-4, 2e-4, 1.5e-4]));
        assert!(!curve_decreases(&[1.0, 0.1, 0.2, 1e-4]));
        assert!(!curve_decreases(&[1.0, 1e-4, 0.01]));
        assert!(!curve_decreases(&[1.0]));
    }

    #[test]
    fn selection() {
        let o = VerifyOptions { quick: true, only: Some(vec![6, 13]) };
        assert!(o.selected(6) && !o.selected(1));
        assert!(VerifyOptions::default().selected(15));
    }
}
