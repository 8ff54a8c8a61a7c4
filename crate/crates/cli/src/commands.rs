//! Subcommand implementations. Each returns the checks it executed; files are written only
//! when an output directory is resolved.

use crate::config::RunConfig;
use crate::output::{num, to_json, write_file, Table};
use crate::plot::{emit_plot, zone_atlas_svg, PlotSeries, PlotStyle};
use crate::verify::{self, CriterionResult, VerifyOptions};
use crate::{Check, CliError, CliResult};
use deul_core::envelopes::EnvelopeConfig;
use deul_core::nonlinear::{energy_check, fit_energy_constant, run_with, write_snapshot, RunOptions};
use deul_core::propagator::{green_series, reconstruct_from_samples, solve_multipliers_with, PropagatorOptions};
use deul_core::spectra::{log_grid, NodeLayout, NormSeries};
use deul_core::zones::classify;
use deul_core::Family;
use std::path::{Path, PathBuf};

/// Everything a subcommand needs besides its own arguments.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub out_dir: Option<PathBuf>,
}

impl Context {
    fn emit(&self, name: &str, contents: &str) -> CliResult<()> {
        if let Some(dir) = &self.out_dir {
            let p = write_file(dir, name, contents)?;
            println!("wrote {}", p.display());
        }
        Ok(())
    }
}

fn print_checks(checks: &[Check]) {
    for c in checks {
        println!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

fn series_csv(series: &[NormSeries]) -> String {
    let mut header = vec!["t".to_string()];
    header.extend(series.iter().map(|s| s.label.clone()));
    let mut t = Table { header, rows: Vec::new() };
    if let Some(first) = series.first() {
        for (i, &time) in first.times.iter().enumerate() {
            let mut row = vec![num(time)];
            row.extend(series.iter().map(|s| num(s.values[i])));
            t.push(row);
        }
    }
    t.to_csv()
}

fn decay_plot(series: &[NormSeries], title: &str, t_min: f64, guides: &dyn Fn(&NormSeries) -> Option<f64>) -> CliResult<String> {
    let ps: Vec<PlotSeries> = series
        .iter()
        .map(|s| PlotSeries {
            label: s.label.clone(),
            points: s.times.iter().zip(&s.values).filter(|(t, _)| **t >= t_min).map(|(t, v)| (*t, *v)).collect(),
            guide_slope: guides(s),
        })
        .collect();
    emit_plot(&ps, &PlotStyle { title: title.to_string(), ..PlotStyle::default() })
}

/// `rates`: linear decay rates of hat/Gaussian/annulus data placed in `v`.
pub fn rates(ctx: &Context, refined: bool) -> CliResult<Vec<Check>> {
    let law = ctx.config.damping_law()?;
    let p = &ctx.config.probes;
    let setup = verify::RateSetup {
        n: p.n,
        profile: p.profile_kind(),
        layout: if refined { NodeLayout::default().refined() } else { NodeLayout::default() },
        window: (p.t_min, p.t_max),
        samples: p.samples,
        orders: vec![0, 1, 2],
    };
    let (series, rows) = verify::linear_rates(&law, &setup)?;
    let mut table = Table::new(&["lambda", "series", "predicted", "fitted", "stderr", "tolerance", "pass"]);
    let mut checks = Vec::new();
    for r in &rows {
        table.push(vec![num(r.lambda), r.label.clone(), num(r.predicted), num(r.fitted), num(r.stderr), num(r.tolerance), r.pass.to_string()]);
        checks.push(Check::new(
            format!("rate {}", r.label),
            r.pass,
            format!("fitted {:.4} ± {:.1e}, predicted {:.4} (tolerance {})", r.fitted, r.stderr, r.predicted, r.tolerance),
        ));
    }
    print_checks(&checks);
    ctx.emit("rates.csv", &table.to_csv())?;
    ctx.emit("rates.json", &to_json(&rows)?)?;
    ctx.emit("rates_series.csv", &series_csv(&series))?;
    let svg = decay_plot(&series, &format!("linear decay, lambda = {}", law.lambda()), p.t_min, &|s| {
        Some(verify::predicted_rate(law.lambda(), p.n, &s.field, s.kind, s.order))
    })?;
    ctx.emit("rates.svg", &svg)?;
    Ok(checks)
}

/// `zones`: zone atlas on a log `(t, k)` raster and the elliptic growth-rate certification.
pub fn zones(ctx: &Context) -> CliResult<Vec<Check>> {
    let law = ctx.config.damping_law()?;
    let cfg = ctx.config.zone_config()?;
    let ts = log_grid(1.0, 1e5, 60);
    let ks = log_grid(1e-4, 10.0, 40);
    let mut checks = Vec::new();
    let mut table = Table::new(&["family", "t", "k", "zone"]);
    for fam in [Family::V, Family::U] {
        let mut zs = Vec::with_capacity(ts.len() * ks.len());
        for &t in &ts {
            for &k in &ks {
                let z = classify(fam, &law, &cfg, t, k)?;
                table.push(vec![fam.name().to_string(), num(t), num(k), z.name().to_string()]);
                zs.push(z);
            }
        }
        ctx.emit(&format!("zones_{}.svg", fam.name()), &zone_atlas_svg(&ts, &ks, &zs, &format!("zone atlas, family {}", fam.name()))?)?;
    }
    let reports = verify::certification(&law, &cfg)?;
    for r in &reports {
        checks.push(Check::new(
            format!("certification {}", r.family.name()),
            r.pass,
            format!(
                "{} points, {} upper / {} lower violations, remainder exponent {:.4}",
                r.points, r.violations_upper, r.violations_lower, r.remainder_exponent
            ),
        ));
    }
    print_checks(&checks);
    ctx.emit("zones.csv", &table.to_csv())?;
    ctx.emit("certification.json", &to_json(&reports)?)?;
    Ok(checks)
}

fn time_grid(s: f64, t_end: f64, samples: usize) -> CliResult<Vec<f64>> {
    if t_end.partial_cmp(&s) != Some(std::cmp::Ordering::Greater) || samples < 2 {
        return Err(CliError::Config(format!("need t_end > s and at least 2 samples, got s = {s}, t_end = {t_end}, samples = {samples}")));
    }
    let mut g = vec![s];
    // log-spaced offsets from s; the first offset (zero) is s itself
    g.extend(log_grid(1.0, 1.0 + t_end - s, samples).into_iter().skip(1).map(|d| s + d - 1.0));
    Ok(g)
}

/// `multipliers`: `Phi_1, Phi_2` of both families at fixed `(k, s)`, with the Wronskian identity.
pub fn multipliers(ctx: &Context, k: f64, s: f64, t_end: f64, samples: usize) -> CliResult<Vec<Check>> {
    let law = ctx.config.damping_law()?;
    let ts = time_grid(s, t_end, samples)?;
    let opts = PropagatorOptions::default();
    let mut table = Table::new(&["family", "t", "phi1", "phi2", "dphi1", "dphi2", "wronskian"]);
    let mut checks = Vec::new();
    for fam in [Family::V, Family::U] {
        let m = solve_multipliers_with(fam, &law, k, s, &ts, &opts)?;
        let mut worst: f64 = 0.0;
        for smp in &m.samples {
            let exact = (-law.integral_b(s, smp.t)?).exp();
            worst = worst.max((smp.wronskian() - exact).abs() / exact);
            table.push(vec![fam.name().into(), num(smp.t), num(smp.phi1), num(smp.phi2), num(smp.dphi1), num(smp.dphi2), num(smp.wronskian())]);
        }
        checks.push(Check::new(format!("wronskian {}", fam.name()), worst <= 1e-8, format!("max relative deviation from exp(-int b): {worst:.2e} (<= 1e-8)")));
    }
    print_checks(&checks);
    ctx.emit("multipliers.csv", &table.to_csv())?;
    Ok(checks)
}

/// `green`: the Green matrix against its multiplier reconstruction at fixed `(k, s)`.
pub fn green(ctx: &Context, k: f64, s: f64, t_end: f64, samples: usize) -> CliResult<Vec<Check>> {
    let law = ctx.config.damping_law()?;
    let ts = time_grid(s, t_end, samples)?;
    let opts = PropagatorOptions::default();
    let g = green_series(&law, k, s, &ts, &opts)?;
    let mv = solve_multipliers_with(Family::V, &law, k, s, &ts, &opts)?;
    let mu = solve_multipliers_with(Family::U, &law, k, s, &ts, &opts)?;
    let mut table = Table::new(&["t", "g11", "g12", "g21", "g22", "det", "reconstruction_error"]);
    let mut worst: f64 = 0.0;
    let mut det_err: f64 = 0.0;
    for (i, gi) in g.iter().enumerate() {
        let r = reconstruct_from_samples(k, s, &mv.samples[i], &mu.samples[i], &law);
        let d = gi.max_diff(&r);
        worst = worst.max(d);
        let exact = (-law.integral_b(s, gi.t)?).exp();
        det_err = det_err.max((gi.det() - exact).abs() / exact);
        table.push(vec![num(gi.t), num(gi.g11), num(gi.g12), num(gi.g21), num(gi.g22), num(gi.det()), num(d)]);
    }
    let checks = vec![
        Check::new("reconstruction", worst <= 1e-8, format!("max |G - reconstruct| = {worst:.2e} (<= 1e-8)")),
        Check::new("determinant", det_err <= 1e-8, format!("max relative deviation of det G from exp(-int b): {det_err:.2e} (<= 1e-8)")),
    ];
    print_checks(&checks);
    ctx.emit("green.csv", &table.to_csv())?;
    Ok(checks)
}

/// `diag`: diagonalization residuals, equivalence and the `|Q - H|` decay for both families.
pub fn diag(ctx: &Context) -> CliResult<Vec<Check>> {
    let law = ctx.config.damping_law()?;
    let cfg = ctx.config.zone_config()?;
    let reports = verify::diag_reports(&law, &cfg)?;
    let target = -(1.0 - law.lambda());
    let mut checks = Vec::new();
    for r in &reports {
        checks.push(Check::new(
            format!("equivalence {}", r.family.name()),
            r.max_equivalence_error <= 1e-5,
            format!("max relative error {:.2e} (<= 1e-5); conjugation residual {:.2e}", r.max_equivalence_error, r.max_conjugation_residual),
        ));
        checks.push(Check::new(
            format!("Q-H decay {}", r.family.name()),
            (r.q_minus_h_exponent - target).abs() <= 0.1,
            format!("exponent {:.4} (target {target} ± 0.1)", r.q_minus_h_exponent),
        ));
    }
    print_checks(&checks);
    ctx.emit("diag.json", &to_json(&reports)?)?;
    Ok(checks)
}

/// `envelopes`: multiplier envelope suite with train/validate constants.
pub fn envelopes(ctx: &Context) -> CliResult<Vec<Check>> {
    let law = ctx.config.damping_law()?;
    let cfg = ctx.config.zone_config()?;
    let ecfg = EnvelopeConfig { seed: ctx.config.probes.seed, ..EnvelopeConfig::default() };
    let (t0s, reports) = verify::envelope_suite(&law, &cfg, &ecfg)?;
    for (f, t0) in &t0s {
        println!("T0 ({}) = {t0}", f.name());
    }
    let mut table = Table::new(&["claim", "probes", "n", "constant", "validation", "min_ratio", "max_ratio", "pass"]);
    let mut checks = Vec::new();
    for r in &reports {
        table.push(vec![r.claim.clone(), r.probes.clone(), r.n_probes.to_string(), num(r.constant), num(r.validation), num(r.min_ratio), num(r.max_ratio), r.pass.to_string()]);
        checks.push(Check::new(
            format!("{} [{}]", r.claim, r.probes),
            r.pass,
            format!("{} probes, C = {:.4}, held-out/train {:.3} (<= {})", r.n_probes, r.constant, r.validation, ecfg.validate_factor),
        ));
    }
    print_checks(&checks);
    ctx.emit("envelopes.csv", &table.to_csv())?;
    ctx.emit("envelopes.json", &to_json(&reports)?)?;
    Ok(checks)
}

/// `nonlinear`: pseudo-spectral run of the damped Euler system.
pub fn nonlinear(ctx: &Context, compare_linear: bool, snapshot: Option<&Path>) -> CliResult<Vec<Check>> {
    let params = ctx.config.euler_params()?;
    let cfg = ctx.config.solver_config();
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let mut last_t = 0.0;
    let out = run_with(params, &cfg, RunOptions { compare_linear }, &mut |_, f| {
        if f.t >= last_t + 10.0 - 1e-9 {
            last_t = f.t;
            eprintln!("t = {:.2}", f.t);
        }
        Ok(())
    })?;
    if let Some(p) = snapshot {
        let solver = deul_core::nonlinear::Solver::new(params, cfg.l, cfg.n, cfg.nonlinear)?;
        write_snapshot(p, &solver, &out.final_field)?;
        println!("wrote {}", p.display());
    }
    let drift = out.mass_drift();
    let ec = energy_check(&out.ledger, fit_energy_constant(&out.ledger));
    let mut checks = vec![
        Check::new("mass", drift <= 1e-8, format!("relative mass drift {drift:.2e} (<= 1e-8); dt = {}, {} steps", out.dt, out.steps)),
        Check::new("hermitian symmetry", out.max_hermitian_defect <= 1e-12, format!("max defect {:.2e} (<= 1e-12)", out.max_hermitian_defect)),
    ];
    println!("energy ledger: max (E + D)/E0 = {:.6}", ec.max_ratio);
    println!("weighted energy sup = {:.6e}, data norm = {:.6e}", out.weighted.last().map(|w| w.1).unwrap_or(0.0), out.data_norm);
    if let Some(d) = &out.deviation {
        let last = d.values.last().copied().unwrap_or(0.0);
        let max = d.values.iter().copied().fold(0.0, f64::max);
        checks.push(Check::new("linear deviation", max <= 0.1, format!("relative deviation from the linear flow: final {last:.3e}, max {max:.3e} (<= 0.1)")));
    }
    print_checks(&checks);
    let mut all = out.series.clone();
    if let Some(d) = &out.deviation {
        let mut d = d.clone();
        // the deviation series is recorded on the output times without t = 0
        if d.times.len() + 1 == all[0].times.len() {
            d.times.insert(0, 0.0);
            d.values.insert(0, 0.0);
        }
        if d.times.len() == all[0].times.len() {
            all.push(d);
        }
    }
    ctx.emit("nonlinear_series.csv", &series_csv(&all))?;
    let mut ledger = Table::new(&["t", "energy", "dissipation", "mass", "weighted_energy_sup"]);
    for i in 0..out.ledger.times.len() {
        ledger.push(vec![
            num(out.ledger.times[i]),
            num(out.ledger.energy[i]),
            num(out.ledger.dissipation[i]),
            num(out.mass.get(i).map(|m| m.1).unwrap_or(f64::NAN)),
            num(out.weighted.get(i).map(|w| w.1).unwrap_or(f64::NAN)),
        ]);
    }
    ctx.emit("nonlinear_ledger.csv", &ledger.to_csv())?;
    let lam = params.law.lambda();
    let svg = decay_plot(&out.series, "nonlinear decay", 1.0, &|s| {
        Some(verify::predicted_rate(lam, 2, &s.field, s.kind, s.order))
    })?;
    ctx.emit("nonlinear.svg", &svg)?;
    Ok(checks)
}

/// `verify-all`: the acceptance suite.
pub fn verify_all(ctx: &Context, opts: &VerifyOptions) -> CliResult<Vec<Check>> {
    if let Some(only) = &opts.only {
        if let Some(bad) = only.iter().find(|&&id| id == 0 || id > verify::CRITERIA) {
            return Err(CliError::Config(format!("unknown criterion {bad} (valid: 1..={})", verify::CRITERIA)));
        }
    }
    let results: Vec<CriterionResult> = verify::run_suite(opts, &mut |r| println!("{}", r.line()));
    ctx.emit("verify.json", &to_json(&results)?)?;
    ctx.emit("verify.csv", &verify::result_csv(&results))?;
    let passed = results.iter().filter(|r| r.pass).count();
    println!("{passed}/{} criteria passed", results.len());
    Ok(results.iter().map(|r| Check::new(format!("criterion {} ({})", r.id, r.name), r.pass, r.summary.clone())).collect())
}
