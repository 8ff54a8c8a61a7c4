//! Radial frequency profiles, their evolution through the Green matrix,
//! Plancherel norms, and log-log decay-rate fitting.
//!
//! Derivatives `d^alpha` are represented by the radial multiplier `|k|^a`
//! (`a = |alpha|`), which carries the same decay rates; radial symmetry reduces
//! every n-dimensional frequency integral to a one-dimensional quadrature.
//! The Fourier transform uses the symmetric `(2 pi)^(-n/2)` convention.

use crate::damping::DampingLaw;
use crate::error::{invalid, Error, Result};
use crate::propagator::{green_series, PropagatorOptions};
use crate::quad::{compensated_sum, gauss_legendre};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Surface area of the unit sphere `S^(n-1)`.
pub fn sphere_area(n: usize) -> f64 {
    // 2 pi^(n/2) / Gamma(n/2), via the recurrence |S^(n+1)| = 2 pi |S^(n-1)| / n
    let (mut area, start) = if n.is_multiple_of(2) { (2.0 * PI, 2) } else { (2.0, 1) };
    let mut d = start;
    while d < n {
        area *= 2.0 * PI / d as f64;
        d += 2;
    }
    area
}

/// Quadrature layout for `int_0^inf f(k) k^(n-1) dk`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLayout {
    pub k_min: f64,
    pub k_max: f64,
    /// Number of geometric panels between `k_min` and `k_max` (one more panel covers `[0, k_min]`).
    pub panels: usize,
    pub order: usize,
    /// Extra panel breakpoints (e.g. cutoff radii), merged into the geometric partition.
    pub breakpoints: Vec<f64>,
}

impl Default for NodeLayout {
    /// 50 panels of 8 Gauss points (400 nodes) over `[0, 1e-4] U [1e-4, 50]`, with breakpoints
    /// at the default cutoff radius 1 and its double.
    fn default() -> Self {
        Self { k_min: 1e-4, k_max: 50.0, panels: 49, order: 8, breakpoints: vec![1.0, 2.0] }
    }
}

impl NodeLayout {
    /// Layout with twice as many panels (grid-independence checks).
    pub fn refined(&self) -> Self {
        Self { panels: 2 * self.panels + 1, ..self.clone() }
    }

    pub fn build(&self, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if n < 2 {
            return Err(invalid(format!("dimension must be >= 2, got {n}")));
        }
        if !(self.k_min > 0.0 && self.k_max > self.k_min) || self.panels == 0 || self.order == 0 {
            return Err(invalid("invalid node layout".to_string()));
        }
        let (lmin, lmax) = (self.k_min.ln(), self.k_max.ln());
        let mut br: Vec<f64> = vec![0.0];
        br.extend((0..=self.panels).map(|i| (lmin + (lmax - lmin) * i as f64 / self.panels as f64).exp()));
        br[1] = self.k_min;
        br[self.panels + 1] = self.k_max;
        for &x in &self.breakpoints {
            if x > self.k_min && x < self.k_max {
                br.push(x);
            }
        }
        br.sort_by(f64::total_cmp);
        // Drop breakpoints that nearly coincide with a neighbour.
        let mut merged: Vec<f64> = Vec::with_capacity(br.len());
        for x in br {
            match merged.last() {
                Some(&p) if x - p <= 1e-3 * x => {
                    if x == self.k_max || self.breakpoints.contains(&x) {
                        *merged.last_mut().expect("nonempty") = x;
                    }
                }
                _ => merged.push(x),
            }
        }
        let (gx, gw) = gauss_legendre(self.order);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for pair in merged.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let h = 0.5 * (b - a);
            for (x, w) in gx.iter().zip(&gw) {
                let k = a + h * (x + 1.0);
                nodes.push(k);
                weights.push(h * w * k.powi(n as i32 - 1));
            }
        }
        Ok((nodes, weights))
    }
}

/// Kinds of radial profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProfileKind {
    /// Smooth bump equal to 1 on `[0, R]` and supported in `[0, 2R]`.
    Hat { r: f64 },
    /// `exp(-k^2 / (2 sigma^2))`.
    Gaussian { sigma: f64 },
    /// Smooth bump supported in `[a, b]`.
    Annulus { a: f64, b: f64 },
}

/// A radial amplitude sampled at quadrature nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub n: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub cutoff_r: f64,
}

/// `exp(-1/x)` for `x > 0`, else 0.
fn psi(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Smooth step: 0 for `x <= 0`, 1 for `x >= 1`.
pub fn smooth_step(x: f64) -> f64 {
    let a = psi(x);
    let b = psi(1.0 - x);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Low-frequency cutoff: 1 on `[0, R]`, 0 on `[2R, inf)`.
pub fn chi(r: f64, k: f64) -> f64 {
    1.0 - smooth_step((k - r) / r)
}

impl ProfileKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ProfileKind::Hat { r } if r > 0.0 && r.is_finite() => Ok(()),
            ProfileKind::Gaussian { sigma } if sigma > 0.0 && sigma.is_finite() => Ok(()),
            ProfileKind::Annulus { a, b } if a > 0.0 && b > a && b.is_finite() => Ok(()),
            other => Err(invalid(format!("invalid profile parameters: {other:?}"))),
        }
    }

    pub fn eval(&self, k: f64) -> f64 {
        match *self {
            ProfileKind::Hat { r } => chi(r, k),
            ProfileKind::Gaussian { sigma } => (-k * k / (2.0 * sigma * sigma)).exp(),
            ProfileKind::Annulus { a, b } => {
                let y = (2.0 * k - a - b) / (b - a);
                if y.abs() < 1.0 {
                    (1.0 - 1.0 / (1.0 - y * y)).exp()
                } else {
                    0.0
                }
            }
        }
    }
}

/// Samples a profile of the given kind on the layout's nodes.
pub fn make_profile(kind: ProfileKind, n: usize, layout: &NodeLayout) -> Result<RadialProfile> {
    kind.validate()?;
    let (nodes, weights) = layout.build(n)?;
    let amplitudes = nodes.iter().map(|&k| kind.eval(k)).collect();
    let cutoff_r = match kind {
        ProfileKind::Hat { r } => r,
        _ => 1.0,
    };
    Ok(RadialProfile { n, nodes, weights, amplitudes, cutoff_r })
}

impl RadialProfile {
    /// Same nodes, zero amplitude.
    pub fn zeros_like(&self) -> Self {
        Self { amplitudes: vec![0.0; self.nodes.len()], ..self.clone() }
    }

    pub fn with_amplitudes(&self, amplitudes: Vec<f64>) -> Self {
        assert_eq!(amplitudes.len(), self.nodes.len());
        Self { amplitudes, ..self.clone() }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.with_amplitudes(self.amplitudes.iter().map(|x| c * x).collect())
    }

    pub fn same_nodes(&self, other: &RadialProfile) -> bool {
        self.n == other.n && self.nodes == other.nodes
    }
}

/// Splits into low (`chi_R f`) and high (`(1 - chi_R) f`) parts.
pub fn split(profile: &RadialProfile, r: f64) -> Result<(RadialProfile, RadialProfile)> {
    if !(r > 0.0) {
        return Err(invalid(format!("cutoff radius must be positive, got {r}")));
    }
    let mut low = Vec::with_capacity(profile.nodes.len());
    let mut high = Vec::with_capacity(profile.nodes.len());
    for (&k, &f) in profile.nodes.iter().zip(&profile.amplitudes) {
        let c = chi(r, k);
        let l = c * f;
        low.push(l);
        high.push(f - l);
    }
    let mut lo = profile.with_amplitudes(low);
    let mut hi = profile.with_amplitudes(high);
    lo.cutoff_r = r;
    hi.cutoff_r = r;
    Ok((lo, hi))
}

fn l2_of(n: usize, nodes: &[f64], weights: &[f64], amps: &[f64], a: u32) -> f64 {
    let s = compensated_sum(nodes.iter().zip(weights).zip(amps).map(|((&k, &w), &f)| w * k.powi(2 * a as i32) * f * f));
    (sphere_area(n) * s).sqrt()
}

fn l1hat_of(n: usize, nodes: &[f64], weights: &[f64], amps: &[f64], a: u32) -> f64 {
    let s = compensated_sum(nodes.iter().zip(weights).zip(amps).map(|((&k, &w), &f)| w * k.powi(a as i32) * f.abs()));
    sphere_area(n) * (2.0 * PI).powf(-(n as f64) / 2.0) * s
}

/// `||Lambda^a f||_{L^2}` by Plancherel.
pub fn l2_norm(profile: &RadialProfile, a: u32) -> f64 {
    l2_of(profile.n, &profile.nodes, &profile.weights, &profile.amplitudes, a)
}

/// `(2 pi)^(-n/2) int |f^| dk`: an upper bound for `||f||_{L^inf}`, sharp for nonnegative `f^`.
pub fn l1hat_norm(profile: &RadialProfile) -> f64 {
    l1hat_norm_order(profile, 0)
}

/// `(2 pi)^(-n/2) int |k|^a |f^| dk`.
pub fn l1hat_norm_order(profile: &RadialProfile, a: u32) -> f64 {
    l1hat_of(profile.n, &profile.nodes, &profile.weights, &profile.amplitudes, a)
}

/// Which norm a series records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormKind {
    L2,
    LinfProxy,
}

/// A time series of one norm of one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSeries {
    pub label: String,
    pub field: String,
    pub kind: NormKind,
    pub order: u32,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl NormSeries {
    pub fn new(field: &str, kind: NormKind, order: u32, times: Vec<f64>, values: Vec<f64>) -> Self {
        let k = match kind {
            NormKind::L2 => "L2",
            NormKind::LinfProxy => "Linf",
        };
        Self { label: format!("{field}:{k}:a={order}"), field: field.to_string(), kind, order, times, values }
    }
}

/// Result of a log-log least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub exponent: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// OLS fit of `ln value` against `ln t` over samples with `t` in the window.
pub fn fit_slope(series: &NormSeries, window: (f64, f64)) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = series
        .times
        .iter()
        .zip(&series.values)
        .filter(|(&t, _)| t >= window.0 && t <= window.1)
        .map(|(&t, &v)| (t, v))
        .collect();
    if pts.len() < 8 {
        return Err(Error::Usage(format!("slope fit needs >= 8 samples in window, found {}", pts.len())));
    }
    if pts.iter().any(|&(t, v)| !(t > 0.0) || !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("series {} has nonpositive samples in the fit window", series.label)));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = compensated_sum(xs.iter().copied()) / n;
    let my = compensated_sum(ys.iter().copied()) / n;
    let sxx = compensated_sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    let sxy = compensated_sum(xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)));
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ssr = compensated_sum(xs.iter().zip(&ys).map(|(x, y)| (y - icpt - slope * x).powi(2)));
    let stderr = (ssr / (n - 2.0) / sxx).sqrt();
    Ok(SlopeFit { exponent: slope, stderr, window: (pts[0].0, pts[pts.len() - 1].0), samples: pts.len() })
}

/// Log-spaced time grid on `[t0, t1]` with `n` points.
pub fn log_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (t0.ln() + (t1.ln() - t0.ln()) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Input for [`evolve_norms`].
#[derive(Debug, Clone)]
pub struct Evolution<'a> {
    pub law: DampingLaw,
    pub profile_v: &'a RadialProfile,
    pub profile_u: &'a RadialProfile,
    /// Vorticity amplitude, transported by the exact factor `exp(-int b)`.
    pub profile_w: Option<&'a RadialProfile>,
    pub s: f64,
    pub t_grid: &'a [f64],
    pub orders: &'a [u32],
}

/// Evolved amplitudes at every node and output time.
#[derive(Debug, Clone)]
pub struct EvolvedField {
    pub times: Vec<f64>,
    /// `v[i][j]`: amplitude at time index `i`, node `j`.
    pub v: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub w: Option<Vec<Vec<f64>>>,
}

/// Data amplitudes below this fraction of the largest amplitude are not evolved (reported as zero).
pub const NEGLIGIBLE: f64 = 1e-20;

/// Propagator options used for profile evolution: default tolerances and a tail cutoff
/// that drops oscillatory nodes once their damping factor is below `1e-18`.
pub fn evolution_options() -> PropagatorOptions {
    PropagatorOptions { cutoff: Some(1e-18), ..PropagatorOptions::default() }
}

/// Evolves the data node by node through the Green matrix.
pub fn evolve_field(ev: &Evolution<'_>, opts: &PropagatorOptions) -> Result<EvolvedField> {
    let pv = ev.profile_v;
    let pu = ev.profile_u;
    if !pv.same_nodes(pu) || ev.profile_w.is_some_and(|w| !w.same_nodes(pv)) {
        return Err(Error::Usage("profiles must share nodes".into()));
    }
    if ev.t_grid.iter().any(|&t| t < ev.s) || ev.t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Usage("time grid must be nondecreasing and >= s".into()));
    }
    let nt = ev.t_grid.len();
    let floor = NEGLIGIBLE * pv.amplitudes.iter().chain(&pu.amplitudes).fold(0.0f64, |a, x| a.max(x.abs()));
    let per_node: Vec<Result<(Vec<f64>, Vec<f64>)>> = pv
        .nodes
        .par_iter()
        .enumerate()
        .map(|(j, &k)| {
            let (v0, u0) = (pv.amplitudes[j], pu.amplitudes[j]);
            if v0.abs() <= floor && u0.abs() <= floor {
                return Ok((vec![0.0; nt], vec![0.0; nt]));
            }
            let gs = green_series(&ev.law, k, ev.s, ev.t_grid, opts)?;
            Ok(gs.iter().map(|g| g.apply(v0, u0)).unzip())
        })
        .collect();
    let mut v = vec![vec![0.0; pv.nodes.len()]; nt];
    let mut u = vec![vec![0.0; pv.nodes.len()]; nt];
    for (j, r) in per_node.into_iter().enumerate() {
        let (vs, us) = r?;
        for i in 0..nt {
            v[i][j] = vs[i];
            u[i][j] = us[i];
        }
    }
    let w = match ev.profile_w {
        Some(pw) => {
            let mut w = Vec::with_capacity(nt);
            for &t in ev.t_grid {
                let f = ev.law.vorticity_factor(ev.s, t)?;
                w.push(pw.amplitudes.iter().map(|x| f * x).collect());
            }
            Some(w)
        }
        None => None,
    };
    Ok(EvolvedField { times: ev.t_grid.to_vec(), v, u, w })
}

/// Norm series of the evolved fields: `L2` and `L^inf`-proxy for each field and order.
pub fn evolve_norms(ev: &Evolution<'_>) -> Result<Vec<NormSeries>> {
    let field = evolve_field(ev, &evolution_options())?;
    Ok(norms_of(ev.profile_v, &field, ev.orders))
}

/// Norm series for an already evolved field.
pub fn norms_of(template: &RadialProfile, field: &EvolvedField, orders: &[u32]) -> Vec<NormSeries> {
    let (n, nodes, weights) = (template.n, &template.nodes, &template.weights);
    let mut out = Vec::new();
    let mut channels: Vec<(&str, &Vec<Vec<f64>>)> = vec![("v", &field.v), ("u", &field.u)];
    if let Some(w) = &field.w {
        channels.push(("w", w));
    }
    for (name, data) in channels {
        for &a in orders {
            let l2 = data.iter().map(|amp| l2_of(n, nodes, weights, amp, a)).collect();
            out.push(NormSeries::new(name, NormKind::L2, a, field.times.clone(), l2));
            let li = data.iter().map(|amp| l1hat_of(n, nodes, weights, amp, a)).collect();
            out.push(NormSeries::new(name, NormKind::LinfProxy, a, field.times.clone(), li));
        }
    }
    out
}

/// Finds a series by label.
pub fn find_series<'a>(series: &'a [NormSeries], label: &str) -> Result<&'a NormSeries> {
    series.iter().find(|s| s.label == label).ok_or_else(|| Error::Usage(format!("no series labelled {label}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((sphere_area(5) - 8.0 * PI * PI / 3.0).abs() < 1e-13);
    }

    #[test]
    fn layout_invariants() {
        let (k, w) = NodeLayout::default().build(2).unwrap();
        assert!(k.len() >= 400);
        assert!(k[0] < 1e-4 && *k.last().unwrap() > 10.0);
        assert!(k.windows(2).all(|p| p[0] < p[1]));
        assert!(w.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn gaussian_self_test() {
        for n in 2..=4 {
            let p = make_profile(ProfileKind::Gaussian { sigma: 1.0 }, n, &NodeLayout::default()).unwrap();
            let exact = PI.powf(n as f64 / 4.0);
            assert!((l2_norm(&p, 0) - exact).abs() < 1e-6 * exact, "n = {n}");
            // Fourier inversion at the origin: f(0) = 1 for f = exp(-|x|^2/2).
            assert!((l1hat_norm(&p) - 1.0).abs() < 1e-10, "n = {n}");
        }
    }

    #[test]
    fn hat_values() {
        let h = ProfileKind::Hat { r: 1.0 };
        assert_eq!(h.eval(0.5), 1.0);
        assert_eq!(h.eval(2.5), 0.0);
        assert!(h.eval(1.5) > 0.0 && h.eval(1.5) < 1.0);
        assert!(ProfileKind::Annulus { a: 2.0, b: 1.0 }.validate().is_err());
        assert!(ProfileKind::Hat { r: -1.0 }.validate().is_err());
    }

    #[test]
    fn split_partition_of_unity() {
        let p = make_profile(ProfileKind::Gaussian { sigma: 0.7 }, 2, &NodeLayout::default()).unwrap();
        let (lo, hi) = split(&p, 0.5).unwrap();
        for j in 0..p.nodes.len() {
            assert!((lo.amplitudes[j] + hi.amplitudes[j] - p.amplitudes[j]).abs() <= 1e-14);
        }
        let hat = make_profile(ProfileKind::Hat { r: 0.25 }, 2, &NodeLayout::default()).unwrap();
        let (_, hi) = split(&hat, 0.5).unwrap();
        assert!(hi.amplitudes.iter().all(|&x| x == 0.0));
        let ann = make_profile(ProfileKind::Annulus { a: 3.0, b: 4.0 }, 2, &NodeLayout::default()).unwrap();
        let (lo, _) = split(&ann, 1.0).unwrap();
        assert!(lo.amplitudes.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fit_slope_examples() {
        let ts = log_grid(1e2, 1e4, 20);
        let s = NormSeries::new("v", NormKind::L2, 0, ts.clone(), ts.iter().map(|t| t.powf(-0.75)).collect());
        let f = fit_slope(&s, (1e2, 1e4)).unwrap();
        assert!((f.exponent + 0.75).abs() < 1e-12 && f.stderr < 1e-12);
        let c = NormSeries::new("v", NormKind::L2, 0, ts.clone(), vec![3.0; ts.len()]);
        assert!(fit_slope(&c, (1e2, 1e4)).unwrap().exponent.abs() < 1e-14);
        assert!(fit_slope(&c, (1e2, 2e2)).is_err());
    }

    #[test]
    fn evolution_at_initial_time_returns_initial_norms() {
        let layout = NodeLayout::default();
        let pv = make_profile(ProfileKind::Hat { r: 1.0 }, 2, &layout).unwrap();
        let pu = pv.zeros_like();
        let law = DampingLaw::new(1.0, 0.5).unwrap();
        let ev = Evolution { law, profile_v: &pv, profile_u: &pu, profile_w: Some(&pv), s: 3.0, t_grid: &[3.0], orders: &[0, 1] };
        let series = evolve_norms(&ev).unwrap();
        assert_eq!(find_series(&series, "v:L2:a=0").unwrap().values[0], l2_norm(&pv, 0));
        assert_eq!(find_series(&series, "v:L2:a=1").unwrap().values[0], l2_norm(&pv, 1));
        assert_eq!(find_series(&series, "u:L2:a=0").unwrap().values[0], 0.0);
        assert_eq!(find_series(&series, "w:L2:a=0").unwrap().values[0], l2_norm(&pv, 0));
    }
}
