//! Deterministic static SVG plots: log-log decay curves with slope guide lines and
//! a zone-atlas raster.

use crate::{CliError, CliResult};
use deul_core::Zone;
use std::fmt::Write;

/// Series index, series, and its finite positive points.
type Cleaned<'a> = (usize, &'a PlotSeries, Vec<(f64, f64)>);

/// One curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Slope of the guide line in log-log coordinates; `None` draws the fitted slope.
    pub guide_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: u32,
    pub height: u32,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self { title: String::new(), x_label: "t".into(), y_label: "norm".into(), width: 720, height: 480 }
    }
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];
const MARGIN: f64 = 60.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Least-squares slope of `ln y` against `ln x`; 0 for fewer than two distinct abscissae.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 0.0;
    }
    let mx = points.iter().map(|p| p.0.ln()).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0.ln() - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0.ln() - mx) * (p.1.ln() - my)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Renders a log-log plot. Points with nonpositive coordinates are dropped; an error is
/// returned if nothing drawable remains.
pub fn emit_plot(series: &[PlotSeries], style: &PlotStyle) -> CliResult<String> {
    let cleaned: Vec<Cleaned> = series
        .iter()
        .enumerate()
        .map(|(i, s)| (i, s, s.points.iter().copied().filter(|p| p.0 > 0.0 && p.1 > 0.0 && p.0.is_finite() && p.1.is_finite()).collect::<Vec<_>>()))
        .filter(|(_, _, p)| !p.is_empty())
        .collect();
    if cleaned.is_empty() {
        return Err(CliError::Plot("no drawable points (empty series set)".into()));
    }
    let all = cleaned.iter().flat_map(|c| c.2.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x.log10());
        x1 = x1.max(x.log10());
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let (w, h) = (style.width as f64, style.height as f64);
    let px = |lx: f64| MARGIN + (lx - x0) / (x1 - x0) * (w - 2.0 * MARGIN);
    let py = |ly: f64| h - MARGIN - (ly - y0) / (y1 - y0) * (h - 2.0 * MARGIN);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#, style.width, style.height, style.width, style.height);
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{:.3}" height="{:.3}" fill="none" stroke="#444"/>"##,
        w - 2.0 * MARGIN,
        h - 2.0 * MARGIN
    );
    // decade ticks
    for d in (x0.ceil() as i64)..=(x1.floor() as i64) {
        let x = px(d as f64);
        let _ = writeln!(svg, r##"<line x1="{x:.3}" y1="{:.3}" x2="{x:.3}" y2="{:.3}" stroke="#ddd"/>"##, MARGIN, h - MARGIN);
        let _ = writeln!(svg, r#"<text x="{x:.3}" y="{:.3}" font-size="11" text-anchor="middle">1e{d}</text>"#, h - MARGIN + 16.0);
    }
    for d in (y0.ceil() as i64)..=(y1.floor() as i64) {
        let y = py(d as f64);
        let _ = writeln!(svg, r##"<line x1="{MARGIN}" y1="{y:.3}" x2="{:.3}" y2="{y:.3}" stroke="#ddd"/>"##, w - MARGIN);
        let _ = writeln!(svg, r#"<text x="{:.3}" y="{:.3}" font-size="11" text-anchor="end">1e{d}</text>"#, MARGIN - 4.0, y + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{:.3}" y="24" font-size="14" text-anchor="middle">{}</text>"#, w / 2.0, esc(&style.title));
    let _ = writeln!(svg, r#"<text x="{:.3}" y="{:.3}" font-size="12" text-anchor="middle">{}</text>"#, w / 2.0, h - 16.0, esc(&style.x_label));
    let _ = writeln!(svg, r#"<text x="16" y="{:.3}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.3})">{}</text>"#, h / 2.0, h / 2.0, esc(&style.y_label));
    for (legend_row, (i, s, pts)) in cleaned.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.3},{:.3}", px(x.log10()), py(y.log10()))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        // guide line anchored at the last point
        let slope = s.guide_slope.unwrap_or_else(|| loglog_slope(pts));
        let (xa, _) = pts[0];
        let (xb, yb) = *pts.last().expect("nonempty");
        let (lxa, lxb) = (xa.log10(), xb.log10());
        let lyb = yb.log10();
        let lya = lyb - slope * (lxb - lxa);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="{color}" stroke-dasharray="5,4" stroke-width="1"/>"#,
            px(lxa),
            py(lya),
            px(lxb),
            py(lyb)
        );
        let ly = MARGIN + 14.0 + 16.0 * legend_row as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.3}" y="{ly:.3}" font-size="11" fill="{color}" text-anchor="end">{} (guide slope {:.3})</text>"#,
            w - MARGIN - 6.0,
            esc(&s.label),
            // rounding noise must not print as "-0.000"
            if slope.abs() < 5e-4 { 0.0 } else { slope }
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn zone_color(z: Zone) -> &'static str {
    match z {
        Zone::Elliptic => "#2c7bb6",
        Zone::Reduced => "#abd9e9",
        Zone::PseudoDiff => "#fdae61",
        Zone::Hyperbolic => "#d7191c",
        Zone::BoundedResidual => "#999999",
    }
}

/// Raster of zone labels on a `(t, k)` grid (`t` along x, `k` along y, both in row order).
pub fn zone_atlas_svg(ts: &[f64], ks: &[f64], zones: &[Zone], title: &str) -> CliResult<String> {
    if ts.is_empty() || ks.is_empty() || zones.len() != ts.len() * ks.len() {
        return Err(CliError::Plot("zone atlas needs a nonempty full (t, k) grid".into()));
    }
    let cell = 12.0;
    let (w, h) = (2.0 * MARGIN + cell * ts.len() as f64, 2.0 * MARGIN + cell * ks.len() as f64 + 40.0);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.3}" y="24" font-size="14" text-anchor="middle">{}</text>"#, w / 2.0, esc(title));
    for (i, _) in ts.iter().enumerate() {
        for (j, _) in ks.iter().enumerate() {
            let z = zones[i * ks.len() + j];
            let x = MARGIN + cell * i as f64;
            let y = MARGIN + cell * (ks.len() - 1 - j) as f64;
            let _ = writeln!(svg, r#"<rect x="{x:.3}" y="{y:.3}" width="{cell}" height="{cell}" fill="{}"/>"#, zone_color(z));
        }
    }
    let by = MARGIN + cell * ks.len() as f64 + 20.0;
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="{by:.3}" font-size="11">t: {:.3e} .. {:.3e} (left to right); k: {:.3e} .. {:.3e} (bottom to top)</text>"#, ts[0], ts[ts.len() - 1], ks[0], ks[ks.len() - 1]);
    for (n, z) in [Zone::Elliptic, Zone::Reduced, Zone::PseudoDiff, Zone::Hyperbolic, Zone::BoundedResidual].iter().enumerate() {
        let x = MARGIN + 110.0 * n as f64;
        let _ = writeln!(svg, r#"<rect x="{x:.3}" y="{:.3}" width="10" height="10" fill="{}"/>"#, by + 8.0, zone_color(*z));
        let _ = writeln!(svg, r#"<text x="{:.3}" y="{:.3}" font-size="11">{}</text>"#, x + 14.0, by + 17.0, z.name());
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(points: Vec<(f64, f64)>) -> PlotSeries {
        PlotSeries { label: "s".into(), points, guide_slope: None }
    }

    #[test]
    fn empty_series_is_an_error() {
        assert!(emit_plot(&[], &PlotStyle::default()).is_err());
        assert!(emit_plot(&[series(vec![])], &PlotStyle::default()).is_err());
        assert!(emit_plot(&[series(vec![(0.0, 1.0), (1.0, -1.0)])], &PlotStyle::default()).is_err());
    }

    #[test]
    fn constant_series_gets_flat_guide() {
        let s = series((1..=10).map(|i| (i as f64, 3.0)).collect());
        let svg = emit_plot(&[s], &PlotStyle::default()).unwrap();
        assert!(svg.contains("guide slope 0.000"));
    }

    #[test]
    fn deterministic_output() {
        let s = vec![series((1..=20).map(|i| (i as f64, (i as f64).powf(-0.75))).collect())];
        let a = emit_plot(&s, &PlotStyle::default()).unwrap();
        let b = emit_plot(&s, &PlotStyle::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("guide slope -0.750"));
    }
}
