//! Quadrature and summation utilities: Gauss–Legendre rules, adaptive
//! Gauss–Kronrod integration, and compensated summation.

use crate::error::{Error, Result};

/// Neumaier-compensated sum of a sequence (deterministic order).
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes increasing.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(z) and P_{n-1}(z).
            let (mut p0, mut p1) = (1.0f64, 0.0f64);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        // Recompute derivative at the converged node.
        let (mut p0, mut p1) = (1.0f64, 0.0f64);
        for j in 0..n {
            let p2 = p1;
            p1 = p0;
            p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
        }
        if n > 0 {
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// A composite quadrature rule: nodes and weights for `int_a^b f`.
#[derive(Debug, Clone)]
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    /// Composite Gauss rule with `order` points on each panel given by consecutive breakpoints.
    pub fn from_breakpoints(breaks: &[f64], order: usize) -> Self {
        let (gx, gw) = gauss_legendre(order);
        let mut nodes = Vec::with_capacity((breaks.len().saturating_sub(1)) * order);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (xi, wi) in gx.iter().zip(&gw) {
                nodes.push(mid + half * xi);
                weights.push(half * wi);
            }
        }
        Self { nodes, weights }
    }

    /// Geometric panels of `[s, t]` in the variable `ln(1+tau)`, suited to
    /// kernels that decay like powers of `(1+tau)`.
    pub fn geometric(s: f64, t: f64, panels: usize, order: usize) -> Self {
        let ls = s.ln_1p();
        let lt = t.ln_1p();
        let breaks: Vec<f64> = (0..=panels)
            .map(|i| {
                if i == 0 {
                    s
                } else if i == panels {
                    t
                } else {
                    (ls + (lt - ls) * i as f64 / panels as f64).exp_m1()
                }
            })
            .collect();
        Self::from_breakpoints(&breaks, order)
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        compensated_sum(self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)))
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = WGK[7] * fc;
    let mut rg = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of `f` over `[a, b]`.
///
/// Subdivides the interval with the largest error estimate until the total
/// estimated error is below `max(abs_tol, rel_tol |I|)`.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let mut segs: Vec<(f64, f64, f64, f64)> = Vec::new();
    let (i0, e0) = gk15(&f, a, b);
    segs.push((a, b, i0, e0));
    for _ in 0..20_000 {
        let total: f64 = compensated_sum(segs.iter().map(|s| s.2));
        let err: f64 = segs.iter().map(|s| s.3).sum();
        if !total.is_finite() {
            return Err(Error::NonConvergence("non-finite integrand".into()));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        let (idx, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("segment list is never empty");
        let (sa, sb, _, _) = segs.swap_remove(idx);
        let m = 0.5 * (sa + sb);
        if m <= sa || m >= sb {
            // Interval cannot be split further; accept current estimate.
            let total = compensated_sum(segs.iter().map(|s| s.2)) + gk15(&f, sa, sb).0;
            return Ok(total);
        }
        let (l, le) = gk15(&f, sa, m);
        let (r, re) = gk15(&f, m, sb);
        segs.push((sa, m, l, le));
        segs.push((m, sb, r, re));
    }
    Err(Error::NonConvergence("adaptive quadrature exceeded subdivision limit".into()))
}

/// Adaptive quadrature over `[a, b]` after splitting at geometric breakpoints in `ln(1+x)`,
/// which keeps power-law integrands over long ranges well conditioned.
pub fn adaptive_geometric<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, pieces: usize, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let la = a.ln_1p();
    let lb = b.ln_1p();
    let mut parts = Vec::with_capacity(pieces);
    for i in 0..pieces {
        let x0 = if i == 0 { a } else { (la + (lb - la) * i as f64 / pieces as f64).exp_m1() };
        let x1 = if i + 1 == pieces { b } else { (la + (lb - la) * (i + 1) as f64 / pieces as f64).exp_m1() };
        parts.push(adaptive(&f, x0, x1, abs_tol / pieces as f64, rel_tol)?);
    }
    Ok(compensated_sum(parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in 1..=12 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let num: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((num - exact).abs() < 1e-13, "n={n} deg={deg}: {num} vs {exact}");
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn adaptive_matches_closed_forms() {
        let v = adaptive(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-14, 1e-14).unwrap();
        assert!((v - 2.0).abs() < 1e-13);
        let v = adaptive(|x: f64| 1.0 / (1.0 + x * x), 0.0, 1e3, 1e-13, 1e-13).unwrap();
        assert!((v - 1e3f64.atan()).abs() < 1e-12);
        let v = adaptive_geometric(|x: f64| (1.0 + x).powf(-1.5), 0.0, 1e6, 16, 1e-14, 1e-13).unwrap();
        let exact = 2.0 * (1.0 - (1.0 + 1e6f64).powf(-0.5));
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = compensated_sum([1e16, 1.0, -1e16, 1.0]);
        assert_eq!(v, 2.0);
    }

    #[test]
    fn geometric_rule_is_accurate() {
        let r = CompositeRule::geometric(10.0, 1e4, 20, 8);
        let v = r.integrate(|x| (1.0 + x).powf(-0.5));
        let exact = 2.0 * ((1.0 + 1e4f64).sqrt() - 11f64.sqrt());
        assert!((v - exact).abs() < 1e-12 * exact);
    }
}
