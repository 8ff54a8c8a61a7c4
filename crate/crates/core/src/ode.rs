//! Dormand–Prince 5(4) integrator with Hairer's continuous extension for
//! fixed-size real systems.

use crate::error::{Error, Result};

/// Tolerances and step limits for [`dopri5`].
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h_max: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, max_steps: 5_000_000, h_max: f64::INFINITY }
    }
}

/// Integration statistics returned alongside the solution.
#[derive(Debug, Clone, Copy, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[inline]
fn axpy<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for i in 0..D {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

#[inline]
fn err_norm<const D: usize>(err: &[f64; D], y0: &[f64; D], y1: &[f64; D], o: &OdeOptions) -> f64 {
    let mut acc = 0.0;
    for i in 0..D {
        let sc = o.atol + o.rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / sc;
        acc += r * r;
    }
    (acc / D as f64).sqrt()
}

fn initial_step<const D: usize, F: FnMut(f64, &[f64; D]) -> [f64; D]>(
    f: &mut F,
    t0: f64,
    y0: &[f64; D],
    f0: &[f64; D],
    o: &OdeOptions,
    span: f64,
) -> f64 {
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..D {
        let sk = o.atol + o.rtol * y0[i].abs();
        dnf += (f0[i] / sk).powi(2);
        dny += (y0[i] / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
    h = h.min(o.h_max).min(span);
    let y1 = axpy(y0, h, &[(1.0, f0)]);
    let f1 = f(t0 + h, &y1);
    let mut der2 = 0.0;
    for i in 0..D {
        let sk = o.atol + o.rtol * y0[i].abs();
        der2 += ((f1[i] - f0[i]) / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(0.2) };
    (100.0 * h).min(h1).min(o.h_max).min(span)
}

/// Integrates `y' = f(t, y)` from `(t0, y0)` and returns the solution at every time in
/// `t_out` (nondecreasing, all `>= t0`) using the continuous extension.
pub fn dopri5<const D: usize, F: FnMut(f64, &[f64; D]) -> [f64; D]>(
    f: F,
    t0: f64,
    y0: [f64; D],
    t_out: &[f64],
    opts: &OdeOptions,
) -> Result<(Vec<[f64; D]>, OdeStats)> {
    dopri5_until(f, t0, y0, t_out, opts, |_, _, _| false)
}

/// Like [`dopri5`], but stops as soon as `stop(index, t, y)` returns `true` for an
/// emitted output; the returned vector then holds only the outputs up to that index.
pub fn dopri5_until<const D: usize, F, S>(
    mut f: F,
    t0: f64,
    y0: [f64; D],
    t_out: &[f64],
    opts: &OdeOptions,
    mut stop: S,
) -> Result<(Vec<[f64; D]>, OdeStats)>
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
    S: FnMut(usize, f64, &[f64; D]) -> bool,
{
    let mut out = Vec::with_capacity(t_out.len());
    let mut stats = OdeStats::default();
    let t_end = match t_out.last() {
        Some(&t) => t,
        None => return Ok((out, stats)),
    };
    if t_out.iter().any(|&t| !(t >= t0)) || t_out.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Usage("output times must be nondecreasing and >= t0".into()));
    }
    let mut next = 0;
    while next < t_out.len() && t_out[next] == t0 {
        out.push(y0);
        next += 1;
        if stop(next - 1, t0, &y0) {
            return Ok((out, stats));
        }
    }
    if next == t_out.len() {
        return Ok((out, stats));
    }

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    stats.evaluations += 1;
    let mut h = initial_step(&mut f, t, &y, &k1, opts, t_end - t0);
    stats.evaluations += 1;
    let (beta, safe): (f64, f64) = (0.04, 0.9);
    let expo1 = 0.2 - beta * 0.75;
    let (facc1, facc2): (f64, f64) = (1.0 / 0.2, 1.0 / 10.0);
    let mut facold: f64;
    let mut last_rejected = false;

    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::NonConvergence(format!("maximum step count reached at t = {t:e}")));
        }
        if h.abs() < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, k: f64::NAN });
        }
        let last = t + 1.01 * h >= t_end;
        if last {
            h = t_end - t;
        }
        let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(t + C5 * h, &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = f(t + h, &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y1 = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t + h, &y1);
        stats.evaluations += 6;
        let mut e = [0.0; D];
        for i in 0..D {
            e[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let err = err_norm(&e, &y, &y1, opts);
        if !err.is_finite() {
            h *= 0.1;
            stats.rejected += 1;
            last_rejected = true;
            continue;
        }
        let fac11 = err.powf(expo1);
        if err <= 1.0 {
            stats.accepted += 1;
            facold = err.max(1e-4);
            let t_new = if last { t_end } else { t + h };
            // Dense output for all requested times in (t, t_new].
            if next < t_out.len() && t_out[next] <= t_new {
                let mut r1 = [0.0; D];
                let mut r2 = [0.0; D];
                let mut r3 = [0.0; D];
                let mut r4 = [0.0; D];
                for i in 0..D {
                    let ydiff = y1[i] - y[i];
                    let bspl = h * k1[i] - ydiff;
                    r1[i] = ydiff;
                    r2[i] = bspl;
                    r3[i] = ydiff - h * k7[i] - bspl;
                    r4[i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                while next < t_out.len() && t_out[next] <= t_new {
                    let tq = t_out[next];
                    let yq = if tq == t_new {
                        y1
                    } else {
                        let th = (tq - t) / h;
                        let th1 = 1.0 - th;
                        let mut yq = [0.0; D];
                        for i in 0..D {
                            yq[i] = y[i] + th * (r1[i] + th1 * (r2[i] + th * (r3[i] + th1 * r4[i])));
                        }
                        yq
                    };
                    out.push(yq);
                    next += 1;
                    if stop(next - 1, tq, &yq) {
                        return Ok((out, stats));
                    }
                }
            }
            t = t_new;
            y = y1;
            k1 = k7;
            if next == t_out.len() {
                return Ok((out, stats));
            }
            let mut fac = fac11 / facold.powf(beta);
            fac = facc2.max(facc1.min(fac / safe));
            let mut h_new = (h / fac).min(opts.h_max);
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new;
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h /= facc1.min(fac11 / safe);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_with_dense_output() {
        let ts: Vec<f64> = (0..=200).map(|i| i as f64 * 0.37).collect();
        let (ys, _) = dopri5(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [1.0, 0.0], &ts, &OdeOptions::default()).unwrap();
        for (t, y) in ts.iter().zip(&ys) {
            assert!((y[0] - t.cos()).abs() < 1e-8, "t={t}");
            assert!((y[1] + t.sin()).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn exponential_decay_is_fifth_order_accurate() {
        let o = OdeOptions { rtol: 1e-12, atol: 1e-14, ..Default::default() };
        let (ys, st) = dopri5(|_, y: &[f64; 1]| [-2.0 * y[0]], 0.0, [1.0], &[0.5, 1.0, 3.0], &o).unwrap();
        assert!((ys[2][0] - (-6f64).exp()).abs() < 1e-13);
        assert!(st.accepted > 0);
    }

    #[test]
    fn output_at_initial_time_and_empty_grid() {
        let (ys, _) = dopri5(|_, y: &[f64; 1]| [y[0]], 1.0, [2.0], &[1.0, 1.0], &OdeOptions::default()).unwrap();
        assert_eq!(ys, vec![[2.0], [2.0]]);
        let (ys, _) = dopri5(|_, y: &[f64; 1]| [y[0]], 1.0, [2.0], &[], &OdeOptions::default()).unwrap();
        assert!(ys.is_empty());
        assert!(dopri5(|_, y: &[f64; 1]| [y[0]], 1.0, [2.0], &[0.5], &OdeOptions::default()).is_err());
    }

    #[test]
    fn early_stop_truncates_output() {
        let ts: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let (ys, _) = dopri5_until(|_, y: &[f64; 1]| [-y[0]], 0.0, [1.0], &ts, &OdeOptions::default(), |_, _, y| y[0] < 1e-3).unwrap();
        assert_eq!(ys.len(), 8); // e^{-7} < 1e-3 <= e^{-6}
    }

    #[test]
    fn dense_output_is_continuous_between_steps() {
        // Non-autonomous linear problem y' = -y / (1+t), y = (1+t0)/(1+t).
        let ts: Vec<f64> = (0..1000).map(|i| 1e-3 * (i as f64).powi(2)).collect();
        let (ys, _) = dopri5(|t, y: &[f64; 1]| [-y[0] / (1.0 + t)], 0.0, [1.0], &ts, &OdeOptions::default()).unwrap();
        for (t, y) in ts.iter().zip(&ys) {
            assert!((y[0] - 1.0 / (1.0 + t)).abs() < 1e-9);
        }
    }
}
