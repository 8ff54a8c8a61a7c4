//! Pseudo-spectral solver for the two-dimensional damped Euler system in symmetric form
//!
//! ```text
//! v_t + div u          = -u . grad v - varpi v div u
//! u_t + grad v + b u   = -(u . grad) u - varpi v grad v
//! ```
//!
//! on a periodic box `[-L/2, L/2)^2`, used as a stand-in for the whole plane inside
//! the no-wrap window (the time before compactly supported data can reach the
//! boundary). The state is held spectrally and kept 2/3-dealiased; quadratic
//! products are formed in physical space. Time stepping is a Lawson (integrating
//! factor) RK4: the damping `-b(t) u` is applied exactly through `exp(-int b)` on the
//! velocity channel, everything else is integrated by classical RK4.

use crate::cmat::C64;
use crate::damping::DampingLaw;
use crate::error::{invalid, Error, Result};
use crate::fft2::Fft2;
use crate::propagator::{green_series, PropagatorOptions};
use crate::quad::compensated_sum;
use crate::spectra::{smooth_step, NormKind, NormSeries};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// Physical parameters: adiabatic exponent of `p = rho^gamma / gamma` and the damping law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerParams {
    pub gamma_adiabatic: f64,
    pub varpi: f64,
    pub law: DampingLaw,
}

impl EulerParams {
    pub fn new(gamma_adiabatic: f64, law: DampingLaw) -> Result<Self> {
        if !(gamma_adiabatic > 1.0) || !gamma_adiabatic.is_finite() {
            return Err(invalid(format!("adiabatic exponent must be > 1, got {gamma_adiabatic}")));
        }
        Ok(Self { gamma_adiabatic, varpi: 0.5 * (gamma_adiabatic - 1.0), law })
    }

    /// `rho - 1` from `v = (rho^varpi - 1) / varpi`, accurate for small `v`.
    pub fn rho_minus_one(&self, v: f64) -> f64 {
        ((self.varpi * v).ln_1p() / self.varpi).exp_m1()
    }
}

/// Initial data kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitKind {
    /// `v0 = eps exp(-r^2 / (2 sigma^2)) chi(r)` with `sigma = r0/4` and a smooth cutoff `chi`
    /// equal to 1 on `[0, 3 r0/4]` and 0 beyond `r0`; `u0 = 0`.
    GaussianBump,
    Zero,
}

/// Run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Box length.
    pub l: f64,
    /// Grid points per direction (power of two).
    pub n: usize,
    pub t_end: f64,
    /// Requested time step; the step used is the largest `<= dt` dividing `output_every`.
    pub dt: f64,
    pub eps: f64,
    /// Support radius of the initial bump.
    pub r0: f64,
    /// Output cadence.
    pub output_every: f64,
    pub nonlinear: bool,
    pub init: InitKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { l: 200.0, n: 512, t_end: 80.0, dt: 0.15, eps: 0.01, r0: 4.0, output_every: 1.0, nonlinear: true, init: InitKind::GaussianBump }
    }
}

/// Margin on the unit sound speed used by the no-wrap window.
pub const WINDOW_MARGIN: f64 = 1.2;
/// CFL number for the unit sound speed.
pub const CFL: f64 = 0.4;
/// Largest admissible initial amplitude.
pub const EPS_MAX: f64 = 0.1;

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.n.is_power_of_two() || self.n < 8 {
            return Err(invalid(format!("grid size must be a power of two >= 8, got {}", self.n)));
        }
        if !(self.l > 0.0) || !self.l.is_finite() {
            return Err(invalid(format!("box length must be positive, got {}", self.l)));
        }
        if !(self.t_end > 0.0) || !(self.output_every > 0.0) || self.output_every > self.t_end {
            return Err(invalid("need 0 < output cadence <= end time".to_string()));
        }
        let cfl = CFL * self.l / self.n as f64;
        if !(self.dt > 0.0) || self.dt > cfl * (1.0 + 1e-12) {
            return Err(invalid(format!("time step {} violates the CFL bound {cfl}", self.dt)));
        }
        if !(0.0..=EPS_MAX).contains(&self.eps) {
            return Err(invalid(format!("amplitude must lie in [0, {EPS_MAX}], got {}", self.eps)));
        }
        if !(self.r0 > 0.0) || self.r0 >= 0.25 * self.l {
            return Err(invalid(format!("support radius must lie in (0, L/4), got {}", self.r0)));
        }
        let window = (0.5 * self.l - self.r0) / WINDOW_MARGIN;
        if self.t_end > window * (1.0 + 1e-12) {
            return Err(invalid(format!("end time {} exceeds the no-wrap window {window}", self.t_end)));
        }
        let ratio = self.t_end / self.output_every;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(invalid("end time must be a multiple of the output cadence".to_string()));
        }
        Ok(())
    }

    /// Substeps per output interval.
    pub fn substeps(&self) -> usize {
        (self.output_every / self.dt - 1e-9).ceil().max(1.0) as usize
    }

    /// Time step actually used.
    pub fn effective_dt(&self) -> f64 {
        self.output_every / self.substeps() as f64
    }

    pub fn output_count(&self) -> usize {
        (self.t_end / self.output_every).round() as usize
    }
}

/// Wavenumbers, dealias mask and half-spectrum weights of an `n x n` grid of side `l`.
#[derive(Debug, Clone)]
pub struct Grid {
    pub l: f64,
    pub n: usize,
    pub nh: usize,
    /// Integer wavenumber per `kx` column (`0..=n/2`).
    pub mx: Vec<i64>,
    /// Integer wavenumber per `ky` row (signed).
    pub my: Vec<i64>,
    pub mask: Vec<bool>,
    /// 1 for the `kx = 0` and Nyquist columns, 2 otherwise (each stored mode stands for itself and its conjugate).
    pub weight: Vec<f64>,
}

impl Grid {
    pub fn new(l: f64, n: usize) -> Self {
        let nh = n / 2 + 1;
        let mx: Vec<i64> = (0..nh as i64).collect();
        let my: Vec<i64> = (0..n as i64).map(|i| if i <= n as i64 / 2 { i } else { i - n as i64 }).collect();
        let mut mask = vec![false; nh * n];
        let mut weight = vec![0.0; nh * n];
        for (c, &a) in mx.iter().enumerate() {
            for (r, &b) in my.iter().enumerate() {
                let keep = 3 * a.abs() <= n as i64 && 3 * b.abs() <= n as i64 && 2 * b.abs() < n as i64;
                mask[c * n + r] = keep;
                weight[c * n + r] = if c == 0 || c == nh - 1 { 1.0 } else { 2.0 };
            }
        }
        Self { l, n, nh, mx, my, mask, weight }
    }

    /// Integer wavenumbers used by first derivatives: the Nyquist component is zero, which
    /// keeps odd derivatives of real fields real.
    pub fn md(&self, idx: usize) -> (i64, i64) {
        let nyq = |m: i64| if 2 * m.abs() == self.n as i64 { 0 } else { m };
        (nyq(self.mx[idx / self.n]), nyq(self.my[idx % self.n]))
    }

    /// Derivative wavenumbers (see [`Grid::md`]).
    pub fn kd(&self, idx: usize) -> (f64, f64) {
        let (a, b) = self.md(idx);
        let dk = self.dk();
        (dk * a as f64, dk * b as f64)
    }

    pub fn dk(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.l
    }

    /// `(kx, ky)` of the stored index.
    pub fn k(&self, idx: usize) -> (f64, f64) {
        let dk = self.dk();
        (dk * self.mx[idx / self.n] as f64, dk * self.my[idx % self.n] as f64)
    }

    /// `|md|^2` (integer): squared derivative wavenumber index.
    pub fn m2d(&self, idx: usize) -> i64 {
        let (a, b) = self.md(idx);
        a * a + b * b
    }

    /// `|m|^2` (integer) of the stored index.
    pub fn m2(&self, idx: usize) -> i64 {
        let (a, b) = (self.mx[idx / self.n], self.my[idx % self.n]);
        a * a + b * b
    }

    pub fn dx(&self) -> f64 {
        self.l / self.n as f64
    }

    /// Physical coordinate of grid index `i` (the box is centred at the origin).
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.dx()
    }

    /// Discrete Plancherel: `||f||^2 = L^2 / n^4 sum_k |F_k|^2`, with spectral weight `w(k)`.
    pub fn weighted_norm2<F: Fn(f64) -> f64 + Sync>(&self, spec: &[C64], w: F) -> f64 {
        let scale = self.l * self.l / (self.n as f64).powi(4);
        let parts: Vec<f64> = spec
            .par_chunks(self.n)
            .enumerate()
            .map(|(c, col)| {
                compensated_sum(col.iter().enumerate().map(|(r, z)| {
                    let idx = c * self.n + r;
                    let (kx, ky) = self.k(idx);
                    self.weight[idx] * w(kx * kx + ky * ky) * z.norm_sqr()
                }))
            })
            .collect();
        scale * compensated_sum(parts)
    }
}

/// Spectral state `(v, u1, u2)` at time `t` (half spectra, column-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub l: f64,
    pub n: usize,
    pub t: f64,
    pub v: Vec<C64>,
    pub u1: Vec<C64>,
    pub u2: Vec<C64>,
}

impl Field2D {
    fn channels(&self) -> [&Vec<C64>; 3] {
        [&self.v, &self.u1, &self.u2]
    }

    fn is_finite(&self) -> bool {
        self.channels().iter().all(|c| c.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }

    /// Largest violation of Hermitian symmetry on the self-conjugate `kx = 0` column.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for ch in self.channels() {
            for r in 1..n {
                let a = ch[r];
                let b = ch[n - r];
                worst = worst.max((a - b.conj()).norm());
            }
            worst = worst.max(ch[0].im.abs());
        }
        worst
    }
}

type State = [Vec<C64>; 3];

/// Solver for a fixed grid and parameter set.
pub struct Solver {
    pub params: EulerParams,
    pub grid: Grid,
    fft: Fft2,
    pub nonlinear: bool,
}

fn axpy(y: &[C64], a: f64, x: &[C64]) -> Vec<C64> {
    y.par_iter().zip(x.par_iter()).map(|(yi, xi)| yi + xi * a).collect()
}

impl Solver {
    pub fn new(params: EulerParams, l: f64, n: usize, nonlinear: bool) -> Result<Self> {
        if !n.is_power_of_two() || n < 8 || !(l > 0.0) {
            return Err(invalid(format!("invalid grid: L = {l}, N = {n}")));
        }
        Ok(Self { params, grid: Grid::new(l, n), fft: Fft2::new(n), nonlinear })
    }

    fn zeros(&self) -> Vec<C64> {
        vec![C64::new(0.0, 0.0); self.fft.spectrum_len()]
    }

    /// Transforms real samples and builds a field. The samples are kept exactly; the 2/3 rule
    /// acts inside the nonlinear term, so the represented data do not depend on the box size.
    pub fn field_from_real(&self, v: &[f64], u1: &[f64], u2: &[f64], t: f64) -> Result<Field2D> {
        let n2 = self.grid.n * self.grid.n;
        if v.len() != n2 || u1.len() != n2 || u2.len() != n2 {
            return Err(invalid("real samples must have N*N entries".to_string()));
        }
        let spec = |f: &[f64]| {
            let mut s = self.zeros();
            self.fft.forward(f, &mut s);
            s
        };
        Ok(Field2D { l: self.grid.l, n: self.grid.n, t, v: spec(v), u1: spec(u1), u2: spec(u2) })
    }

    fn dealiased(&self, s: &[C64]) -> Vec<C64> {
        s.par_iter().zip(self.grid.mask.par_iter()).map(|(z, &m)| if m { *z } else { C64::new(0.0, 0.0) }).collect()
    }

    fn dealias(&self, s: &mut [C64]) {
        s.par_iter_mut().zip(self.grid.mask.par_iter()).for_each(|(z, &m)| {
            if !m {
                *z = C64::new(0.0, 0.0);
            }
        });
    }

    /// Initial data of the given kind (velocity at rest, normalized so that `max |v| = eps`).
    pub fn init_field(&self, kind: InitKind, eps: f64, r0: f64) -> Result<Field2D> {
        let g = &self.grid;
        if !(r0 > 0.0) || r0 >= 0.25 * g.l {
            return Err(invalid(format!("support radius must lie in (0, L/4), got {r0}")));
        }
        if !(0.0..=EPS_MAX).contains(&eps) {
            return Err(invalid(format!("amplitude must lie in [0, {EPS_MAX}], got {eps}")));
        }
        let n = g.n;
        let zero = vec![0.0; n * n];
        match kind {
            InitKind::Zero => self.field_from_real(&zero, &zero, &zero, 0.0),
            InitKind::GaussianBump => {
                let profile = bump_profile(r0);
                let v: Vec<f64> = (0..n * n).map(|i| profile(g.x(i % n).hypot(g.x(i / n)))).collect();
                let f = self.field_from_real(&v, &zero, &zero, 0.0)?;
                let vr = self.real(&f.v);
                let peak = vr.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                let scale = if peak > 0.0 { eps / peak } else { 0.0 };
                Ok(Field2D { v: f.v.iter().map(|z| z * scale).collect(), ..f })
            }
        }
    }

    /// Inverse transform of one channel.
    pub fn real(&self, spec: &[C64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n * self.grid.n];
        self.fft.inverse(spec, &mut out);
        out
    }

    /// Real-space `(v, u1, u2)`.
    pub fn real_fields(&self, f: &Field2D) -> [Vec<f64>; 3] {
        [self.real(&f.v), self.real(&f.u1), self.real(&f.u2)]
    }

    fn deriv(&self, s: &[C64], axis: usize) -> Vec<C64> {
        let g = &self.grid;
        s.par_iter()
            .enumerate()
            .map(|(idx, z)| {
                let (kx, ky) = g.kd(idx);
                let k = if axis == 0 { kx } else { ky };
                z * C64::new(0.0, k)
            })
            .collect()
    }

    /// Right-hand side without the damping term.
    fn rhs(&self, y: &State) -> State {
        let g = &self.grid;
        let [v, u1, u2] = y;
        let mut dv: Vec<C64> = (0..v.len())
            .into_par_iter()
            .map(|idx| {
                let (kx, ky) = g.kd(idx);
                -(u1[idx] * C64::new(0.0, kx) + u2[idx] * C64::new(0.0, ky))
            })
            .collect();
        let mut du1: Vec<C64> = v.par_iter().enumerate().map(|(idx, z)| -(z * C64::new(0.0, g.kd(idx).0))).collect();
        let mut du2: Vec<C64> = v.par_iter().enumerate().map(|(idx, z)| -(z * C64::new(0.0, g.kd(idx).1))).collect();
        if self.nonlinear {
            let w = self.params.varpi;
            // 2/3 rule: products of the resolved modes, truncated again afterwards.
            let (v, u1, u2) = (&self.dealiased(v), &self.dealiased(u1), &self.dealiased(u2));
            let rv = self.real(v);
            let ru1 = self.real(u1);
            let ru2 = self.real(u2);
            let vx = self.real(&self.deriv(v, 0));
            let vy = self.real(&self.deriv(v, 1));
            let u1x = self.real(&self.deriv(u1, 0));
            let u1y = self.real(&self.deriv(u1, 1));
            let u2x = self.real(&self.deriv(u2, 0));
            let u2y = self.real(&self.deriv(u2, 1));
            let n2 = rv.len();
            let mut nv = vec![0.0; n2];
            let mut nu1 = vec![0.0; n2];
            let mut nu2 = vec![0.0; n2];
            nv.par_iter_mut().zip(nu1.par_iter_mut()).zip(nu2.par_iter_mut()).enumerate().for_each(|(i, ((a, b), c))| {
                *a = -(ru1[i] * vx[i] + ru2[i] * vy[i]) - w * rv[i] * (u1x[i] + u2y[i]);
                *b = -(ru1[i] * u1x[i] + ru2[i] * u1y[i]) - w * rv[i] * vx[i];
                *c = -(ru1[i] * u2x[i] + ru2[i] * u2y[i]) - w * rv[i] * vy[i];
            });
            for (dst, src) in [(&mut dv, &nv), (&mut du1, &nu1), (&mut du2, &nu2)] {
                let mut s = self.zeros();
                self.fft.forward(src, &mut s);
                self.dealias(&mut s);
                dst.par_iter_mut().zip(s.par_iter()).for_each(|(d, x)| *d += x);
            }
        }
        [dv, du1, du2]
    }

    /// One Lawson RK4 step of size `dt`.
    pub fn step(&self, f: &Field2D, dt: f64) -> Result<Field2D> {
        let law = &self.params.law;
        let t = f.t;
        let eh = (-law.integral_b(t, t + 0.5 * dt)?).exp();
        let eh2 = (-law.integral_b(t + 0.5 * dt, t + dt)?).exp();
        let ef = eh * eh2;
        // Damping factors act on the velocity channels only.
        let scale = |s: &State, e: f64| -> State { [s[0].clone(), s[1].iter().map(|z| z * e).collect(), s[2].iter().map(|z| z * e).collect()] };
        let comb = |a: &State, c: f64, b: &State| -> State { [axpy(&a[0], c, &b[0]), axpy(&a[1], c, &b[1]), axpy(&a[2], c, &b[2])] };
        let y0: State = [f.v.clone(), f.u1.clone(), f.u2.clone()];
        let k1 = self.rhs(&y0);
        let y0h = scale(&y0, eh);
        let k1h = scale(&k1, eh);
        let k2 = self.rhs(&comb(&y0h, 0.5 * dt, &k1h));
        let k3 = self.rhs(&comb(&y0h, 0.5 * dt, &k2));
        let k3f = scale(&k3, eh2);
        let y0f = scale(&y0, ef);
        let k4 = self.rhs(&comb(&y0f, dt, &k3f));
        let k1f = scale(&k1, ef);
        let k2f = scale(&k2, eh2);
        let mut out = comb(&y0f, dt / 6.0, &k1f);
        out = comb(&out, dt / 3.0, &k2f);
        out = comb(&out, dt / 3.0, &k3f);
        out = comb(&out, dt / 6.0, &k4);
        let [v, u1, u2] = out;
        let next = Field2D { l: f.l, n: f.n, t: t + dt, v, u1, u2 };
        if !next.is_finite() {
            return Err(Error::BlowUp(format!("non-finite state at t = {}", next.t)));
        }
        Ok(next)
    }

    /// `int (rho - 1) dx` by the trapezoidal rule on the periodic grid.
    pub fn mass(&self, f: &Field2D) -> f64 {
        let v = self.real(&f.v);
        let dx = self.grid.dx();
        dx * dx * compensated_sum(v.iter().map(|&x| self.params.rho_minus_one(x)))
    }

    /// `int |rho - 1| dx`.
    pub fn mass_l1(&self, f: &Field2D) -> f64 {
        let v = self.real(&f.v);
        let dx = self.grid.dx();
        dx * dx * compensated_sum(v.iter().map(|&x| self.params.rho_minus_one(x).abs()))
    }

    /// `||Lambda^a v||`, `||Lambda^a u||`.
    pub fn norms(&self, f: &Field2D, a: u32) -> (f64, f64) {
        let w = |k2: f64| k2.powi(a as i32);
        let nv = self.grid.weighted_norm2(&f.v, w);
        let nu = self.grid.weighted_norm2(&f.u1, w) + self.grid.weighted_norm2(&f.u2, w);
        (nv.sqrt(), nu.sqrt())
    }

    /// `||(v, u)||^2_{H^sigma}`.
    pub fn energy(&self, f: &Field2D, sigma: i32) -> f64 {
        let w = |k2: f64| (1.0 + k2).powi(sigma);
        self.grid.weighted_norm2(&f.v, w) + self.grid.weighted_norm2(&f.u1, w) + self.grid.weighted_norm2(&f.u2, w)
    }

    /// Dissipation density `b(t) (||grad v||^2_{H^{sigma-1}} + ||u||^2_{H^sigma})`.
    pub fn dissipation_rate(&self, f: &Field2D, sigma: i32) -> f64 {
        let wv = |k2: f64| k2 * (1.0 + k2).powi(sigma - 1);
        let wu = |k2: f64| (1.0 + k2).powi(sigma);
        self.params.law.b(f.t)
            * (self.grid.weighted_norm2(&f.v, wv) + self.grid.weighted_norm2(&f.u1, wu) + self.grid.weighted_norm2(&f.u2, wu))
    }

    /// The time-weighted energy functional (n = 2): sum of the weighted derivative norms up to order 4.
    pub fn weighted_energy(&self, f: &Field2D) -> f64 {
        let lam = self.params.law.lambda();
        let w = 1.0 + f.t;
        let q = 0.5 * (1.0 + lam);
        let base = 0.5 * (1.0 + lam); // (1+lambda) n / 4 with n = 2
        let mut total = 0.0;
        for a in 0..=2u32 {
            total += w.powf(base + q * a as f64) * self.norms(f, a).0;
        }
        for a in 0..=1u32 {
            total += w.powf(base + q * (a as f64 + 1.0) - lam) * self.norms(f, a).1;
        }
        total += w.powf(base + q * 2.0 - lam) * self.norms(f, 2).1;
        let (v3, u3) = self.norms(f, 3);
        total += w.powf(base) * (v3 * v3 + u3 * u3).sqrt();
        let (v4, u4) = self.norms(f, 4);
        total + (v4 * v4 + u4 * u4).sqrt()
    }

    /// `||(v0, u0)||_{L^1 cap H^4}` = `||.||_{L^1} + ||.||_{H^4}`.
    pub fn data_norm(&self, f: &Field2D) -> f64 {
        let [v, u1, u2] = self.real_fields(f);
        let dx = self.grid.dx();
        let l1 = dx * dx * compensated_sum(v.iter().zip(&u1).zip(&u2).map(|((a, b), c)| a.abs() + b.hypot(*c)));
        l1 + self.energy(f, 4).sqrt()
    }
}

/// Smooth radial bump: Gaussian of width `r0/4` with a C-infinity cutoff on `[3 r0/4, r0]`.
pub fn bump_profile(r0: f64) -> impl Fn(f64) -> f64 {
    let sigma = 0.25 * r0;
    move |r: f64| {
        if r >= r0 {
            0.0
        } else {
            (-r * r / (2.0 * sigma * sigma)).exp() * (1.0 - smooth_step((r - 0.75 * r0) / (0.25 * r0)))
        }
    }
}

/// Accumulated `H^4` energy ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub sigma: i32,
    pub times: Vec<f64>,
    /// `||(v, u)(t)||^2_{H^sigma}`.
    pub energy: Vec<f64>,
    /// `int_0^t b (||grad v||^2_{H^{sigma-1}} + ||u||^2_{H^sigma}) ds`.
    pub dissipation: Vec<f64>,
}

impl EnergyLedger {
    /// `max_t (E(t) + D(t)) / E(0)`, with `0/0 := 0`.
    pub fn max_ratio(&self) -> f64 {
        let e0 = self.energy.first().copied().unwrap_or(0.0);
        if e0 == 0.0 {
            return 0.0;
        }
        self.energy.iter().zip(&self.dissipation).map(|(e, d)| (e + d) / e0).fold(0.0, f64::max)
    }
}

/// Result of an energy-inequality check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyCheck {
    pub c_e: f64,
    pub max_ratio: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Fits the energy constant on a (small-amplitude) ledger: 10% above the observed sup.
pub fn fit_energy_constant(ledger: &EnergyLedger) -> f64 {
    1.1 * ledger.max_ratio()
}

/// Checks `E(t) + D(t) <= C_E E(0)` for all recorded `t` with a frozen constant.
pub fn energy_check(ledger: &EnergyLedger, c_e: f64) -> EnergyCheck {
    let max_ratio = ledger.max_ratio();
    let e0 = ledger.energy.first().copied().unwrap_or(0.0);
    let lhs_ok = e0 == 0.0 && ledger.energy.iter().zip(&ledger.dissipation).all(|(e, d)| *e + *d == 0.0);
    EnergyCheck { c_e, max_ratio, margin: c_e - max_ratio, pass: lhs_ok || max_ratio <= c_e }
}

/// Everything recorded by a run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: SolverConfig,
    pub dt: f64,
    pub steps: usize,
    /// `v:L2:a=0`, `v:L2:a=1`, `u:L2:a=0`, `u:L2:a=1`.
    pub series: Vec<NormSeries>,
    pub ledger: EnergyLedger,
    /// `(t, int (rho - 1))`.
    pub mass: Vec<(f64, f64)>,
    /// `int |rho_0 - 1|`.
    pub mass_l1_initial: f64,
    /// `(t, running sup of the weighted energy)`.
    pub weighted: Vec<(f64, f64)>,
    pub data_norm: f64,
    /// `||(v,u)_nonlinear - (v,u)_linear|| / ||(v,u)_linear||` when requested.
    pub deviation: Option<NormSeries>,
    pub max_hermitian_defect: f64,
    pub final_field: Field2D,
}

impl RunOutput {
    /// `max_t |M(t) - M(0)| / ||rho_0 - 1||_{L^1}`, with `0/0 := 0`.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.mass.first().map(|x| x.1).unwrap_or(0.0);
        let worst = self.mass.iter().map(|x| (x.1 - m0).abs()).fold(0.0, f64::max);
        if self.mass_l1_initial == 0.0 {
            if worst == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            worst / self.mass_l1_initial
        }
    }
}

/// Options beyond the configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Also evolve the data under the exact linear flow and record the relative deviation.
    pub compare_linear: bool,
}

/// Exact linear evolution of the initial spectra at the given output times.
struct LinearReference {
    groups: BTreeMap<i64, Vec<[f64; 4]>>,
    damping: Vec<f64>,
}

impl LinearReference {
    fn new(solver: &Solver, f0: &Field2D, times: &[f64]) -> Result<Self> {
        let g = &solver.grid;
        let peak = f0.v.iter().chain(&f0.u1).chain(&f0.u2).fold(0.0f64, |a, z| a.max(z.norm()));
        let mut keys: Vec<i64> = (0..f0.v.len())
            .filter(|&i| (f0.v[i].norm() + f0.u1[i].norm() + f0.u2[i].norm()) > 1e-20 * peak)
            .map(|i| g.m2d(i))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        let law = solver.params.law;
        let dk = g.dk();
        let mut opts = PropagatorOptions::default();
        opts.ode.rtol = 1e-9;
        opts.ode.atol = 1e-12;
        let mut grid = vec![0.0];
        grid.extend_from_slice(times);
        let solved: Vec<Result<(i64, Vec<[f64; 4]>)>> = keys
            .par_iter()
            .map(|&m2| {
                let k = dk * (m2 as f64).sqrt();
                let gs = green_series(&law, k, 0.0, &grid, &opts)?;
                Ok((m2, gs[1..].iter().map(|g| [g.g11, g.g12, g.g21, g.g22]).collect()))
            })
            .collect();
        let mut groups = BTreeMap::new();
        for r in solved {
            let (m2, v) = r?;
            groups.insert(m2, v);
        }
        let damping = times.iter().map(|&t| law.vorticity_factor(0.0, t)).collect::<Result<_>>()?;
        Ok(Self { groups, damping })
    }

    /// Linear field at output index `j`.
    fn field(&self, solver: &Solver, f0: &Field2D, j: usize, t: f64) -> Field2D {
        let g = &solver.grid;
        let e = self.damping[j];
        let len = f0.v.len();
        let mut v = vec![C64::new(0.0, 0.0); len];
        let mut u1 = v.clone();
        let mut u2 = v.clone();
        for idx in 0..len {
            let Some(gm) = self.groups.get(&g.m2d(idx)) else { continue };
            let [g11, g12, g21, g22] = gm[j];
            let (kx, ky) = g.kd(idx);
            let kk = kx.hypot(ky);
            if kk == 0.0 {
                v[idx] = f0.v[idx];
                u1[idx] = f0.u1[idx] * e;
                u2[idx] = f0.u2[idx] * e;
                continue;
            }
            let (hx, hy) = (kx / kk, ky / kk);
            // Longitudinal amplitude U = i k^.u obeys the scalar Green matrix with v.
            let par = f0.u1[idx] * hx + f0.u2[idx] * hy;
            let big_u = par * C64::new(0.0, 1.0);
            let (tx, ty) = (f0.u1[idx] - par * hx, f0.u2[idx] - par * hy);
            let vn = f0.v[idx] * g11 + big_u * g12;
            let un = f0.v[idx] * g21 + big_u * g22;
            let parn = un * C64::new(0.0, -1.0);
            v[idx] = vn;
            u1[idx] = parn * hx + tx * e;
            u2[idx] = parn * hy + ty * e;
        }
        Field2D { l: f0.l, n: f0.n, t, v, u1, u2 }
    }
}

fn diff_norm(solver: &Solver, a: &Field2D, b: &Field2D) -> f64 {
    let d = |x: &[C64], y: &[C64]| -> Vec<C64> { x.iter().zip(y).map(|(p, q)| p - q).collect() };
    let one = |_: f64| 1.0;
    let g = &solver.grid;
    (g.weighted_norm2(&d(&a.v, &b.v), one) + g.weighted_norm2(&d(&a.u1, &b.u1), one) + g.weighted_norm2(&d(&a.u2, &b.u2), one)).sqrt()
}

fn total_norm(solver: &Solver, a: &Field2D) -> f64 {
    solver.energy(a, 0).sqrt()
}

/// Runs the solver over the configured window.
pub fn run(params: EulerParams, cfg: &SolverConfig) -> Result<RunOutput> {
    run_with(params, cfg, RunOptions::default(), &mut |_, _| Ok(()))
}

/// Runs the solver, calling `observer` at every output time (including `t = 0`).
pub fn run_with(
    params: EulerParams,
    cfg: &SolverConfig,
    opts: RunOptions,
    observer: &mut dyn FnMut(&Solver, &Field2D) -> Result<()>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let solver = Solver::new(params, cfg.l, cfg.n, cfg.nonlinear)?;
    let f0 = solver.init_field(cfg.init, cfg.eps, cfg.r0)?;
    let dt = cfg.effective_dt();
    let sub = cfg.substeps();
    let n_out = cfg.output_count();
    let out_times: Vec<f64> = (1..=n_out).map(|j| j as f64 * cfg.output_every).collect();
    let reference = if opts.compare_linear { Some(LinearReference::new(&solver, &f0, &out_times)?) } else { None };
    let sigma = 4;

    let mut times = vec![0.0];
    let mut nv0 = vec![];
    let mut nv1 = vec![];
    let mut nu0 = vec![];
    let mut nu1 = vec![];
    let record_norms = |f: &Field2D, nv0: &mut Vec<f64>, nv1: &mut Vec<f64>, nu0: &mut Vec<f64>, nu1: &mut Vec<f64>| {
        let (a, b) = solver.norms(f, 0);
        let (c, d) = solver.norms(f, 1);
        nv0.push(a);
        nu0.push(b);
        nv1.push(c);
        nu1.push(d);
    };
    record_norms(&f0, &mut nv0, &mut nv1, &mut nu0, &mut nu1);
    let mut energy = vec![solver.energy(&f0, sigma)];
    let mut dissipation = vec![0.0];
    let mut mass = vec![(0.0, solver.mass(&f0))];
    let mass_l1_initial = solver.mass_l1(&f0);
    let data_norm = solver.data_norm(&f0);
    let mut w_sup = solver.weighted_energy(&f0);
    let mut weighted = vec![(0.0, w_sup)];
    let mut deviation = vec![0.0];
    let mut herm = f0.hermitian_defect();
    observer(&solver, &f0)?;

    let mut f = f0.clone();
    let mut acc = 0.0;
    let mut rate = solver.dissipation_rate(&f, sigma);
    let mut steps = 0;
    for (j, &t_out) in out_times.iter().enumerate() {
        for i in 0..sub {
            let mut next = solver.step(&f, dt)?;
            if i + 1 == sub {
                next.t = t_out;
            }
            let r = solver.dissipation_rate(&next, sigma);
            acc += 0.5 * dt * (rate + r);
            rate = r;
            f = next;
            steps += 1;
        }
        herm = herm.max(f.hermitian_defect());
        times.push(t_out);
        record_norms(&f, &mut nv0, &mut nv1, &mut nu0, &mut nu1);
        energy.push(solver.energy(&f, sigma));
        dissipation.push(acc);
        mass.push((t_out, solver.mass(&f)));
        w_sup = w_sup.max(solver.weighted_energy(&f));
        weighted.push((t_out, w_sup));
        if let Some(rf) = &reference {
            let lin = rf.field(&solver, &f0, j, t_out);
            let den = total_norm(&solver, &lin);
            let num = diff_norm(&solver, &f, &lin);
            deviation.push(if den == 0.0 { 0.0 } else { num / den });
        }
        observer(&solver, &f)?;
    }
    let series = vec![
        NormSeries::new("v", NormKind::L2, 0, times.clone(), nv0),
        NormSeries::new("v", NormKind::L2, 1, times.clone(), nv1),
        NormSeries::new("u", NormKind::L2, 0, times.clone(), nu0),
        NormSeries::new("u", NormKind::L2, 1, times.clone(), nu1),
    ];
    let deviation = reference.map(|_| {
        let mut s = NormSeries::new("deviation", NormKind::L2, 0, times.clone(), deviation.clone());
        s.label = "deviation:L2".into();
        s
    });
    Ok(RunOutput {
        config: cfg.clone(),
        dt,
        steps,
        series,
        ledger: EnergyLedger { sigma, times, energy, dissipation },
        mass,
        mass_l1_initial,
        weighted,
        data_norm,
        deviation,
        max_hermitian_defect: herm,
        final_field: f,
    })
}

/// Relative deviation of the nonlinear solution from the exact linear evolution of the same data.
pub fn linear_compare(params: EulerParams, cfg: &SolverConfig) -> Result<NormSeries> {
    let out = run_with(params, cfg, RunOptions { compare_linear: true }, &mut |_, _| Ok(()))?;
    Ok(out.deviation.expect("deviation requested"))
}

/// Temporal convergence under step halving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderCheck {
    pub dt: f64,
    /// `||f_dt - f_{dt/2}||`.
    pub e1: f64,
    /// `||f_{dt/2} - f_{dt/4}||`.
    pub e2: f64,
    pub factor: f64,
}

/// Integrates to `cfg.t_end` with `dt`, `dt/2`, `dt/4` and compares successive solutions.
pub fn order_check(params: EulerParams, cfg: &SolverConfig, dt: f64) -> Result<OrderCheck> {
    cfg.validate()?;
    let solver = Solver::new(params, cfg.l, cfg.n, cfg.nonlinear)?;
    let f0 = solver.init_field(cfg.init, cfg.eps, cfg.r0)?;
    let steps = (cfg.t_end / dt).round() as usize;
    if steps == 0 || ((steps as f64) * dt - cfg.t_end).abs() > 1e-9 * cfg.t_end {
        return Err(invalid(format!("dt = {dt} must divide the end time {}", cfg.t_end)));
    }
    let integrate = |h: f64, n: usize| -> Result<Field2D> {
        let mut f = f0.clone();
        for _ in 0..n {
            f = solver.step(&f, h)?;
        }
        Ok(f)
    };
    let a = integrate(dt, steps)?;
    let b = integrate(0.5 * dt, 2 * steps)?;
    let c = integrate(0.25 * dt, 4 * steps)?;
    let e1 = diff_norm(&solver, &a, &b);
    let e2 = diff_norm(&solver, &b, &c);
    Ok(OrderCheck { dt, e1, e2, factor: e1 / e2 })
}

/// Magic bytes of the snapshot format.
pub const SNAPSHOT_MAGIC: &[u8; 5] = b"DEUL1";

/// Writes a field snapshot: magic, `u32 N`, `f64 L`, `f64 t`, then row-major `f64` samples of
/// `v`, `u1`, `u2`; all little-endian.
pub fn write_snapshot(path: &Path, solver: &Solver, f: &Field2D) -> Result<()> {
    let io = |e: std::io::Error| Error::Usage(format!("cannot write snapshot {}: {e}", path.display()));
    let n = u32::try_from(f.n).map_err(|_| invalid("grid too large for the snapshot header".to_string()))?;
    let mut buf = Vec::with_capacity(21 + 24 * f.n * f.n);
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&f.l.to_le_bytes());
    buf.extend_from_slice(&f.t.to_le_bytes());
    for ch in solver.real_fields(f) {
        for x in ch {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(io)?;
    file.write_all(&buf).map_err(io)?;
    Ok(())
}

/// Reads a snapshot back: `(N, L, t, [v, u1, u2])`.
pub fn read_snapshot(path: &Path) -> Result<(usize, f64, f64, [Vec<f64>; 3])> {
    let bytes = std::fs::read(path).map_err(|e| Error::Usage(format!("cannot read snapshot {}: {e}", path.display())))?;
    let bad = || Error::Usage(format!("{} is not a valid snapshot", path.display()));
    if bytes.len() < 25 || &bytes[..5] != SNAPSHOT_MAGIC {
        return Err(bad());
    }
    let n = u32::from_le_bytes(bytes[5..9].try_into().map_err(|_| bad())?) as usize;
    let l = f64::from_le_bytes(bytes[9..17].try_into().map_err(|_| bad())?);
    let t = f64::from_le_bytes(bytes[17..25].try_into().map_err(|_| bad())?);
    if bytes.len() != 25 + 24 * n * n {
        return Err(bad());
    }
    let read = |c: usize| -> Vec<f64> {
        let off = 25 + 8 * c * n * n;
        bytes[off..off + 8 * n * n].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk"))).collect()
    };
    Ok((n, l, t, [read(0), read(1), read(2)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(l: f64) -> EulerParams {
        EulerParams::new(1.4, DampingLaw::new(1.0, l).unwrap()).unwrap()
    }

    fn small_cfg() -> SolverConfig {
        SolverConfig { l: 50.0, n: 64, t_end: 10.0, dt: 0.3125, eps: 0.01, r0: 4.0, output_every: 1.0, nonlinear: true, init: InitKind::GaussianBump }
    }

    #[test]
    fn params_validation() {
        assert!(EulerParams::new(1.0, DampingLaw::new(1.0, 0.5).unwrap()).is_err());
        assert!((params(0.5).varpi - 0.2).abs() < 1e-15);
        let p = params(0.5);
        assert!((p.rho_minus_one(0.01) - ((1.0 + 0.2 * 0.01f64).powf(5.0) - 1.0)).abs() < 1e-16);
    }

    #[test]
    fn config_validation() {
        let mut c = small_cfg();
        assert!(c.validate().is_ok());
        c.n = 60;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.dt = 1.0;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.t_end = 20.0;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.r0 = 13.0;
        assert!(c.validate().is_err());
        let mut c = small_cfg();
        c.eps = 0.2;
        assert!(c.validate().is_err());
        assert!(SolverConfig::default().validate().is_ok());
    }

    #[test]
    fn dealias_mask() {
        let g = Grid::new(10.0, 12);
        for idx in 0..g.nh * g.n {
            let (a, b) = (g.mx[idx / g.n], g.my[idx % g.n]);
            assert_eq!(g.mask[idx], a.abs() <= 4 && b.abs() <= 4);
        }
    }

    #[test]
    fn zero_state_is_fixed_point() {
        let s = Solver::new(params(0.5), 50.0, 32, true).unwrap();
        let f = s.init_field(InitKind::Zero, 0.0, 4.0).unwrap();
        let g = s.step(&f, 0.1).unwrap();
        assert!(g.v.iter().chain(&g.u1).chain(&g.u2).all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn bump_normalization_and_mass() {
        let s = Solver::new(params(0.5), 50.0, 128, true).unwrap();
        let f = s.init_field(InitKind::GaussianBump, 0.01, 4.0).unwrap();
        let v = s.real(&f.v);
        let peak = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        assert!((peak - 0.01).abs() < 1e-15);
        assert!(f.hermitian_defect() < 1e-13);
    }

    #[test]
    fn snapshot_roundtrip() {
        let s = Solver::new(params(0.5), 50.0, 16, true).unwrap();
        let f = s.init_field(InitKind::GaussianBump, 0.01, 4.0).unwrap();
        let dir = std::env::temp_dir().join(format!("deul-snap-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.bin");
        write_snapshot(&p, &s, &f).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..5], b"DEUL1");
        let (n, l, t, [v, _, _]) = read_snapshot(&p).unwrap();
        assert_eq!((n, l, t), (16, 50.0, 0.0));
        assert_eq!(v, s.real(&f.v));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
