//! Two-dimensional real FFT on an `n x n` periodic grid.
//!
//! Real fields are stored row-major (`f[iy * n + ix]`). Spectra keep only the
//! nonnegative `kx` half (`nh = n/2 + 1` columns) and are stored column-major,
//! `F[kx * n + ky]`, so that the `ky` transforms work on contiguous slices.
//! The forward transform is unnormalized; the inverse divides by `n^2`.
//! Rows and columns are transformed independently in parallel, so results do
//! not depend on the number of threads.

use crate::cmat::C64;
use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct Fft2 {
    n: usize,
    nh: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        assert!(n >= 4 && n.is_multiple_of(2), "grid size must be even");
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        Self { n, nh: n / 2 + 1, r2c: rp.plan_fft_forward(n), c2r: rp.plan_fft_inverse(n), fwd: cp.plan_fft_forward(n), inv: cp.plan_fft_inverse(n) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored `kx` columns.
    pub fn nh(&self) -> usize {
        self.nh
    }

    pub fn spectrum_len(&self) -> usize {
        self.nh * self.n
    }

    /// Forward transform of a real field into a half spectrum.
    pub fn forward(&self, real: &[f64], out: &mut [C64]) {
        let (n, nh) = (self.n, self.nh);
        assert_eq!(real.len(), n * n);
        assert_eq!(out.len(), nh * n);
        let mut rows = vec![C64::new(0.0, 0.0); n * nh];
        rows.par_chunks_mut(nh).zip(real.par_chunks(n)).for_each_init(
            || (self.r2c.make_input_vec(), self.r2c.make_scratch_vec()),
            |(inp, scratch), (dst, src)| {
                inp.copy_from_slice(src);
                self.r2c.process_with_scratch(inp, dst, scratch).expect("buffer sizes match the plan");
            },
        );
        out.par_chunks_mut(n).enumerate().for_each(|(kx, col)| {
            for (ky, c) in col.iter_mut().enumerate() {
                *c = rows[ky * nh + kx];
            }
        });
        out.par_chunks_mut(n).for_each_init(
            || vec![C64::new(0.0, 0.0); self.fwd.get_inplace_scratch_len()],
            |scratch, col| self.fwd.process_with_scratch(col, scratch),
        );
    }

    /// Inverse transform of a half spectrum into a real field (normalized).
    pub fn inverse(&self, spec: &[C64], out: &mut [f64]) {
        let (n, nh) = (self.n, self.nh);
        assert_eq!(spec.len(), nh * n);
        assert_eq!(out.len(), n * n);
        let mut cols = spec.to_vec();
        cols.par_chunks_mut(n).for_each_init(
            || vec![C64::new(0.0, 0.0); self.inv.get_inplace_scratch_len()],
            |scratch, col| self.inv.process_with_scratch(col, scratch),
        );
        let scale = 1.0 / (n * n) as f64;
        out.par_chunks_mut(n).enumerate().for_each_init(
            || (vec![C64::new(0.0, 0.0); nh], self.c2r.make_scratch_vec()),
            |(row, scratch), (ky, dst)| {
                for (kx, r) in row.iter_mut().enumerate() {
                    *r = cols[kx * n + ky];
                }
                // The kx = 0 and Nyquist entries of a real row transform are real.
                row[0].im = 0.0;
                row[nh - 1].im = 0.0;
                self.c2r.process_with_scratch(row, dst, scratch).expect("buffer sizes match the plan");
                for x in dst.iter_mut() {
                    *x *= scale;
                }
            },
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_single_mode() {
        let n = 16;
        let f = Fft2::new(n);
        let real: Vec<f64> = (0..n * n).map(|i| ((i * 7919) % 23) as f64 / 23.0 - 0.5).collect();
        let mut spec = vec![C64::new(0.0, 0.0); f.spectrum_len()];
        f.forward(&real, &mut spec);
        let mut back = vec![0.0; n * n];
        f.inverse(&spec, &mut back);
        for (a, b) in real.iter().zip(&back) {
            assert!((a - b).abs() < 1e-14);
        }
        // cos(2 pi (2 x + 3 y) / n) has weight n^2/2 at (kx, ky) = (2, 3).
        let wave: Vec<f64> = (0..n * n)
            .map(|i| {
                let (iy, ix) = (i / n, i % n);
                (2.0 * std::f64::consts::PI * (2 * ix + 3 * iy) as f64 / n as f64).cos()
            })
            .collect();
        f.forward(&wave, &mut spec);
        let c = spec[2 * n + 3];
        assert!((c.re - (n * n) as f64 / 2.0).abs() < 1e-10 && c.im.abs() < 1e-10);
        let total: f64 = spec.iter().map(|z| z.norm()).sum();
        assert!((total - c.norm()).abs() < 1e-9);
    }
}
