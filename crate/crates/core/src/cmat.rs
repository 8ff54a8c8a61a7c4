//! Minimal 2x2 complex matrix arithmetic.

use num_complex::Complex64;
use std::ops::{Add, Mul, Neg, Sub};

pub type C64 = Complex64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// A 2x2 complex matrix in row-major order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CMat2(pub [[C64; 2]; 2]);

impl CMat2 {
    pub fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Self([[a, b], [c, d]])
    }

    pub fn real(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self::new(a.into(), b.into(), c.into(), d.into())
    }

    pub fn identity() -> Self {
        Self::real(1.0, 0.0, 0.0, 1.0)
    }

    pub fn zero() -> Self {
        Self::real(0.0, 0.0, 0.0, 0.0)
    }

    pub fn diag(a: C64, d: C64) -> Self {
        Self::new(a, C64::from(0.0), C64::from(0.0), d)
    }

    pub fn scale(&self, s: C64) -> Self {
        let m = self.0;
        Self::new(m[0][0] * s, m[0][1] * s, m[1][0] * s, m[1][1] * s)
    }

    pub fn det(&self) -> C64 {
        let m = self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d.norm() == 0.0 || !d.is_finite() {
            return None;
        }
        let m = self.0;
        Some(Self::new(m[1][1] / d, -m[0][1] / d, -m[1][0] / d, m[0][0] / d))
    }

    /// Maximum modulus of the entries.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[i][j]
    }
}

impl Add for CMat2 {
    type Output = CMat2;
    fn add(self, r: CMat2) -> CMat2 {
        let (a, b) = (self.0, r.0);
        CMat2::new(a[0][0] + b[0][0], a[0][1] + b[0][1], a[1][0] + b[1][0], a[1][1] + b[1][1])
    }
}

impl Sub for CMat2 {
    type Output = CMat2;
    fn sub(self, r: CMat2) -> CMat2 {
        let (a, b) = (self.0, r.0);
        CMat2::new(a[0][0] - b[0][0], a[0][1] - b[0][1], a[1][0] - b[1][0], a[1][1] - b[1][1])
    }
}

impl Neg for CMat2 {
    type Output = CMat2;
    fn neg(self) -> CMat2 {
        self.scale(C64::from(-1.0))
    }
}

impl Mul for CMat2 {
    type Output = CMat2;
    fn mul(self, r: CMat2) -> CMat2 {
        let (a, b) = (self.0, r.0);
        CMat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_roundtrip() {
        let m = CMat2::new(C64::new(1.0, 2.0), C64::new(0.5, -1.0), C64::new(-3.0, 0.1), C64::new(2.0, 0.0));
        let p = m * m.inverse().unwrap();
        assert!((p - CMat2::identity()).max_abs() < 1e-14);
        assert!(CMat2::zero().inverse().is_none());
    }
}
