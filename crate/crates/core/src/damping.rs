//! The damping law `b(t) = mu (1+t)^(-lambda)`, its closed-form derivatives and
//! time integrals, the decay envelopes Gamma/Theta, and the exact vorticity factor.

use crate::error::{domain, invalid, Result};
use serde::{Deserialize, Serialize};

/// Damping coefficient `b(t) = mu (1+t)^(-lambda)` with `mu > 0`, `0 <= lambda < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingLaw {
    mu: f64,
    lambda: f64,
}

/// Values of the decay envelopes at a pair `(t, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    /// `Gamma(t,s) = (1 + (1+t)^(1+lambda) - (1+s)^(1+lambda))^(-1/2)`.
    pub gamma: f64,
    /// `Theta(t,s) = min(Gamma(t,s), (1+t)^(-lambda))`.
    pub theta: f64,
}

/// `b` together with its first three time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BDerivs {
    pub b: f64,
    pub db: f64,
    pub d2b: f64,
    pub d3b: f64,
}

fn check_interval(s: f64, t: f64) -> Result<()> {
    if !(s >= 0.0) || !(t >= s) || !t.is_finite() {
        return Err(domain(format!("require 0 <= s <= t, got s = {s}, t = {t}")));
    }
    Ok(())
}

/// `(1+t)^p - (1+s)^p` evaluated without cancellation for nearby `s`, `t`.
fn pow_increment(s: f64, t: f64, p: f64) -> f64 {
    if t == s {
        return 0.0;
    }
    let ls = s.ln_1p();
    let lt = t.ln_1p();
    // (1+s)^p * (exp(p (ln(1+t) - ln(1+s))) - 1)
    (p * ls).exp() * (p * (lt - ls)).exp_m1()
}

impl DampingLaw {
    pub fn new(mu: f64, lambda: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(invalid(format!("mu must be positive and finite, got {mu}")));
        }
        if !(0.0..1.0).contains(&lambda) {
            return Err(invalid(format!("lambda must lie in [0, 1), got {lambda}")));
        }
        Ok(Self { mu, lambda })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `b(t)`; errors for `t < 0`.
    pub fn eval_b(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(domain(format!("t must be nonnegative, got {t}")));
        }
        Ok(self.b(t))
    }

    /// `b(t)` without the domain check (caller guarantees `t >= 0`).
    #[inline]
    pub fn b(&self, t: f64) -> f64 {
        if self.lambda == 0.0 {
            self.mu
        } else {
            self.mu * (-self.lambda * t.ln_1p()).exp()
        }
    }

    /// `b'(t) = -lambda mu (1+t)^(-lambda-1)`.
    #[inline]
    pub fn db(&self, t: f64) -> f64 {
        -self.lambda * self.b(t) / (1.0 + t)
    }

    /// `b''(t) = lambda (lambda+1) mu (1+t)^(-lambda-2)`.
    #[inline]
    pub fn d2b(&self, t: f64) -> f64 {
        let x = 1.0 + t;
        self.lambda * (self.lambda + 1.0) * self.b(t) / (x * x)
    }

    /// All derivatives up to third order in one evaluation.
    #[inline]
    pub fn derivs(&self, t: f64) -> BDerivs {
        let l = self.lambda;
        let x = 1.0 + t;
        let b = self.b(t);
        let db = -l * b / x;
        let d2b = -(l + 1.0) * db / x;
        let d3b = -(l + 2.0) * d2b / x;
        BDerivs { b, db, d2b, d3b }
    }

    /// `int_s^t b = mu [(1+t)^(1-lambda) - (1+s)^(1-lambda)] / (1-lambda)`.
    pub fn integral_b(&self, s: f64, t: f64) -> Result<f64> {
        check_interval(s, t)?;
        Ok(self.integral_b_unchecked(s, t))
    }

    #[inline]
    pub(crate) fn integral_b_unchecked(&self, s: f64, t: f64) -> f64 {
        if self.lambda == 0.0 {
            self.mu * (t - s)
        } else {
            let p = 1.0 - self.lambda;
            self.mu * pow_increment(s, t, p) / p
        }
    }

    /// `int_s^t 1/b = [(1+t)^(1+lambda) - (1+s)^(1+lambda)] / (mu (1+lambda))`.
    pub fn integral_inv_b(&self, s: f64, t: f64) -> Result<f64> {
        check_interval(s, t)?;
        Ok(self.integral_inv_b_unchecked(s, t))
    }

    #[inline]
    pub(crate) fn integral_inv_b_unchecked(&self, s: f64, t: f64) -> f64 {
        let p = 1.0 + self.lambda;
        pow_increment(s, t, p) / (self.mu * p)
    }

    /// The decay envelopes Gamma and Theta at `(t, s)`.
    pub fn envelope(&self, s: f64, t: f64) -> Result<Envelope> {
        check_interval(s, t)?;
        Ok(self.envelope_unchecked(s, t))
    }

    #[inline]
    pub(crate) fn envelope_unchecked(&self, s: f64, t: f64) -> Envelope {
        let inc = pow_increment(s, t, 1.0 + self.lambda);
        let gamma = (1.0 + inc).powf(-0.5);
        let theta = gamma.min((-self.lambda * t.ln_1p()).exp());
        Envelope { gamma, theta }
    }

    /// Exact solution factor `exp(-int_s^t b)` of the vorticity equation `w_t + b w = 0`.
    pub fn vorticity_factor(&self, s: f64, t: f64) -> Result<f64> {
        Ok((-self.integral_b(s, t)?).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(mu: f64, lambda: f64) -> DampingLaw {
        DampingLaw::new(mu, lambda).unwrap()
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(DampingLaw::new(0.0, 0.5).is_err());
        assert!(DampingLaw::new(-1.0, 0.5).is_err());
        assert!(DampingLaw::new(1.0, 1.0).is_err());
        assert!(DampingLaw::new(1.0, -0.1).is_err());
        assert!(DampingLaw::new(f64::NAN, 0.1).is_err());
    }

    #[test]
    fn b_values() {
        assert_eq!(law(2.0, 0.0).eval_b(7.0).unwrap(), 2.0);
        assert!((law(2.0, 0.5).eval_b(3.0).unwrap() - 1.0).abs() < 1e-15);
        let d = law(1.0, 0.5).derivs(0.0);
        assert!((d.b - 1.0).abs() < 1e-15);
        assert!((d.db + 0.5).abs() < 1e-15);
        assert!((d.d2b - 0.75).abs() < 1e-15);
        assert!(law(1.0, 0.5).eval_b(-1.0).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let l = law(1.3, 0.7);
        let h = 1e-5;
        for &t in &[0.0, 0.5, 3.0, 40.0] {
            let t = t + 2.0 * h;
            let d = l.derivs(t);
            let fd1 = (l.b(t + h) - l.b(t - h)) / (2.0 * h);
            let fd2 = (l.db(t + h) - l.db(t - h)) / (2.0 * h);
            let fd3 = (l.d2b(t + h) - l.d2b(t - h)) / (2.0 * h);
            assert!((d.db - fd1).abs() < 1e-8 * (1.0 + d.db.abs()));
            assert!((d.d2b - fd2).abs() < 1e-8 * (1.0 + d.d2b.abs()));
            assert!((d.d3b - fd3).abs() < 1e-8 * (1.0 + d.d3b.abs()));
        }
    }

    #[test]
    fn integrals() {
        assert!((law(2.0, 0.0).integral_b(0.0, 5.0).unwrap() - 10.0).abs() < 1e-14);
        assert!((law(2.0, 0.5).integral_b(0.0, 3.0).unwrap() - 4.0).abs() < 1e-14);
        assert_eq!(law(1.0, 0.3).integral_b(2.0, 2.0).unwrap(), 0.0);
        assert!((law(2.0, 0.5).integral_inv_b(0.0, 3.0).unwrap() - 7.0 / 3.0).abs() < 1e-14);
        assert!((law(1.0, 0.0).integral_inv_b(2.0, 6.0).unwrap() - 4.0).abs() < 1e-14);
        assert_eq!(law(1.0, 0.3).integral_inv_b(2.0, 2.0).unwrap(), 0.0);
        assert!(law(1.0, 0.3).integral_b(3.0, 2.0).is_err());
        assert!(law(1.0, 0.3).integral_inv_b(-1.0, 2.0).is_err());
    }

    #[test]
    fn envelope_values() {
        let e = law(1.0, 0.0).envelope(0.0, 3.0).unwrap();
        assert!((e.gamma - 0.5).abs() < 1e-15);
        assert!((e.theta - 0.5).abs() < 1e-15);
        let e = law(1.0, 0.5).envelope(4.0, 4.0).unwrap();
        assert_eq!(e.gamma, 1.0);
        assert!((e.theta - 5f64.powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn envelope_local_slopes() {
        let l = law(1.0, 0.5);
        let slope = |f: &dyn Fn(f64) -> f64| (f(1e4).ln() - f(1e3).ln()) / (1e4f64.ln() - 1e3f64.ln());
        let g = slope(&|t| l.envelope(0.0, t).unwrap().gamma);
        // For s = 0 the Gamma branch is the smaller one, so Theta = Gamma there;
        // the (1+t)^(-lambda) branch is active on the diagonal s = t.
        let th0 = slope(&|t| l.envelope(0.0, t).unwrap().theta);
        let thd = slope(&|t| l.envelope(t, t).unwrap().theta);
        assert!((g + 0.75).abs() < 0.0075, "gamma slope {g}");
        assert!((th0 + 0.75).abs() < 0.0075, "theta slope at s=0 {th0}");
        assert!((thd + 0.5).abs() < 0.005, "theta slope on the diagonal {thd}");
    }

    #[test]
    fn vorticity_values() {
        assert!((law(2.0, 0.0).vorticity_factor(0.0, 1.0).unwrap() - (-2f64).exp()).abs() < 1e-16);
        assert_eq!(law(2.0, 0.4).vorticity_factor(1.0, 1.0).unwrap(), 1.0);
        assert!((law(1.0, 0.5).vorticity_factor(0.0, 3.0).unwrap() - (-2f64).exp()).abs() < 1e-16);
    }
}
