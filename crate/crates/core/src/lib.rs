//! Numerical verification toolkit for wave equations and compressible Euler
//! systems with time-dependent damping `b(t) = mu (1+t)^(-lambda)`.
//!
//! The crate evaluates the damping law and its decay envelopes, classifies
//! phase-time points into zones, integrates the frequency-space propagators,
//! implements the elliptic-zone diagonalization, certifies decay envelopes,
//! computes Plancherel norms of radial profiles, and runs a pseudo-spectral
//! nonlinear solver on a periodic box.

// Parameter checks are written `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cmat;
pub mod damping;
pub mod diagonalizer;
pub mod envelopes;
pub mod error;
pub mod fft2;
pub mod nonlinear;
pub mod ode;
pub mod propagator;
pub mod quad;
pub mod spectra;
pub mod zones;

pub use damping::{DampingLaw, Envelope};
pub use error::{Error, Result};
pub use zones::{Boundary, Family, Zone, ZoneConfig};
