//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All grids, kernels and solvers are generic over [`Real`], which is
//! implemented for `f32` and `f64`. Tolerances that depend on the working
//! precision live here so call sites never hard-code an `f64` epsilon.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst};
use rustfft::FftNum;

/// Floating-point scalar usable by the spectral solvers and the engine.
///
/// `FftNum` and `Float` both provide `abs`/`signum`; call them as
/// `Float::abs(x)` in generic code to disambiguate.
pub trait Real:
    Float
    + FloatConst
    + FftNum
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Display
    + LowerExp
    + Debug
{
    /// Slack on the monitor comparison `Ψ(ũ) ≤ Ψ(u)`, absorbing FFT round-off.
    fn monitor_slack() -> Self;
    /// Slack on the descent postcondition `Ψ(u⁺) ≤ Ψ(u)` before it is reported
    /// as a broken invariant.
    fn invariant_slack() -> Self;
    /// Absolute tolerance on `Σk = 1` for a blur kernel with `n` taps.
    fn simplex_tol(n: usize) -> Self;

    /// Converts an `f64` literal into the working precision.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Converts a count into the working precision.
    #[inline]
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    fn monitor_slack() -> Self {
        1e-12
    }
    fn invariant_slack() -> Self {
        1e-9
    }
    fn simplex_tol(n: usize) -> Self {
        (8.0 * f64::EPSILON * n as f64).max(1e-12)
    }
}

impl Real for f32 {
    fn monitor_slack() -> Self {
        1e-5
    }
    fn invariant_slack() -> Self {
        1e-3
    }
    fn simplex_tol(n: usize) -> Self {
        (8.0 * f32::EPSILON * n as f32).max(1e-6)
    }
}
