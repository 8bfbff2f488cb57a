//! Euclidean projection onto the probability simplex `{w : w ≥ 0, Σw = 1}`.

use crate::error::{GcmError, Result};
use crate::scalar::Real;

/// Sort-and-threshold projection: find the largest `ρ` with
/// `s_ρ − (Σ_{i≤ρ} s_i − 1)/ρ > 0` over the descending sort `s`, then clip
/// `w − θ` at zero.
pub fn project_simplex<T: Real>(w: &[T]) -> Result<Vec<T>> {
    if w.is_empty() {
        return Err(GcmError::Shape("cannot project an empty vector onto the simplex".into()));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(GcmError::Numeric("simplex projection input is not finite".into()));
    }
    let mut sorted = w.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));

    let mut cumulative = T::zero();
    let mut theta = T::zero();
    for (i, &s) in sorted.iter().enumerate() {
        cumulative += s;
        let candidate = (cumulative - T::one()) / T::count(i + 1);
        if s - candidate > T::zero() {
            theta = candidate;
        }
    }
    let mut out: Vec<T> = w.iter().map(|&v| (v - theta).max(T::zero())).collect();

    // absorb the last ulp of drift so downstream Σ = 1 checks hold tightly
    let total: T = out.iter().copied().sum();
    if total > T::zero() {
        out.iter_mut().for_each(|v| *v /= total);
    }
    Ok(out)
}
