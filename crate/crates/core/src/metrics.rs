//! Restoration quality measures: PSNR, SSIM, kernel similarity and error ratio.

use num_traits::Float;

use crate::error::{GcmError, Result};
use crate::image::{forward_differences, ImageGrid};
use crate::kernel::BlurKernel;
use crate::scalar::Real;

pub fn mse<T: Real>(a: &ImageGrid<T>, b: &ImageGrid<T>) -> Result<T> {
    a.ensure_same_shape(b, "mse")?;
    Ok(a.sub(b).norm_sq() / T::count(a.len()))
}

/// `10·log₁₀(1/MSE)` for images on `[0, 1]`; identical inputs give `+∞`.
pub fn psnr<T: Real>(a: &ImageGrid<T>, b: &ImageGrid<T>) -> Result<T> {
    let m = mse(a, b)?;
    if m == T::zero() {
        return Ok(T::infinity());
    }
    Ok(-T::lit(10.0) * m.log10())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 1e-4;
pub const SSIM_C2: f64 = 9e-4;

fn gaussian_window<T: Real>() -> Vec<T> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| T::lit(v / s)).collect()
}

/// Mean SSIM over all fully contained 11×11 Gaussian windows (σ = 1.5).
pub fn ssim<T: Real>(a: &ImageGrid<T>, b: &ImageGrid<T>) -> Result<T> {
    a.ensure_same_shape(b, "ssim")?;
    let (h, w) = a.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(GcmError::Shape(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let g = gaussian_window::<T>();
    let (c1, c2) = (T::lit(SSIM_C1), T::lit(SSIM_C2));
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = T::zero();
    for r in 0..oh {
        for c in 0..ow {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) =
                (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    let wt = g[i] * g[j];
                    let (x, y) = (a.get(r + i, c + j), b.get(r + i, c + j));
                    ma += wt * x;
                    mb += wt * y;
                    saa += wt * x * x;
                    sbb += wt * y * y;
                    sab += wt * x * y;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            let two = T::lit(2.0);
            total += ((two * ma * mb + c1) * (two * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    Ok(total / T::count(oh * ow))
}

/// Maximum normalized cross-correlation over all relative shifts.
///
/// Both kernels are zero-padded to `2s − 1` (with `s` the larger size) before
/// the cyclic search, so no shift wraps support onto itself.
pub fn kernel_similarity<T: Real>(k1: &BlurKernel<T>, k2: &BlurKernel<T>) -> Result<T> {
    let s = k1.size().max(k2.size());
    let n = 2 * s - 1;
    let a = k1.pad_to(n)?;
    let b = k2.pad_to(n)?;
    let na = a.weights().iter().map(|&v| v * v).sum::<T>().sqrt();
    let nb = b.weights().iter().map(|&v| v * v).sum::<T>().sqrt();
    if !(na > T::zero() && nb > T::zero()) {
        return Err(GcmError::Numeric("kernel similarity of a zero kernel".into()));
    }
    let mut best = T::neg_infinity();
    for dr in 0..n {
        for dc in 0..n {
            let mut acc = T::zero();
            for r in 0..n {
                for c in 0..n {
                    acc += a.get(r, c) * b.get((r + dr) % n, (c + dc) % n);
                }
            }
            best = best.max(acc);
        }
    }
    Ok((best / (na * nb)).min(T::one()))
}

/// `SSD(restored_est_k, sharp) / SSD(restored_true_k, sharp)`; `+∞` when the
/// reference restoration is perfect.
pub fn error_ratio<T: Real>(
    restored_est_k: &ImageGrid<T>,
    restored_true_k: &ImageGrid<T>,
    sharp: &ImageGrid<T>,
) -> Result<T> {
    restored_est_k.ensure_same_shape(sharp, "error_ratio")?;
    restored_true_k.ensure_same_shape(sharp, "error_ratio")?;
    let num = restored_est_k.sub(sharp).norm_sq();
    let den = restored_true_k.sub(sharp).norm_sq();
    if restored_est_k == restored_true_k {
        return Ok(T::one());
    }
    if den == T::zero() {
        return Ok(T::infinity());
    }
    Ok(num / den)
}

/// Number of pixels whose periodic forward-difference gradient magnitude
/// exceeds `threshold`.
pub fn gradient_l0_count<T: Real>(img: &ImageGrid<T>, threshold: T) -> usize {
    let (gx, gy) = forward_differences(img);
    gx.data()
        .iter()
        .zip(gy.data())
        .filter(|(&x, &y)| (x * x + y * y).sqrt() > threshold)
        .count()
}

/// Default threshold for [`gradient_l0_count`].
pub fn gradient_l0_threshold<T: Real>() -> T {
    T::lit(1e-3)
}

pub fn max_abs_diff<T: Real>(a: &ImageGrid<T>, b: &ImageGrid<T>) -> Result<T> {
    a.ensure_same_shape(b, "max_abs_diff")?;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| Float::abs(x - y))
        .fold(T::zero(), T::max))
}
