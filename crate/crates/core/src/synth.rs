//! Seeded synthetic data: blur-plus-noise observations, motion kernels and
//! test scenes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{GcmError, Result};
use crate::image::{convolve, Boundary, Domain, ImageGrid};
use crate::kernel::BlurKernel;
use crate::scalar::Real;

/// Zero-mean Gaussian field of standard deviation `sigma`.
pub fn gaussian_noise<T: Real>(h: usize, w: usize, sigma: T, seed: u64) -> Result<ImageGrid<T>> {
    if !(sigma >= T::zero()) || !sigma.is_finite() {
        return Err(GcmError::Parameter(format!("noise level must be >= 0, got {sigma}")));
    }
    let normal = Normal::new(0.0, sigma.to_f64_lossy()).map_err(|e| GcmError::Parameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..h * w).map(|_| T::lit(normal.sample(&mut rng))).collect();
    ImageGrid::new(h, w, data, Domain::Pixel)
}

/// `clamp(sharp ⊗ k + n)` with periodic convolution and `n ~ N(0, σ²)`.
pub fn synth_blur<T: Real>(sharp: &ImageGrid<T>, k: &BlurKernel<T>, sigma: T, seed: u64) -> Result<ImageGrid<T>> {
    let blurred = convolve(sharp, k, Boundary::Periodic)?;
    if sigma == T::zero() {
        return Ok(blurred.clamp01());
    }
    let noise = gaussian_noise(sharp.height(), sharp.width(), sigma, seed)?;
    Ok(blurred.add(&noise).clamp01())
}

/// Random-walk camera trajectory rasterized into a `size×size` kernel.
///
/// The path is recentred on its centroid and shrunk if needed so it fits the
/// support; samples are splatted bilinearly and the result is normalized.
pub fn motion_kernel<T: Real>(size: usize, seed: u64) -> Result<BlurKernel<T>> {
    if size.is_multiple_of(2) || size < 3 {
        return Err(GcmError::Shape(format!("motion kernel size must be odd and >= 3, got {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let turn = Normal::new(0.0, 0.5).expect("valid normal");
    let steps = 8 * size;
    let mut theta = rng.random::<f64>() * std::f64::consts::TAU;
    let (mut x, mut y) = (0.0f64, 0.0f64);
    let mut path = Vec::with_capacity(steps);
    for _ in 0..steps {
        path.push((x, y));
        theta += turn.sample(&mut rng);
        x += 0.25 * theta.cos();
        y += 0.25 * theta.sin();
    }
    let n = path.len() as f64;
    let (mx, my) = path.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / n, b + y / n));
    let rad = (size / 2) as f64;
    let extent = path
        .iter()
        .map(|&(x, y)| (x - mx).abs().max((y - my).abs()))
        .fold(0.0, f64::max);
    let shrink = if extent > rad - 0.01 { (rad - 0.01) / extent } else { 1.0 };
    let mut w = vec![0.0f64; size * size];
    for &(x, y) in &path {
        let px = (x - mx) * shrink + rad;
        let py = (y - my) * shrink + rad;
        let (c0, r0) = (px.floor(), py.floor());
        let (tx, ty) = (px - c0, py - r0);
        for (dr, wy) in [(0usize, 1.0 - ty), (1, ty)] {
            for (dc, wx) in [(0usize, 1.0 - tx), (1, tx)] {
                let (r, c) = (r0 as usize + dr, c0 as usize + dc);
                if r < size && c < size {
                    w[r * size + c] += wx * wy;
                }
            }
        }
    }
    let s: f64 = w.iter().sum();
    BlurKernel::projected(size, &w.into_iter().map(|v| T::lit(v / s)).collect::<Vec<_>>())
}

/// Isotropic Gaussian kernel of standard deviation `sigma`.
pub fn gaussian_kernel<T: Real>(size: usize, sigma: f64) -> Result<BlurKernel<T>> {
    if size.is_multiple_of(2) || !(sigma > 0.0) {
        return Err(GcmError::Parameter("gaussian kernel needs odd size and sigma > 0".into()));
    }
    let rad = (size / 2) as f64;
    let w: Vec<f64> = (0..size * size)
        .map(|i| {
            let (r, c) = ((i / size) as f64 - rad, (i % size) as f64 - rad);
            (-(r * r + c * c) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    BlurKernel::projected(size, &w.into_iter().map(|v| T::lit(v / s)).collect::<Vec<_>>())
}

/// Piecewise-constant scene of overlapping rectangles and discs on a flat
/// background, values in `[0.1, 0.9]`.
pub fn shapes_scene<T: Real>(h: usize, w: usize, seed: u64) -> ImageGrid<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = vec![0.5f64; h * w];
    let (hf, wf) = (h as f64, w as f64);
    for i in 0..12 {
        let level = 0.1 + 0.8 * rng.random::<f64>();
        let (cy, cx) = (rng.random::<f64>() * hf, rng.random::<f64>() * wf);
        let a = (0.08 + 0.2 * rng.random::<f64>()) * hf.min(wf);
        let b = (0.08 + 0.2 * rng.random::<f64>()) * hf.min(wf);
        for r in 0..h {
            for c in 0..w {
                let (dy, dx) = (r as f64 + 0.5 - cy, c as f64 + 0.5 - cx);
                let inside = if i % 2 == 0 {
                    dy.abs() <= a && dx.abs() <= b
                } else {
                    (dy / a).powi(2) + (dx / a).powi(2) <= 1.0
                };
                if inside {
                    img[r * w + c] = level;
                }
            }
        }
    }
    ImageGrid::from_parts(h, w, img.into_iter().map(T::lit).collect(), Domain::Pixel)
}

/// Smooth scene: a sum of a few random low-frequency cosines mapped to
/// `[0.1, 0.9]`.
pub fn smooth_scene<T: Real>(h: usize, w: usize, seed: u64) -> ImageGrid<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.5..2.0),
                rng.random_range(0.5..2.0),
                rng.random::<f64>() * std::f64::consts::TAU,
                rng.random_range(0.5..1.0),
            )
        })
        .collect();
    let raw: Vec<f64> = (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64 / h as f64, (i % w) as f64 / w as f64);
            waves
                .iter()
                .map(|&(fy, fx, ph, amp)| amp * (std::f64::consts::TAU * (fy * y + fx * x) + ph).cos())
                .sum()
        })
        .collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    ImageGrid::from_parts(
        h,
        w,
        raw.into_iter().map(|v| T::lit(0.1 + 0.8 * (v - lo) / span)).collect(),
        Domain::Pixel,
    )
}

/// Piecewise-constant blocks `(clean)` and the same blocks plus a sinusoidal
/// texture of the given amplitude `(textured)`. Neighbouring blocks alternate
/// between dark and light levels, so every edge has contrast of at least 0.2.
pub fn textured_blocks<T: Real>(h: usize, w: usize, amplitude: f64, seed: u64) -> (ImageGrid<T>, ImageGrid<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (by, bx) = (4usize, 4usize);
    let levels: Vec<f64> = (0..by * bx)
        .map(|i| {
            if (i / bx + i % bx) % 2 == 0 {
                rng.random_range(0.2..0.4)
            } else {
                rng.random_range(0.6..0.8)
            }
        })
        .collect();
    let (fy, fx) = (rng.random_range(0.2..0.35), rng.random_range(0.2..0.35));
    let clean = ImageGrid::from_fn(h, w, Domain::Pixel, |r, c| {
        T::lit(levels[(r * by / h) * bx + c * bx / w])
    });
    let textured = ImageGrid::from_fn(h, w, Domain::Pixel, |r, c| {
        let t = amplitude * (std::f64::consts::TAU * (fy * r as f64 + fx * c as f64)).sin();
        clean.get(r, c) + T::lit(t)
    });
    (clean, textured)
}

/// Binary mask with each pixel missing independently with probability
/// `fraction`; at least one pixel is kept observed.
pub fn random_mask<T: Real>(h: usize, w: usize, fraction: f64, seed: u64) -> Result<ImageGrid<T>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(GcmError::Mask(format!("missing fraction must lie in (0, 1), got {fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<T> = (0..h * w)
        .map(|_| if rng.random::<f64>() < fraction { T::zero() } else { T::one() })
        .collect();
    if data.iter().all(|&v| v == T::zero()) {
        data[0] = T::one();
    }
    ImageGrid::new(h, w, data, Domain::Pixel)
}
