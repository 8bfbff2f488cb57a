use crate::error::{GcmError, Result};
use crate::image::{Domain, ImageGrid};
use crate::scalar::Real;

/// Shock filter `u_t = −sign(Δu)·|∇u|`, explicit Euler with the upwind
/// (Osher–Rudin) gradient norm.
///
/// Pixel-domain inputs are filtered in 2-D with replicated borders. For a
/// gradient channel the filter runs on its primitive along the difference
/// axis (a periodic 1-D signal per line once the line mean is removed), and
/// the sharpened primitive is differenced back.
pub fn shock_filter<T: Real>(img: &ImageGrid<T>, iterations: usize, dt: T) -> Result<ImageGrid<T>> {
    if !(dt > T::zero()) || dt > T::lit(0.5) {
        return Err(GcmError::Parameter(format!("shock step must lie in (0, 0.5], got {dt}")));
    }
    Ok(match img.domain() {
        Domain::Pixel => {
            let mut u = img.clone();
            for _ in 0..iterations {
                u = shock_step_2d(&u, dt);
            }
            u
        }
        Domain::GradX => {
            let (h, w) = img.shape();
            let mut out = Vec::with_capacity(h * w);
            for r in 0..h {
                let line: Vec<T> = (0..w).map(|c| img.get(r, c)).collect();
                out.extend(sharpen_difference_line(&line, iterations, dt));
            }
            ImageGrid::from_parts(h, w, out, Domain::GradX)
        }
        Domain::GradY => {
            let (h, w) = img.shape();
            let mut out = vec![T::zero(); h * w];
            for c in 0..w {
                let line: Vec<T> = (0..h).map(|r| img.get(r, c)).collect();
                for (r, v) in sharpen_difference_line(&line, iterations, dt).into_iter().enumerate() {
                    out[r * w + c] = v;
                }
            }
            ImageGrid::from_parts(h, w, out, Domain::GradY)
        }
    })
}

#[inline]
fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Upwind magnitude for `u_t = −F|∇u|` given backward/forward differences.
#[inline]
fn upwind<T: Real>(f: T, back: T, fwd: T) -> T {
    let z = T::zero();
    if f > z {
        // erosion
        back.max(z).powi(2) + fwd.min(z).powi(2)
    } else {
        back.min(z).powi(2) + fwd.max(z).powi(2)
    }
}

fn shock_step_2d<T: Real>(u: &ImageGrid<T>, dt: T) -> ImageGrid<T> {
    let (h, w) = u.shape();
    ImageGrid::from_fn(h, w, u.domain(), |r, c| {
        let (r, c) = (r as isize, c as isize);
        let x = u.get_clamped(r, c);
        let (xl, xr) = (u.get_clamped(r, c - 1), u.get_clamped(r, c + 1));
        let (xu, xd) = (u.get_clamped(r - 1, c), u.get_clamped(r + 1, c));
        let lap = xl + xr + xu + xd - T::lit(4.0) * x;
        let f = sign(lap);
        if f == T::zero() {
            return x;
        }
        let g2 = upwind(f, x - xl, xr - x) + upwind(f, x - xu, xd - x);
        x - dt * f * g2.sqrt()
    })
}

fn shock_step_1d<T: Real>(p: &[T], dt: T) -> Vec<T> {
    let n = p.len();
    (0..n)
        .map(|i| {
            let x = p[i];
            let l = p[(i + n - 1) % n];
            let r = p[(i + 1) % n];
            let f = sign(l + r - T::lit(2.0) * x);
            if f == T::zero() {
                return x;
            }
            x - dt * f * upwind(f, x - l, r - x).sqrt()
        })
        .collect()
}

fn sharpen_difference_line<T: Real>(g: &[T], iterations: usize, dt: T) -> Vec<T> {
    let n = g.len();
    if n < 3 {
        return g.to_vec();
    }
    let mean = g.iter().copied().sum::<T>() / T::count(n);
    let mut primitive = Vec::with_capacity(n);
    let mut acc = T::zero();
    for &v in g {
        primitive.push(acc);
        acc += v - mean;
    }
    for _ in 0..iterations {
        primitive = shock_step_1d(&primitive, dt);
    }
    (0..n)
        .map(|i| primitive[(i + 1) % n] - primitive[i] + mean)
        .collect()
}
