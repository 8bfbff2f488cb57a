//! Closed-form FFT solutions of the quadratic subproblems under periodic
//! boundary conditions: the fidelity warm start and the kernel
//! least-squares update.

use std::sync::Arc;

use num_complex::Complex;
use num_traits::Zero;
use rustfft::{Fft, FftPlanner};

use crate::error::{GcmError, Result};
use crate::image::{forward_differences, Domain, ImageGrid};
use crate::kernel::BlurKernel;
use crate::scalar::Real;

pub use crate::simplex::project_simplex;

/// FFT plans for one grid size plus the transfer functions of the periodic
/// forward-difference operators. Immutable once built; every transform
/// allocates its own buffers, so one plan can serve concurrent solves.
pub struct SpectralPlan<T: Real> {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
    dx: Vec<Complex<T>>,
    dy: Vec<Complex<T>>,
}

impl<T: Real> std::fmt::Debug for SpectralPlan<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish_non_exhaustive()
    }
}

impl<T: Real> SpectralPlan<T> {
    pub fn new(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "plan dimensions must be positive");
        let mut planner = FftPlanner::new();
        let mut plan = Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
            dx: Vec::new(),
            dy: Vec::new(),
        };
        let n = height * width;
        let mut dx = vec![T::zero(); n];
        dx[0] = -T::one();
        dx[(width - 1) % width] += T::one();
        let mut dy = vec![T::zero(); n];
        dy[0] = -T::one();
        dy[((height - 1) % height) * width] += T::one();
        plan.dx = plan.forward(&dx);
        plan.dy = plan.forward(&dy);
        plan
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn check(&self, g: &ImageGrid<T>, what: &str) -> Result<()> {
        if g.shape() != self.shape() {
            return Err(GcmError::Shape(format!(
                "{what}: grid is {}x{}, plan is {}x{}",
                g.height(),
                g.width(),
                self.height,
                self.width
            )));
        }
        Ok(())
    }

    fn transform(&self, buf: &mut [Complex<T>], row: &Arc<dyn Fft<T>>, col: &Arc<dyn Fft<T>>) {
        let (h, w) = (self.height, self.width);
        row.process(buf);
        let mut t = vec![Complex::zero(); h * w];
        for r in 0..h {
            for c in 0..w {
                t[c * h + r] = buf[r * w + c];
            }
        }
        col.process(&mut t);
        for r in 0..h {
            for c in 0..w {
                buf[r * w + c] = t[c * h + r];
            }
        }
    }

    /// Unnormalised forward DFT of a row-major real field.
    pub fn forward(&self, data: &[T]) -> Vec<Complex<T>> {
        assert_eq!(data.len(), self.height * self.width, "forward: length mismatch");
        let mut buf: Vec<Complex<T>> = data.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.transform(&mut buf, &self.row_fwd, &self.col_fwd);
        buf
    }

    /// Inverse DFT (scaled by `1/(hw)`), keeping the real part.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex<T>>) -> Vec<T> {
        assert_eq!(spectrum.len(), self.height * self.width, "inverse: length mismatch");
        self.transform(&mut spectrum, &self.row_inv, &self.col_inv);
        let scale = T::one() / T::count(self.height * self.width);
        spectrum.into_iter().map(|z| z.re * scale).collect()
    }

    pub fn forward_grid(&self, g: &ImageGrid<T>) -> Result<Vec<Complex<T>>> {
        self.check(g, "forward transform")?;
        Ok(self.forward(g.data()))
    }

    pub fn inverse_grid(&self, spectrum: Vec<Complex<T>>, domain: Domain) -> Result<ImageGrid<T>> {
        let data = self.inverse_real(spectrum);
        let g = ImageGrid::from_parts(self.height, self.width, data, domain);
        g.check_finite("inverse transform")?;
        Ok(g)
    }

    /// Transfer function of periodic convolution with `k` (the kernel is
    /// wrapped so its centre sits at the origin).
    pub fn kernel_transfer(&self, k: &BlurKernel<T>) -> Result<Vec<Complex<T>>> {
        let (h, w) = self.shape();
        if k.size() > h || k.size() > w {
            return Err(GcmError::Shape(format!(
                "{0}x{0} kernel exceeds {h}x{w} plan",
                k.size()
            )));
        }
        let rad = k.radius() as isize;
        let mut psf = vec![T::zero(); h * w];
        for i in 0..k.size() {
            for j in 0..k.size() {
                let r = (i as isize - rad).rem_euclid(h as isize) as usize;
                let c = (j as isize - rad).rem_euclid(w as isize) as usize;
                psf[r * w + c] += k.get(i, j);
            }
        }
        Ok(self.forward(&psf))
    }

    pub fn dx_transfer(&self) -> &[Complex<T>] {
        &self.dx
    }

    pub fn dy_transfer(&self) -> &[Complex<T>] {
        &self.dy
    }

    /// Applies a diagonal frequency-domain filter.
    pub fn filter(&self, g: &ImageGrid<T>, transfer: &[Complex<T>], conjugate: bool) -> Result<ImageGrid<T>> {
        let mut spec = self.forward_grid(g)?;
        for (s, &t) in spec.iter_mut().zip(transfer) {
            *s = *s * if conjugate { t.conj() } else { t };
        }
        self.inverse_grid(spec, g.domain())
    }
}

/// Periodic convolution operator with a cached transfer function.
#[derive(Clone, Debug)]
pub struct ConvolutionOperator<T: Real> {
    plan: Arc<SpectralPlan<T>>,
    kernel: BlurKernel<T>,
    transfer: Vec<Complex<T>>,
}

impl<T: Real> ConvolutionOperator<T> {
    pub fn new(plan: Arc<SpectralPlan<T>>, kernel: BlurKernel<T>) -> Result<Self> {
        let transfer = plan.kernel_transfer(&kernel)?;
        Ok(Self {
            plan,
            kernel,
            transfer,
        })
    }

    pub fn for_shape(height: usize, width: usize, kernel: BlurKernel<T>) -> Result<Self> {
        Self::new(Arc::new(SpectralPlan::new(height, width)), kernel)
    }

    pub fn kernel(&self) -> &BlurKernel<T> {
        &self.kernel
    }

    pub fn plan(&self) -> &Arc<SpectralPlan<T>> {
        &self.plan
    }

    pub fn transfer(&self) -> &[Complex<T>] {
        &self.transfer
    }

    /// `u ⊗ k`
    pub fn apply(&self, u: &ImageGrid<T>) -> Result<ImageGrid<T>> {
        self.plan.filter(u, &self.transfer, false)
    }

    /// `k̄ ⊗ r`, the adjoint of [`apply`](Self::apply).
    pub fn adjoint(&self, r: &ImageGrid<T>) -> Result<ImageGrid<T>> {
        self.plan.filter(r, &self.transfer, true)
    }

    /// Minimiser of `‖u⊗k − y‖² + γ‖u − u_prev‖²`:
    /// `û = (conj(K̂)·ŷ + γ·û_prev) / (|K̂|² + γ)`.
    pub fn warm_start(&self, y: &ImageGrid<T>, u_prev: &ImageGrid<T>, gamma: T) -> Result<ImageGrid<T>> {
        if !(gamma > T::zero()) || !gamma.is_finite() {
            return Err(GcmError::Parameter(format!("gamma must be positive, got {gamma}")));
        }
        y.ensure_same_shape(u_prev, "warm start")?;
        let y_hat = self.plan.forward_grid(y)?;
        let p_hat = self.plan.forward_grid(u_prev)?;
        let spec: Vec<Complex<T>> = y_hat
            .iter()
            .zip(&p_hat)
            .zip(&self.transfer)
            .map(|((&yh, &ph), &kh)| (kh.conj() * yh + ph * gamma) / (kh.norm_sqr() + gamma))
            .collect();
        self.plan.inverse_grid(spec, y.domain())
    }
}

/// Fidelity warm start `argmin_u ‖u⊗k − y‖² + γ‖u − u_prev‖²`.
pub fn warm_start_deconv<T: Real>(
    y: &ImageGrid<T>,
    k: &BlurKernel<T>,
    u_prev: &ImageGrid<T>,
    gamma: T,
) -> Result<ImageGrid<T>> {
    y.ensure_same_shape(u_prev, "warm_start_deconv")?;
    ConvolutionOperator::for_shape(y.height(), y.width(), k.clone())?.warm_start(y, u_prev, gamma)
}

fn expand_channels<T: Real>(
    u: &[ImageGrid<T>],
    y: &[ImageGrid<T>],
) -> Result<Vec<(ImageGrid<T>, ImageGrid<T>)>> {
    if u.is_empty() || u.len() != y.len() {
        return Err(GcmError::Shape(format!(
            "kernel update needs matching channel lists, got {} and {}",
            u.len(),
            y.len()
        )));
    }
    let shape = u[0].shape();
    let mut pairs = Vec::new();
    for (a, b) in u.iter().zip(y) {
        a.ensure_same_shape(b, "kernel update")?;
        if a.shape() != shape {
            return Err(GcmError::Shape("kernel update channels differ in size".into()));
        }
        if a.domain() != b.domain() {
            return Err(GcmError::Domain(format!(
                "kernel update pairs {:?} with {:?}",
                a.domain(),
                b.domain()
            )));
        }
        if a.domain() == Domain::Pixel {
            let (ax, ay) = forward_differences(a);
            let (bx, by) = forward_differences(b);
            pairs.push((ax, bx));
            pairs.push((ay, by));
        } else {
            pairs.push((a.clone(), b.clone()));
        }
    }
    Ok(pairs)
}

/// Unconstrained minimiser of `Σ_c ‖u_c⊗k − y_c‖² + η‖k‖²` over full-size
/// periodic kernels, returned as an `h×w` grid with the kernel origin at
/// index (0, 0). Pixel-domain channels are replaced by their two gradient
/// fields; all channel equations are stacked into one normal system.
pub fn kernel_least_squares<T: Real>(
    u: &[ImageGrid<T>],
    y: &[ImageGrid<T>],
    eta: T,
) -> Result<ImageGrid<T>> {
    let pairs = expand_channels(u, y)?;
    let energy: T = pairs.iter().map(|(a, _)| a.norm_sq()).sum();
    if !(energy > T::min_positive_value()) {
        return Err(GcmError::Degenerate(
            "latent signal is zero; the kernel is unidentifiable".into(),
        ));
    }
    if !(eta > T::zero()) || !eta.is_finite() {
        return Err(GcmError::Parameter(format!("eta must be positive, got {eta}")));
    }
    let (h, w) = pairs[0].0.shape();
    let plan = SpectralPlan::new(h, w);
    let mut num = vec![Complex::<T>::zero(); h * w];
    let mut den = vec![eta; h * w];
    for (a, b) in &pairs {
        let ah = plan.forward(a.data());
        let bh = plan.forward(b.data());
        for i in 0..h * w {
            num[i] = num[i] + ah[i].conj() * bh[i];
            den[i] += ah[i].norm_sqr();
        }
    }
    let spec = num.into_iter().zip(den).map(|(n, d)| n / d).collect();
    plan.inverse_grid(spec, Domain::Pixel)
}

/// Crops a `size×size` window from a full periodic kernel, centred at the
/// centroid of its dominant support near the origin.
pub fn crop_kernel<T: Real>(full: &ImageGrid<T>, size: usize) -> Result<Vec<T>> {
    let (cy, cx) = support_center(full, size)?;
    Ok(window_at(full, size, cy, cx))
}

fn support_center<T: Real>(full: &ImageGrid<T>, size: usize) -> Result<(isize, isize)> {
    let (h, w) = full.shape();
    if size.is_multiple_of(2) || size > h || size > w {
        return Err(GcmError::Shape(format!(
            "cannot crop {size}x{size} kernel from {h}x{w} solution"
        )));
    }
    let reach = (size as isize - 1).min(h as isize / 2).min(w as isize / 2);
    let mut peak = T::zero();
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            peak = peak.max(full.get_wrapped(dr, dc));
        }
    }
    let (mut cy, mut cx) = (0isize, 0isize);
    if peak > T::zero() {
        let floor = peak * T::lit(0.1);
        let (mut m, mut my, mut mx) = (T::zero(), T::zero(), T::zero());
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let v = full.get_wrapped(dr, dc);
                if v >= floor {
                    m += v;
                    my += v * T::lit(dr as f64);
                    mx += v * T::lit(dc as f64);
                }
            }
        }
        cy = (my / m).round().to_isize().unwrap_or(0);
        cx = (mx / m).round().to_isize().unwrap_or(0);
    }
    Ok((cy, cx))
}

fn window_at<T: Real>(full: &ImageGrid<T>, size: usize, cy: isize, cx: isize) -> Vec<T> {
    let rad = (size / 2) as isize;
    let mut out = Vec::with_capacity(size * size);
    for i in 0..size as isize {
        for j in 0..size as isize {
            out.push(full.get_wrapped(cy + i - rad, cx + j - rad));
        }
    }
    out
}

/// Kernel estimation step: unconstrained FFT least squares, crop to
/// `size×size` around the support centroid, then exact projection onto the
/// unit simplex. If the projected kernel's centre of mass lies a pixel or
/// more off centre, the window is moved by that offset and projected again.
pub fn kernel_update<T: Real>(
    u: &[ImageGrid<T>],
    y: &[ImageGrid<T>],
    size: usize,
    eta: T,
) -> Result<BlurKernel<T>> {
    if size.is_multiple_of(2) {
        return Err(GcmError::Shape(format!("kernel size must be odd, got {size}")));
    }
    let full = kernel_least_squares(u, y, eta)?;
    let (cy, cx) = support_center(&full, size)?;
    let k = BlurKernel::projected(size, &window_at(&full, size, cy, cx))?;
    let (dy, dx) = k.centroid_offset();
    if dy == 0 && dx == 0 {
        return Ok(k);
    }
    BlurKernel::projected(size, &window_at(&full, size, cy + dy, cx + dx))
}

/// Kernel objective `Σ_c ‖u_c⊗k − y_c‖² + η‖k‖²` (pixel channels expanded to
/// gradients as in [`kernel_update`]).
pub fn kernel_objective<T: Real>(
    u: &[ImageGrid<T>],
    y: &[ImageGrid<T>],
    k: &BlurKernel<T>,
    eta: T,
) -> Result<T> {
    let pairs = expand_channels(u, y)?;
    let (h, w) = pairs[0].0.shape();
    let op = ConvolutionOperator::for_shape(h, w, k.clone())?;
    let mut total = eta * k.weights().iter().map(|&v| v * v).sum::<T>();
    for (a, b) in &pairs {
        total += op.apply(a)?.sub(b).norm_sq();
    }
    Ok(total)
}
