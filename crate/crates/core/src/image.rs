//! Two-dimensional scalar fields, boundary handling and the spatial operators
//! (convolution, forward differences, tapering) every solver builds on.

use std::ops::Index;

use num_traits::Float;

use crate::error::{GcmError, Result};
use crate::kernel::BlurKernel;
use crate::scalar::Real;

/// What a grid's samples represent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Pixel,
    GradX,
    GradY,
}

impl Domain {
    pub fn is_gradient(self) -> bool {
        !matches!(self, Domain::Pixel)
    }
}

/// Boundary extension used by spatial convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Circular wrap; the operator is block-circulant and diagonalised by the DFT.
    #[default]
    Periodic,
    /// Edge samples repeated outward. Display-quality output only.
    Replicate,
}

/// Row-major 2-D field of finite scalars with a domain tag.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
    domain: Domain,
}

impl<T: Real> ImageGrid<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>, domain: Domain) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(GcmError::Shape(format!(
                "grid dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(GcmError::Shape(format!(
                "{height}x{width} grid needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        let grid = Self {
            height,
            width,
            data,
            domain,
        };
        grid.check_finite("grid construction")?;
        Ok(grid)
    }

    /// Pixel-domain grid.
    pub fn pixel(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        Self::new(height, width, data, Domain::Pixel)
    }

    /// Internal constructor for data produced by operations that already
    /// guarantee shape; finiteness is still checked in debug builds.
    pub(crate) fn from_parts(height: usize, width: usize, data: Vec<T>, domain: Domain) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
            domain,
        }
    }

    pub fn zeros(height: usize, width: usize, domain: Domain) -> Self {
        Self::filled(height, width, T::zero(), domain)
    }

    pub fn filled(height: usize, width: usize, value: T, domain: Domain) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        Self::from_parts(height, width, vec![value; height * width], domain)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        domain: Domain,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::from_parts(height, width, data, domain)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn domain(&self) -> Domain {
        self.domain
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    /// Sample with circular wrap for any signed index.
    #[inline]
    pub fn get_wrapped(&self, row: isize, col: isize) -> T {
        let r = row.rem_euclid(self.height as isize) as usize;
        let c = col.rem_euclid(self.width as isize) as usize;
        self.data[r * self.width + c]
    }

    /// Sample with edge replication for any signed index.
    #[inline]
    pub fn get_clamped(&self, row: isize, col: isize) -> T {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.data[r * self.width + c]
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(GcmError::Numeric(format!(
                "{context}: non-finite value at ({}, {})",
                i / self.width,
                i % self.width
            ))),
        }
    }

    pub fn ensure_same_shape(&self, other: &Self, context: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(GcmError::Shape(format!(
                "{context}: {}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_parts(
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
            self.domain,
        )
    }

    /// Elementwise combination; panics on shape mismatch (internal use with
    /// already-validated operands).
    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.shape(), other.shape(), "zip_map shape mismatch");
        Self::from_parts(
            self.height,
            self.width,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            self.domain,
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    /// `self + s·other`
    pub fn axpy(&self, s: T, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn dot(&self, other: &Self) -> T {
        assert_eq!(self.shape(), other.shape(), "dot shape mismatch");
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    /// Euclidean distance `‖self − other‖`.
    pub fn distance(&self, other: &Self) -> T {
        assert_eq!(self.shape(), other.shape(), "distance shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt()
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::count(self.len())
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, &v| m.max(Float::abs(v)))
    }

    pub fn clamp01(&self) -> Self {
        self.map(|v| v.max(T::zero()).min(T::one()))
    }

    /// Circular shift: output(r, c) = input(r − dr, c − dc).
    pub fn circular_shift(&self, dr: isize, dc: isize) -> Self {
        Self::from_fn(self.height, self.width, self.domain, |r, c| {
            self.get_wrapped(r as isize - dr, c as isize - dc)
        })
    }

    /// Bilinear resampling to `new_h × new_w` with pixel centres aligned.
    pub fn resize_bilinear(&self, new_h: usize, new_w: usize) -> Self {
        let sy = self.height as f64 / new_h as f64;
        let sx = self.width as f64 / new_w as f64;
        let max_r = (self.height - 1) as f64;
        let max_c = (self.width - 1) as f64;
        Self::from_fn(new_h, new_w, self.domain, |r, c| {
            let fy = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, max_r);
            let fx = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, max_c);
            let (r0, c0) = (fy.floor() as usize, fx.floor() as usize);
            let (r1, c1) = ((r0 + 1).min(self.height - 1), (c0 + 1).min(self.width - 1));
            let (ty, tx) = (T::lit(fy - r0 as f64), T::lit(fx - c0 as f64));
            let one = T::one();
            let top = self.get(r0, c0) * (one - tx) + self.get(r0, c1) * tx;
            let bottom = self.get(r1, c0) * (one - tx) + self.get(r1, c1) * tx;
            top * (one - ty) + bottom * ty
        })
    }
}

impl<T> Index<(usize, usize)> for ImageGrid<T> {
    type Output = T;

    fn index(&self, (row, col): (usize, usize)) -> &T {
        &self.data[row * self.width + col]
    }
}

/// Spatial convolution `img ⊗ k` with the kernel anchored at its centre.
pub fn convolve<T: Real>(
    img: &ImageGrid<T>,
    k: &BlurKernel<T>,
    boundary: Boundary,
) -> Result<ImageGrid<T>> {
    let size = k.size();
    if size > img.height() || size > img.width() {
        return Err(GcmError::Shape(format!(
            "{size}x{size} kernel exceeds {}x{} image",
            img.height(),
            img.width()
        )));
    }
    let rad = k.radius() as isize;
    let taps: Vec<(isize, isize, T)> = (0..size)
        .flat_map(|i| (0..size).map(move |j| (i, j)))
        .map(|(i, j)| (i as isize - rad, j as isize - rad, k.get(i, j)))
        .filter(|&(_, _, w)| w != T::zero())
        .collect();
    let sample = match boundary {
        Boundary::Periodic => ImageGrid::get_wrapped,
        Boundary::Replicate => ImageGrid::get_clamped,
    };
    Ok(ImageGrid::from_fn(
        img.height(),
        img.width(),
        img.domain(),
        |r, c| {
            let (r, c) = (r as isize, c as isize);
            taps.iter()
                .map(|&(di, dj, w)| w * sample(img, r - di, c - dj))
                .sum()
        },
    ))
}

/// Forward differences with periodic wrap:
/// `GradX(r, c) = img(r, c+1) − img(r, c)`, `GradY(r, c) = img(r+1, c) − img(r, c)`.
pub fn gradient_fields<T: Real>(img: &ImageGrid<T>) -> Result<(ImageGrid<T>, ImageGrid<T>)> {
    if img.domain() != Domain::Pixel {
        return Err(GcmError::Domain(format!(
            "gradient_fields expects a pixel-domain image, got {:?}",
            img.domain()
        )));
    }
    Ok(forward_differences(img))
}

pub(crate) fn forward_differences<T: Real>(img: &ImageGrid<T>) -> (ImageGrid<T>, ImageGrid<T>) {
    let (h, w) = img.shape();
    let gx = ImageGrid::from_fn(h, w, Domain::GradX, |r, c| {
        img.get(r, (c + 1) % w) - img.get(r, c)
    });
    let gy = ImageGrid::from_fn(h, w, Domain::GradY, |r, c| {
        img.get((r + 1) % h, c) - img.get(r, c)
    });
    (gx, gy)
}

/// Adjoint of [`gradient_fields`]: `Dxᵀ gx + Dyᵀ gy`, returned in the pixel domain.
pub fn gradient_adjoint<T: Real>(gx: &ImageGrid<T>, gy: &ImageGrid<T>) -> Result<ImageGrid<T>> {
    gx.ensure_same_shape(gy, "gradient_adjoint")?;
    let (h, w) = gx.shape();
    Ok(ImageGrid::from_fn(h, w, Domain::Pixel, |r, c| {
        gx.get(r, (c + w - 1) % w) - gx.get(r, c) + gy.get((r + h - 1) % h, c) - gy.get(r, c)
    }))
}

/// Blends a band of width `kernel radius` along the border toward the
/// periodically blurred image, suppressing wrap-around ringing in spectral
/// solves. Pixels at distance ≥ radius from every border are copied verbatim.
pub fn edge_taper<T: Real>(img: &ImageGrid<T>, k: &BlurKernel<T>) -> Result<ImageGrid<T>> {
    if img.domain() != Domain::Pixel {
        return Err(GcmError::Domain("edge_taper expects a pixel-domain image".into()));
    }
    let rad = k.radius();
    if rad == 0 {
        return Ok(img.clone());
    }
    let blurred = convolve(img, k, Boundary::Periodic)?;
    let (h, w) = img.shape();
    let half_pi = T::FRAC_PI_2();
    Ok(ImageGrid::from_fn(h, w, Domain::Pixel, |r, c| {
        let d = r.min(c).min(h - 1 - r).min(w - 1 - c);
        let x = img.get(r, c);
        if d >= rad {
            return x;
        }
        let t = (half_pi * T::count(d + 1) / T::count(rad + 1)).sin();
        let weight = t * t;
        let b = blurred.get(r, c);
        b + weight * (x - b)
    }))
}

/// ITU-R BT.601 luma.
pub fn luminance<T: Real>(
    r: &ImageGrid<T>,
    g: &ImageGrid<T>,
    b: &ImageGrid<T>,
) -> Result<ImageGrid<T>> {
    r.ensure_same_shape(g, "luminance")?;
    r.ensure_same_shape(b, "luminance")?;
    let (wr, wg, wb) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
    let (h, w) = r.shape();
    Ok(ImageGrid::from_fn(h, w, Domain::Pixel, |y, x| {
        wr * r.get(y, x) + wg * g.get(y, x) + wb * b.get(y, x)
    }))
}
