//! Blur kernels: odd square supports with weights on the unit simplex.

use std::fmt::Write as _;

use num_traits::Float;

use crate::error::{GcmError, Result};
use crate::image::{Domain, ImageGrid};
use crate::scalar::Real;
use crate::simplex::project_simplex;

#[derive(Clone, Debug, PartialEq)]
pub struct BlurKernel<T> {
    size: usize,
    weights: Vec<T>,
}

impl<T: Real> BlurKernel<T> {
    /// Validates oddness, nonnegativity and unit mass.
    pub fn new(size: usize, weights: Vec<T>) -> Result<Self> {
        if size == 0 || size.is_multiple_of(2) {
            return Err(GcmError::Shape(format!("kernel size must be odd, got {size}")));
        }
        if weights.len() != size * size {
            return Err(GcmError::Shape(format!(
                "{size}x{size} kernel needs {} weights, got {}",
                size * size,
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < T::zero()) {
            return Err(GcmError::Parameter(format!(
                "kernel weights must be finite and nonnegative, found {w}"
            )));
        }
        let sum: T = weights.iter().copied().sum();
        if Float::abs(sum - T::one()) > T::simplex_tol(weights.len()) {
            return Err(GcmError::Parameter(format!(
                "kernel weights must sum to 1, got {sum}"
            )));
        }
        Ok(Self { size, weights })
    }

    /// Projects arbitrary finite weights onto the simplex.
    pub fn projected(size: usize, weights: &[T]) -> Result<Self> {
        Self::new(size, project_simplex(weights)?)
    }

    /// Centered unit impulse.
    pub fn delta(size: usize) -> Self {
        assert!(size % 2 == 1, "kernel size must be odd");
        let mut weights = vec![T::zero(); size * size];
        weights[size * size / 2] = T::one();
        Self { size, weights }
    }

    pub fn uniform(size: usize) -> Self {
        assert!(size % 2 == 1, "kernel size must be odd");
        let n = size * size;
        Self {
            size,
            weights: vec![T::one() / T::count(n); n],
        }
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn radius(&self) -> usize {
        self.size / 2
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.weights[row * self.size + col]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn center_weight(&self) -> T {
        self.weights[self.size * self.size / 2]
    }

    pub fn max_weight(&self) -> T {
        self.weights.iter().fold(T::zero(), |m, &w| m.max(w))
    }

    /// Rounded offset `(row, col)` of the centre of mass from the centre tap.
    pub fn centroid_offset(&self) -> (isize, isize) {
        let rad = self.radius() as f64;
        let (mut my, mut mx) = (0.0, 0.0);
        for r in 0..self.size {
            for c in 0..self.size {
                let v = self.get(r, c).to_f64_lossy();
                my += v * (r as f64 - rad);
                mx += v * (c as f64 - rad);
            }
        }
        (my.round() as isize, mx.round() as isize)
    }

    /// 180° rotation of the support.
    pub fn flip(&self) -> Self {
        Self {
            size: self.size,
            weights: self.weights.iter().rev().copied().collect(),
        }
    }

    /// Zero-pads symmetrically to a larger odd size.
    pub fn pad_to(&self, size: usize) -> Result<Self> {
        if size < self.size || size.is_multiple_of(2) {
            return Err(GcmError::Shape(format!(
                "cannot pad {}x{0} kernel to {size}x{size}",
                self.size
            )));
        }
        let off = (size - self.size) / 2;
        let mut weights = vec![T::zero(); size * size];
        for r in 0..self.size {
            for c in 0..self.size {
                weights[(r + off) * size + c + off] = self.get(r, c);
            }
        }
        Ok(Self { size, weights })
    }

    /// Bilinear resampling to another odd size, followed by re-projection
    /// onto the simplex.
    pub fn resize(&self, size: usize) -> Result<Self> {
        if size.is_multiple_of(2) || size == 0 {
            return Err(GcmError::Shape(format!("kernel size must be odd, got {size}")));
        }
        if size == self.size {
            return Ok(self.clone());
        }
        let resized = self.as_grid().resize_bilinear(size, size);
        let clipped: Vec<T> = resized.data().iter().map(|&w| w.max(T::zero())).collect();
        Self::projected(size, &clipped)
    }

    pub fn as_grid(&self) -> ImageGrid<T> {
        ImageGrid::from_parts(self.size, self.size, self.weights.clone(), Domain::Pixel)
    }

    /// Text form: a `"h w"` line followed by `h` rows of `w` decimals.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.size, self.size);
        for r in 0..self.size {
            let row: Vec<String> = (0..self.size)
                .map(|c| format!("{:e}", self.get(r, c)))
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    /// Parses the text form. Weights must be nonnegative with positive sum;
    /// they are renormalised to unit mass.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| GcmError::Format("empty kernel file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| GcmError::Format(format!("bad kernel header {header:?}: {e}")))?;
        let [h, w] = dims[..] else {
            return Err(GcmError::Format(format!(
                "kernel header must be \"h w\", got {header:?}"
            )));
        };
        if h != w || h % 2 == 0 {
            return Err(GcmError::Format(format!(
                "kernel must be square with odd size, got {h}x{w}"
            )));
        }
        let mut weights = Vec::with_capacity(h * w);
        for (r, line) in lines.by_ref().take(h).enumerate() {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| GcmError::Format(format!("kernel row {r}: {e}")))?;
            if row.len() != w {
                return Err(GcmError::Format(format!(
                    "kernel row {r} has {} values, expected {w}",
                    row.len()
                )));
            }
            weights.extend(row);
        }
        if weights.len() != h * w {
            return Err(GcmError::Format(format!(
                "kernel file truncated: {} of {} values",
                weights.len(),
                h * w
            )));
        }
        if weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(GcmError::Format("kernel weights must be finite and >= 0".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(GcmError::Format("kernel weights sum to zero".into()));
        }
        Self::new(h, weights.iter().map(|&v| T::lit(v / sum)).collect())
            .or_else(|_| Self::projected(h, &weights.iter().map(|&v| T::lit(v / sum)).collect::<Vec<_>>()))
    }

    /// Converts to another precision, re-projecting to absorb rounding.
    pub fn cast<U: Real>(&self) -> BlurKernel<U> {
        let w: Vec<U> = self.weights.iter().map(|&v| U::lit(v.to_f64_lossy())).collect();
        BlurKernel::new(self.size, w.clone())
            .unwrap_or_else(|_| BlurKernel::projected(self.size, &w).expect("finite weights"))
    }
}
