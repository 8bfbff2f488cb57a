//! PNG and kernel-file reading and writing.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use crate::error::{GcmError, Result};
use crate::image::{Domain, ImageGrid};
use crate::kernel::BlurKernel;
use crate::scalar::Real;

/// Reads a PNG as a pixel-domain grayscale image on `[0, 1]`. Colour inputs
/// are reduced to BT.601 luma.
pub fn read_png<T: Real>(path: impl AsRef<Path>) -> Result<ImageGrid<T>> {
    let img = image::open(path.as_ref())?;
    from_dynamic(&img)
}

fn from_dynamic<T: Real>(img: &DynamicImage) -> Result<ImageGrid<T>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<T> = if img.color().has_color() {
        img.to_rgb32f()
            .pixels()
            .map(|p| T::lit(0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64))
            .collect()
    } else {
        img.to_luma32f().pixels().map(|p| T::lit(p[0] as f64)).collect()
    };
    Ok(ImageGrid::new(h, w, data, Domain::Pixel)?.clamp01())
}

/// Writes a 16-bit grayscale PNG after clamping to `[0, 1]`.
pub fn write_png<T: Real>(img: &ImageGrid<T>, path: impl AsRef<Path>) -> Result<()> {
    let (h, w) = img.shape();
    let buf: Vec<u16> = img
        .data()
        .iter()
        .map(|&v| (v.to_f64_lossy().clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let out: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, buf).expect("buffer matches dimensions");
    out.save(path.as_ref())?;
    Ok(())
}

/// Reads a binary mask PNG: values ≥ 128 (8-bit scale) are observed.
pub fn read_mask<T: Real>(path: impl AsRef<Path>) -> Result<ImageGrid<T>> {
    let img = image::open(path.as_ref())?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img
        .pixels()
        .map(|p| if p[0] >= 128 { T::one() } else { T::zero() })
        .collect();
    ImageGrid::new(h, w, data, Domain::Pixel)
}

pub fn read_kernel<T: Real>(path: impl AsRef<Path>) -> Result<BlurKernel<T>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    BlurKernel::from_text(&text)
}

pub fn write_kernel<T: Real>(k: &BlurKernel<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), k.to_text())?;
    Ok(())
}

/// Writes a kernel as an image, scaled so its largest weight is white.
pub fn write_kernel_png<T: Real>(k: &BlurKernel<T>, path: impl AsRef<Path>) -> Result<()> {
    let peak = k.max_weight();
    if !(peak > T::zero()) {
        return Err(GcmError::Numeric("kernel has no positive weight".into()));
    }
    write_png(&k.as_grid().scale(T::one() / peak), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::shapes_scene;

    #[test]
    fn png_round_trip_is_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let img = shapes_scene::<f64>(12, 9, 3);
        write_png(&img, &p).unwrap();
        let back: ImageGrid<f64> = read_png(&p).unwrap();
        assert_eq!(back.shape(), (12, 9));
        assert!(img.data().iter().zip(back.data()).all(|(a, b)| (a - b).abs() <= 0.5 / 65535.0 + 1e-9));
    }

    #[test]
    fn mask_and_kernel_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let m = ImageGrid::from_fn(4, 4, Domain::Pixel, |r, c| if (r + c) % 2 == 0 { 1.0 } else { 0.0 });
        write_png(&m, &p).unwrap();
        assert_eq!(read_mask::<f64>(&p).unwrap(), m);

        let k = BlurKernel::<f64>::uniform(3);
        let kp = dir.path().join("k.txt");
        write_kernel(&k, &kp).unwrap();
        let back: BlurKernel<f64> = read_kernel(&kp).unwrap();
        assert!(back.weights().iter().zip(k.weights()).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(read_png::<f64>(dir.path().join("missing.png")).is_err());
    }
}
