//! Proposal maps `ũ = N(u₀)` fed by the warm start.
//!
//! No accuracy is assumed of any generator; the engine's monitor makes the
//! overall propagation monotone regardless of what is proposed here.

mod network;
mod shock;

use std::path::Path;

pub use network::{Activation, ConvLayer, Network, Normalization, WEIGHT_MAGIC, WEIGHT_VERSION};
pub use shock::shock_filter;

use crate::error::{GcmError, Result};
use crate::image::ImageGrid;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub enum GeneratorSpec<T> {
    Identity,
    /// Explicit-Euler shock filter sharpening.
    Shock { iterations: usize, dt: T },
    Network(Network<T>),
}

impl<T: Real> GeneratorSpec<T> {
    /// Shock generator with the settings used by the deblurring defaults.
    pub fn shock() -> Self {
        GeneratorSpec::Shock {
            iterations: 5,
            dt: T::lit(0.25),
        }
    }

    /// Applies the proposal map. Shape and domain tag are preserved; a
    /// non-finite output is reported, never clamped.
    pub fn generate(&self, u0: &ImageGrid<T>) -> Result<ImageGrid<T>> {
        u0.check_finite("generator input")?;
        let out = match self {
            GeneratorSpec::Identity => return Ok(u0.clone()),
            GeneratorSpec::Shock { iterations, dt } => shock_filter(u0, *iterations, *dt)?,
            GeneratorSpec::Network(net) => net.forward(u0)?,
        };
        out.check_finite("generator output")?;
        debug_assert_eq!(out.shape(), u0.shape());
        Ok(out.with_domain(u0.domain()))
    }
}

/// Reads a network weight file.
pub fn load_generator<T: Real>(path: impl AsRef<Path>) -> Result<GeneratorSpec<T>> {
    let bytes = std::fs::read(path)?;
    Ok(GeneratorSpec::Network(Network::from_bytes(&bytes)?))
}

/// Writes a network generator to a weight file.
pub fn save_generator<T: Real>(spec: &GeneratorSpec<T>, path: impl AsRef<Path>) -> Result<()> {
    match spec {
        GeneratorSpec::Network(net) => Ok(std::fs::write(path, net.to_bytes())?),
        _ => Err(GcmError::Spec("only network generators have a weight file".into())),
    }
}

pub fn generate<T: Real>(spec: &GeneratorSpec<T>, u0: &ImageGrid<T>) -> Result<ImageGrid<T>> {
    spec.generate(u0)
}
