#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod deblur;
pub mod energy;
pub mod engine;
pub mod error;
pub mod generator;
pub mod image;
pub mod io;
pub mod kernel;
pub mod lifted;
pub mod metrics;
pub mod scalar;
pub mod simplex;
pub mod spectral;
pub mod synth;

pub use apps::{interpolate, smooth, InterpConfig, MaskSpec, Restoration, SmoothConfig};
pub use deblur::{deblur, nonblind_deconv, DeblurConfig, DeblurResult, NonblindConfig, PyramidSchedule};
pub use energy::{EnergyModel, Exponent, Fidelity, Prior};
pub use engine::{gcm_step, run_gcm, EngineConfig, Objective, PropagationState, TraceRecord};
pub use error::{GcmError, Result};
pub use generator::GeneratorSpec;
pub use image::{Domain, ImageGrid};
pub use kernel::BlurKernel;
pub use scalar::Real;

pub type Image = ImageGrid<f64>;
pub type Kernel = BlurKernel<f64>;
pub type ImageF32 = ImageGrid<f32>;
pub type KernelF32 = BlurKernel<f32>;
pub type Engine = EngineConfig<f64>;
pub type Generator = GeneratorSpec<f64>;
