//! Interpolation of missing pixels and edge-preserving ℓ₀ smoothing, both as
//! engine runs over a gradient-domain prior.

use crate::energy::{Exponent, Fidelity, Prior};
use crate::engine::{continue_gcm, run_gcm, EngineConfig, PropagationState, TraceRecord};
use crate::error::{GcmError, Result};
use crate::generator::GeneratorSpec;
use crate::image::{Domain, ImageGrid};
use crate::lifted::{Coupling, GradientPriorModel};
use crate::scalar::Real;
use crate::synth::random_mask;

#[derive(Clone, Debug, PartialEq)]
pub enum MaskSpec<T> {
    RandomMissing { fraction: f64, seed: u64 },
    /// Glyph tiled over the image; set glyph pixels are missing.
    TextOverlay(ImageGrid<T>),
    /// Explicit mask: 1 observed, 0 missing.
    File(ImageGrid<T>),
}

impl<T: Real> MaskSpec<T> {
    /// Binary mask of the given shape.
    pub fn realize(&self, h: usize, w: usize) -> Result<ImageGrid<T>> {
        let m = match self {
            MaskSpec::RandomMissing { fraction, seed } => random_mask(h, w, *fraction, *seed)?,
            MaskSpec::TextOverlay(glyph) => {
                let (gh, gw) = glyph.shape();
                ImageGrid::from_fn(h, w, Domain::Pixel, |r, c| {
                    if glyph.get(r % gh, c % gw) > T::lit(0.5) {
                        T::zero()
                    } else {
                        T::one()
                    }
                })
            }
            MaskSpec::File(m) => {
                if m.shape() != (h, w) {
                    return Err(GcmError::Mask(format!(
                        "mask is {:?}, image is {:?}",
                        m.shape(),
                        (h, w)
                    )));
                }
                m.clone().with_domain(Domain::Pixel)
            }
        };
        if m.data().iter().any(|&v| v != T::zero() && v != T::one()) {
            return Err(GcmError::Mask("mask entries must be 0 or 1".into()));
        }
        if m.data().iter().all(|&v| v == T::zero()) {
            return Err(GcmError::Mask("mask has no observed pixel".into()));
        }
        Ok(m)
    }
}

/// Image plus the engine traces that produced it (one per run).
#[derive(Clone, Debug)]
pub struct Restoration<T: Real> {
    pub image: ImageGrid<T>,
    pub traces: Vec<Vec<TraceRecord<T>>>,
}

#[derive(Clone, Copy, Debug)]
pub struct InterpConfig<T> {
    pub engine: EngineConfig<T>,
    pub exponent: Exponent,
    pub lambda: T,
    pub beta: T,
}

impl<T: Real> Default for InterpConfig<T> {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default().with_iterations(30),
            exponent: Exponent::One,
            lambda: T::lit(1e-2),
            beta: T::lit(2e-2),
        }
    }
}

/// Fills missing pixels: masked fidelity, isotropic gradient prior,
/// initialized at the zero-filled observation.
pub fn interpolate<T: Real>(
    y_masked: &ImageGrid<T>,
    mask: &MaskSpec<T>,
    generator: &GeneratorSpec<T>,
    cfg: &InterpConfig<T>,
) -> Result<Restoration<T>> {
    let (h, w) = y_masked.shape();
    let m = mask.realize(h, w)?;
    let y = y_masked.clone().with_domain(Domain::Pixel);
    let model = GradientPriorModel::new(
        Fidelity::masked(m, y.clone())?,
        Prior::new(cfg.exponent, cfg.lambda)?,
        cfg.beta,
        Coupling::Isotropic,
    )?;
    let init = model.fidelity.target().clone();
    let state = run_gcm(&model, generator, &cfg.engine, init)?;
    Ok(Restoration {
        image: state.u.clamp01(),
        traces: vec![state.trace],
    })
}

#[derive(Clone, Copy, Debug)]
pub struct SmoothConfig<T> {
    /// Engine settings per β stage; `iterations` is the per-stage count.
    pub engine: EngineConfig<T>,
    /// First β is `beta0_factor·λ₀`.
    pub beta0_factor: T,
    pub beta_max: T,
    pub kappa: T,
}

impl<T: Real> Default for SmoothConfig<T> {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default().with_iterations(2),
            beta0_factor: T::lit(2.0),
            beta_max: T::lit(1e5),
            kappa: T::lit(2.0),
        }
    }
}

/// ℓ₀ gradient smoothing: identity fidelity and a count penalty `λ₀` on the
/// per-pixel gradient magnitude. β grows geometrically from `2λ₀` to
/// `beta_max`; each stage is its own monotone engine run continuing from the
/// previous iterate.
pub fn smooth<T: Real>(
    y: &ImageGrid<T>,
    lambda0: T,
    generator: &GeneratorSpec<T>,
    cfg: &SmoothConfig<T>,
) -> Result<Restoration<T>> {
    if !(lambda0 >= T::zero()) || !lambda0.is_finite() {
        return Err(GcmError::Parameter(format!("lambda0 must be >= 0, got {lambda0}")));
    }
    if !(cfg.kappa > T::one()) || !(cfg.beta0_factor > T::zero()) {
        return Err(GcmError::Parameter("smoothing needs kappa > 1 and beta0_factor > 0".into()));
    }
    let y = y.clone().with_domain(Domain::Pixel);
    if lambda0 == T::zero() {
        return Ok(Restoration { image: y, traces: Vec::new() });
    }
    let base = GradientPriorModel::new(
        Fidelity::identity(y.clone()),
        Prior::new(Exponent::Zero, lambda0)?,
        cfg.beta0_factor * lambda0,
        Coupling::Isotropic,
    )?;
    let mut beta = base.beta;
    let mut u = y;
    let mut traces = Vec::new();
    loop {
        let model = base.with_beta(beta)?;
        let state = PropagationState::new(&model, u)?;
        let state = continue_gcm(&model, generator, &cfg.engine, state)?;
        u = state.u;
        traces.push(state.trace);
        if beta >= cfg.beta_max {
            break;
        }
        beta = (beta * cfg.kappa).min(cfg.beta_max);
    }
    Ok(Restoration { image: u, traces })
}
