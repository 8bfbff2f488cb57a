//! Blind deblurring: coarse-to-fine alternation of gradient-domain
//! propagation and kernel estimation, followed by a non-blind solve.

use std::sync::Arc;

use crate::apps::Restoration;
use crate::energy::{EnergyModel, Exponent, Fidelity, Prior};
use crate::engine::{run_gcm, EngineConfig, PropagationState, TraceRecord};
use crate::error::{GcmError, Result};
use crate::generator::GeneratorSpec;
use crate::image::{edge_taper, gradient_fields, Domain, ImageGrid};
use crate::kernel::BlurKernel;
use crate::lifted::{Coupling, GradientPriorModel};
use crate::scalar::Real;
use crate::spectral::{kernel_update, SpectralPlan};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PyramidLevel {
    pub scale: f64,
    pub kernel_size: usize,
    pub inner_t: usize,
    pub outer_iters: usize,
}

/// Levels ordered coarse to fine; the last has scale 1.
#[derive(Clone, Debug, PartialEq)]
pub struct PyramidSchedule {
    pub levels: Vec<PyramidLevel>,
}

/// Smallest odd integer ≥ max(x, 3).
fn ceil_odd(x: f64) -> usize {
    let c = (x - 1e-9).ceil().max(3.0) as usize;
    if c.is_multiple_of(2) {
        c + 1
    } else {
        c
    }
}

impl PyramidSchedule {
    /// `n` = smallest level count with `kernel_size·step^{n−1} ≤ 3`; level `i`
    /// (from the finest) has scale `step^i` and kernel size rounded up to odd.
    pub fn new(kernel_size: usize, scale_step: f64, inner_t: usize, outer_iters: usize) -> Result<Self> {
        if kernel_size < 3 || kernel_size.is_multiple_of(2) {
            return Err(GcmError::Shape(format!("kernel size must be odd and >= 3, got {kernel_size}")));
        }
        if !(scale_step > 0.0 && scale_step < 1.0) {
            return Err(GcmError::Parameter(format!("scale step must lie in (0, 1), got {scale_step}")));
        }
        let mut n = 1;
        while kernel_size as f64 * scale_step.powi(n - 1) > 3.0 + 1e-12 {
            n += 1;
        }
        let levels = (0..n)
            .rev()
            .map(|i| {
                let scale = scale_step.powi(i);
                let kernel_size = if i == 0 { kernel_size } else { ceil_odd(kernel_size as f64 * scale) };
                PyramidLevel { scale, kernel_size, inner_t, outer_iters }
            })
            .collect();
        Ok(Self { levels })
    }

    /// Keeps only the `n` finest levels.
    pub fn truncated(mut self, n: usize) -> Self {
        let drop = self.levels.len().saturating_sub(n.max(1));
        self.levels.drain(..drop);
        self
    }

    pub fn kernel_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.kernel_size).collect()
    }
}

/// Schedule plus one bilinear-downsampled observation per level.
pub fn build_pyramid<T: Real>(
    y: &ImageGrid<T>,
    kernel_size: usize,
    scale_step: f64,
) -> Result<(PyramidSchedule, Vec<ImageGrid<T>>)> {
    let defaults = DeblurConfig::<T>::default();
    let schedule = PyramidSchedule::new(kernel_size, scale_step, defaults.inner_t, defaults.outer_iters)?;
    let obs = observations(y, &schedule)?;
    Ok((schedule, obs))
}

fn observations<T: Real>(y: &ImageGrid<T>, schedule: &PyramidSchedule) -> Result<Vec<ImageGrid<T>>> {
    let (h, w) = y.shape();
    let finest = schedule.levels.last().expect("at least one level").kernel_size;
    if h < 2 * finest || w < 2 * finest {
        return Err(GcmError::Shape(format!(
            "{h}x{w} image is smaller than twice the {finest}x{finest} kernel"
        )));
    }
    schedule
        .levels
        .iter()
        .map(|l| {
            if l.scale == 1.0 {
                return Ok(y.clone());
            }
            let lh = ((h as f64 * l.scale).round() as usize).max(l.kernel_size);
            let lw = ((w as f64 * l.scale).round() as usize).max(l.kernel_size);
            Ok(y.resize_bilinear(lh, lw))
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
pub struct NonblindConfig<T> {
    pub engine: EngineConfig<T>,
    /// Weight of the ℓ₀.₈ penalty on gradients.
    pub lambda: T,
    pub beta: T,
}

impl<T: Real> Default for NonblindConfig<T> {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default().with_iterations(30),
            lambda: T::lit(3e-4),
            beta: T::lit(1e-2),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DeblurConfig<T> {
    pub kernel_size: usize,
    pub scale_step: f64,
    /// Cap on the number of pyramid levels (finest kept).
    pub max_levels: Option<usize>,
    /// Engine settings for the gradient-domain runs; `iterations` is ignored
    /// in favour of `inner_t`.
    pub engine: EngineConfig<T>,
    pub inner_t: usize,
    pub outer_iters: usize,
    /// Weight of the ℓ₀.₈ prior on gradient channels.
    pub lambda: T,
    /// Kernel regularizer relative to the latent gradient energy.
    pub eta_rel: T,
    /// Blend the borders before the final non-blind solve.
    pub taper: bool,
    pub nonblind: NonblindConfig<T>,
}

impl<T: Real> Default for DeblurConfig<T> {
    fn default() -> Self {
        Self {
            kernel_size: 15,
            scale_step: std::f64::consts::FRAC_1_SQRT_2,
            max_levels: None,
            engine: EngineConfig {
                mu: T::lit(0.4),
                ..EngineConfig::default()
            },
            inner_t: 20,
            outer_iters: 10,
            lambda: T::lit(3e-2),
            eta_rel: T::lit(1e-3),
            taper: false,
            nonblind: NonblindConfig::default(),
        }
    }
}

/// Trace of one gradient channel over one outer iteration.
#[derive(Clone, Debug)]
pub struct ChannelTrace<T> {
    pub level: usize,
    pub outer: usize,
    pub domain: Domain,
    pub records: Vec<TraceRecord<T>>,
}

#[derive(Clone, Debug)]
pub struct DeblurResult<T: Real> {
    pub kernel: BlurKernel<T>,
    pub latent: ImageGrid<T>,
    pub schedule: PyramidSchedule,
    pub level_traces: Vec<ChannelTrace<T>>,
    pub nonblind_trace: Vec<TraceRecord<T>>,
    /// Set when the estimate collapsed onto (nearly) a single tap.
    pub degenerate: bool,
}

fn channel_run<T: Real>(
    plan: &Arc<SpectralPlan<T>>,
    k: &BlurKernel<T>,
    y: &ImageGrid<T>,
    u: ImageGrid<T>,
    prior: Prior<T>,
    generator: &GeneratorSpec<T>,
    cfg: &EngineConfig<T>,
) -> Result<PropagationState<T>> {
    let fid = Fidelity::deconv_with_plan(plan.clone(), k.clone(), y.clone())?;
    run_gcm(&EnergyModel::new(fid, prior), generator, cfg, u)
}

/// Estimates kernel and latent image from a single blurred observation.
pub fn deblur<T: Real>(
    y: &ImageGrid<T>,
    cfg: &DeblurConfig<T>,
    generator: &GeneratorSpec<T>,
) -> Result<DeblurResult<T>> {
    if y.domain() != Domain::Pixel {
        return Err(GcmError::Domain("deblur expects a pixel-domain observation".into()));
    }
    y.check_finite("observation")?;
    let mut schedule = PyramidSchedule::new(cfg.kernel_size, cfg.scale_step, cfg.inner_t, cfg.outer_iters)?;
    if let Some(n) = cfg.max_levels {
        schedule = schedule.truncated(n);
    }
    let obs = observations(y, &schedule)?;
    let engine = EngineConfig { iterations: cfg.inner_t, ..cfg.engine };
    engine.validate()?;
    let prior = Prior::new(Exponent::FourFifths, cfg.lambda)?;

    let mut k = BlurKernel::uniform(3);
    let mut traces = Vec::new();
    for (level, (spec, y_l)) in schedule.levels.iter().zip(&obs).enumerate() {
        if k.size() != spec.kernel_size {
            k = k.resize(spec.kernel_size)?;
        }
        let (yx, yy) = gradient_fields(y_l)?;
        let plan = Arc::new(SpectralPlan::new(y_l.height(), y_l.width()));
        let (mut ux, mut uy) = (yx.clone(), yy.clone());
        for outer in 0..spec.outer_iters {
            let (sx, sy) = rayon::join(
                || channel_run(&plan, &k, &yx, ux.clone(), prior, generator, &engine),
                || channel_run(&plan, &k, &yy, uy.clone(), prior, generator, &engine),
            );
            let (sx, sy) = (sx?, sy?);
            ux = sx.u;
            uy = sy.u;
            traces.push(ChannelTrace { level, outer, domain: Domain::GradX, records: sx.trace });
            traces.push(ChannelTrace { level, outer, domain: Domain::GradY, records: sy.trace });
            let eta = cfg.eta_rel * (ux.norm_sq() + uy.norm_sq());
            k = kernel_update(&[ux.clone(), uy.clone()], &[yx.clone(), yy.clone()], spec.kernel_size, eta)?;
        }
    }

    let observed = if cfg.taper { edge_taper(y, &k)? } else { y.clone() };
    let nb = nonblind_deconv(&observed, &k, &cfg.nonblind)?;
    let degenerate = k.max_weight() >= T::lit(0.99);
    Ok(DeblurResult {
        kernel: k,
        latent: nb.image,
        schedule,
        level_traces: traces,
        nonblind_trace: nb.traces.into_iter().next().unwrap_or_default(),
        degenerate,
    })
}

/// Non-blind deconvolution with a known kernel: deconvolution fidelity and an
/// ℓ₀.₈ penalty on image gradients, identity generator, output clamped.
pub fn nonblind_deconv<T: Real>(
    y: &ImageGrid<T>,
    k: &BlurKernel<T>,
    cfg: &NonblindConfig<T>,
) -> Result<Restoration<T>> {
    if y.domain() != Domain::Pixel {
        return Err(GcmError::Domain("non-blind deconvolution expects a pixel-domain image".into()));
    }
    let model = GradientPriorModel::new(
        Fidelity::deconv(k.clone(), y.clone())?,
        Prior::new(Exponent::FourFifths, cfg.lambda)?,
        cfg.beta,
        Coupling::Anisotropic,
    )?;
    let state = run_gcm(&model, &GeneratorSpec::Identity, &cfg.engine, y.clone())?;
    Ok(Restoration {
        image: state.u.clamp01(),
        traces: vec![state.trace],
    })
}
