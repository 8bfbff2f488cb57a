//! The generation–correction loop: fidelity warm start, generator proposal,
//! monotone monitor, proximal-gradient correction, and the diagnostics that
//! certify descent and approximate stationarity.

use std::io::Write;

use num_traits::Float;

use crate::energy::{eval_energy, EnergyModel};
use crate::error::{GcmError, Result};
use crate::generator::GeneratorSpec;
use crate::image::ImageGrid;
use crate::scalar::Real;

/// An objective the engine can propagate on: a monitored energy `Ψ`, a
/// closed-form warm start on its fidelity, and a corrector step that maps a
/// monitor variable `v` to `u⁺` with `Ψ(u⁺) ≤ Ψ(v)` whenever `μ·L < 1`.
pub trait Objective<T: Real> {
    fn energy(&self, u: &ImageGrid<T>) -> Result<T>;

    /// `argmin_u f(u) + γ‖u − u_prev‖²`
    fn warm_start(&self, u_prev: &ImageGrid<T>, gamma: T) -> Result<ImageGrid<T>>;

    fn correct(&self, v: &ImageGrid<T>, mu: T) -> Result<ImageGrid<T>>;

    /// Gradient of the smooth part, used for the stationarity certificate.
    fn smooth_gradient(&self, u: &ImageGrid<T>) -> Result<ImageGrid<T>>;

    /// Lipschitz constant of the smooth part's gradient.
    fn lipschitz(&self) -> T;
}

impl<T: Real> Objective<T> for EnergyModel<T> {
    fn energy(&self, u: &ImageGrid<T>) -> Result<T> {
        eval_energy(self, u)
    }

    fn warm_start(&self, u_prev: &ImageGrid<T>, gamma: T) -> Result<ImageGrid<T>> {
        self.fidelity.warm_start(u_prev, gamma)
    }

    /// `prox_φ^μ(v − μ∇f(v))`
    fn correct(&self, v: &ImageGrid<T>, mu: T) -> Result<ImageGrid<T>> {
        let grad = self.fidelity.gradient(v)?;
        self.prior.prox(&v.axpy(-mu, &grad), mu)
    }

    fn smooth_gradient(&self, u: &ImageGrid<T>) -> Result<ImageGrid<T>> {
        self.fidelity.gradient(u)
    }

    fn lipschitz(&self) -> T {
        self.fidelity.lipschitz()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineConfig<T> {
    /// Warm-start proximity weight γ.
    pub gamma: T,
    /// Corrector step size μ, constant across iterations.
    pub mu: T,
    /// Lipschitz bound L used in the step condition `μ < 1/L`.
    pub lipschitz: T,
    /// Iteration budget T.
    pub iterations: usize,
    /// Early stop once `‖u⁺ − v‖ ≤ tolerance`; 0 runs all iterations.
    pub tolerance: T,
}

impl<T: Real> Default for EngineConfig<T> {
    fn default() -> Self {
        Self {
            gamma: T::lit(4e-3),
            mu: T::lit(1e-6),
            lipschitz: T::lit(2.0),
            iterations: 50,
            tolerance: T::zero(),
        }
    }
}

impl<T: Real> EngineConfig<T> {
    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: T| v > T::zero() && v.is_finite();
        if !positive(self.gamma) {
            return Err(GcmError::Parameter(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !positive(self.mu) || !positive(self.lipschitz) {
            return Err(GcmError::Parameter("mu and L must be positive".into()));
        }
        if !(self.mu * self.lipschitz < T::one()) {
            return Err(GcmError::Parameter(format!(
                "step size must satisfy mu < 1/L (mu = {}, L = {})",
                self.mu, self.lipschitz
            )));
        }
        if !(self.tolerance >= T::zero()) {
            return Err(GcmError::Parameter("tolerance must be >= 0".into()));
        }
        Ok(())
    }

    fn validate_for(&self, objective_lipschitz: T) -> Result<()> {
        self.validate()?;
        if !(self.mu * objective_lipschitz < T::one()) {
            return Err(GcmError::Parameter(format!(
                "mu = {} violates mu < 1/L for the objective's L = {}",
                self.mu, objective_lipschitz
            )));
        }
        Ok(())
    }
}

/// One row of the propagation trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord<T> {
    /// Index of the step producing `u^{t+1}`.
    pub t: usize,
    /// `Ψ(u^t)`
    pub psi_prev: T,
    /// `Ψ(ũ^{t+1})`
    pub psi_u_tilde: T,
    /// `Ψ(v^{t+1})`
    pub psi_v: T,
    /// `Ψ(u^{t+1})`
    pub psi_u: T,
    pub accepted: bool,
    /// `‖u^{t+1} − v^{t+1}‖`
    pub residual: T,
    /// `‖(v − u⁺)/μ − (∇f(v) − ∇f(u⁺))‖`
    pub stationarity: T,
}

pub const TRACE_HEADER: &str = "t,psi_u,psi_u_tilde,accepted,residual,stationarity";

/// Iterate, its energy, the last monitor variable and the full trace.
#[derive(Clone, Debug)]
pub struct PropagationState<T: Real> {
    pub u: ImageGrid<T>,
    pub psi: T,
    /// `Ψ(u⁰)`
    pub psi_initial: T,
    /// Monitor variable of the most recent step.
    pub v: Option<ImageGrid<T>>,
    pub trace: Vec<TraceRecord<T>>,
}

impl<T: Real> PropagationState<T> {
    pub fn new<O: Objective<T> + ?Sized>(objective: &O, u: ImageGrid<T>) -> Result<Self> {
        u.check_finite("initial iterate")?;
        let psi = objective.energy(&u)?;
        Ok(Self {
            u,
            psi,
            psi_initial: psi,
            v: None,
            trace: Vec::new(),
        })
    }

    pub fn last_residual(&self) -> Option<T> {
        self.trace.last().map(|r| r.residual)
    }

    pub fn write_trace_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_trace_csv(&self.trace, out)
    }
}

pub fn write_trace_csv<T: Real, W: Write>(trace: &[TraceRecord<T>], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in trace {
        writeln!(
            out,
            "{},{:e},{:e},{},{:e},{:e}",
            r.t,
            r.psi_u,
            r.psi_u_tilde,
            u8::from(r.accepted),
            r.residual,
            r.stationarity
        )?;
    }
    Ok(())
}

fn slack<T: Real>(base: T, psi: T) -> T {
    base * Float::abs(psi).max(T::one())
}

/// One pass of the loop:
/// 1. `u₀ = argmin f(u) + γ‖u − u^t‖²`
/// 2. `ũ = N(u₀)`
/// 3. `v = ũ` if `Ψ(ũ) ≤ Ψ(u^t)`, else `u^t`
/// 4. `u^{t+1} = prox_φ^μ(v − μ∇f(v))`
pub fn gcm_step<T: Real, O: Objective<T> + ?Sized>(
    objective: &O,
    generator: &GeneratorSpec<T>,
    cfg: &EngineConfig<T>,
    state: PropagationState<T>,
) -> Result<PropagationState<T>> {
    cfg.validate_for(objective.lipschitz())?;
    let PropagationState {
        u,
        psi,
        psi_initial,
        mut trace,
        ..
    } = state;

    let u0 = objective.warm_start(&u, cfg.gamma)?;
    let proposal = generator.generate(&u0)?;
    proposal.ensure_same_shape(&u, "generator output")?;
    let psi_tilde = match objective.energy(&proposal) {
        Ok(v) => v,
        // an overflowing proposal can never pass the monitor
        Err(GcmError::Numeric(_)) => T::infinity(),
        Err(e) => return Err(e),
    };

    let accepted = psi_tilde <= psi + T::monitor_slack();
    let (v, psi_v) = if accepted { (proposal, psi_tilde) } else { (u, psi) };

    let next = objective.correct(&v, cfg.mu)?;
    next.check_finite("corrector output")?;
    let psi_next = objective.energy(&next)?;

    if psi_next > psi_v + slack(T::invariant_slack(), psi_v) || psi_v > psi + slack(T::invariant_slack(), psi) {
        return Err(GcmError::Invariant(format!(
            "step {}: Ψ(u⁺) = {psi_next:e}, Ψ(v) = {psi_v:e}, Ψ(u) = {psi:e}",
            trace.len()
        )));
    }

    let residual = next.distance(&v);
    let stationarity = stationarity_between(objective, &v, &next, cfg.mu)?;
    trace.push(TraceRecord {
        t: trace.len(),
        psi_prev: psi,
        psi_u_tilde: psi_tilde,
        psi_v,
        psi_u: psi_next,
        accepted,
        residual,
        stationarity,
    });
    Ok(PropagationState {
        u: next,
        psi: psi_next,
        psi_initial,
        v: Some(v),
        trace,
    })
}

/// Runs up to `cfg.iterations` steps from `u_init`, stopping early once the
/// corrector residual drops to `cfg.tolerance` (when positive).
pub fn run_gcm<T: Real, O: Objective<T> + ?Sized>(
    objective: &O,
    generator: &GeneratorSpec<T>,
    cfg: &EngineConfig<T>,
    u_init: ImageGrid<T>,
) -> Result<PropagationState<T>> {
    cfg.validate_for(objective.lipschitz())?;
    let state = PropagationState::new(objective, u_init)?;
    continue_gcm(objective, generator, cfg, state)
}

/// Continues an existing state for another `cfg.iterations` steps.
pub fn continue_gcm<T: Real, O: Objective<T> + ?Sized>(
    objective: &O,
    generator: &GeneratorSpec<T>,
    cfg: &EngineConfig<T>,
    mut state: PropagationState<T>,
) -> Result<PropagationState<T>> {
    for _ in 0..cfg.iterations {
        state = gcm_step(objective, generator, cfg, state)?;
        if cfg.tolerance > T::zero() && state.last_residual().is_some_and(|r| r <= cfg.tolerance) {
            break;
        }
    }
    Ok(state)
}

fn stationarity_between<T: Real, O: Objective<T> + ?Sized>(
    objective: &O,
    v: &ImageGrid<T>,
    u: &ImageGrid<T>,
    mu: T,
) -> Result<T> {
    let gv = objective.smooth_gradient(v)?;
    let gu = objective.smooth_gradient(u)?;
    let inv_mu = T::one() / mu;
    let (a, b, c, d) = (v.data(), u.data(), gv.data(), gu.data());
    let sq: T = (0..a.len())
        .map(|i| {
            let e = (a[i] - b[i]) * inv_mu - (c[i] - d[i]);
            e * e
        })
        .sum();
    Ok(sq.sqrt())
}

/// `‖(v − u)/μ + ∇f(u) − ∇f(v)‖` at the latest iterate: the norm of an
/// element of `∂Ψ(u)`, bounded by `(L + 1/μ)‖u − v‖`. Zero before any step.
pub fn stationarity_residual<T: Real, O: Objective<T> + ?Sized>(
    objective: &O,
    state: &PropagationState<T>,
    mu: T,
) -> Result<T> {
    match &state.v {
        None => Ok(T::zero()),
        Some(v) => stationarity_between(objective, v, &state.u, mu),
    }
}
