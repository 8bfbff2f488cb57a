//! Priors on image gradients through an auxiliary variable.
//!
//! The monitored energy is
//! `Ψ(u) = f(u) + min_g (β/2)‖∇u − g‖² + φ(g)`,
//! where the inner minimum is attained by the exact proximal map of `φ` at
//! `∇u`. The corrector alternates that prox with a quadratic solve for `u`
//! (spectral for identity and deconvolution fidelities, conjugate gradients
//! started from `v` for masks). Both half-steps are exact or monotone
//! minimisations of the same joint function, so `Ψ(u⁺) ≤ Ψ(v)` holds for any
//! step size.

use std::sync::Arc;

use num_complex::Complex;

use crate::energy::{Fidelity, FidelityKind, Prior};
use crate::engine::Objective;
use crate::error::{GcmError, Result};
use crate::image::{forward_differences, gradient_adjoint, Domain, ImageGrid};
use crate::scalar::Real;
use crate::spectral::SpectralPlan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Coupling {
    /// Penalty on the per-pixel gradient magnitude `‖(gx, gy)‖`.
    #[default]
    Isotropic,
    /// Separate penalty on each gradient component.
    Anisotropic,
}

#[derive(Clone, Debug)]
pub struct GradientPriorModel<T: Real> {
    pub fidelity: Fidelity<T>,
    pub prior: Prior<T>,
    pub beta: T,
    pub coupling: Coupling,
    /// Weight `ρ` of an extra `(ρ/2)‖u − v‖²` term in the `u` solve.
    pub damping: T,
    /// Iteration cap for the masked `u` solve.
    pub cg_iterations: usize,
    plan: Arc<SpectralPlan<T>>,
    laplacian: Vec<T>,
}

impl<T: Real> GradientPriorModel<T> {
    pub fn new(fidelity: Fidelity<T>, prior: Prior<T>, beta: T, coupling: Coupling) -> Result<Self> {
        if !(beta > T::zero()) || !beta.is_finite() {
            return Err(GcmError::Parameter(format!("beta must be positive, got {beta}")));
        }
        if fidelity.target().domain() != Domain::Pixel {
            return Err(GcmError::Domain("gradient priors act on pixel-domain images".into()));
        }
        let plan = match fidelity.kind() {
            FidelityKind::Deconv(op) => op.plan().clone(),
            _ => {
                let (h, w) = fidelity.target().shape();
                Arc::new(SpectralPlan::new(h, w))
            }
        };
        let laplacian = plan
            .dx_transfer()
            .iter()
            .zip(plan.dy_transfer())
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .collect();
        Ok(Self {
            fidelity,
            prior,
            beta,
            coupling,
            damping: T::zero(),
            cg_iterations: 500,
            plan,
            laplacian,
        })
    }

    pub fn with_damping(mut self, damping: T) -> Self {
        self.damping = damping;
        self
    }

    /// Copy with a different coupling weight `β`.
    pub fn with_beta(&self, beta: T) -> Result<Self> {
        if !(beta > T::zero()) || !beta.is_finite() {
            return Err(GcmError::Parameter(format!("beta must be positive, got {beta}")));
        }
        let mut m = self.clone();
        m.beta = beta;
        Ok(m)
    }

    /// Optimal auxiliary gradients for `u` and the value of the inner minimum.
    pub fn auxiliary(&self, u: &ImageGrid<T>) -> (ImageGrid<T>, ImageGrid<T>, T) {
        let (dx, dy) = forward_differences(u);
        let step = T::one() / self.beta;
        let half_beta = self.beta * T::lit(0.5);
        let (h, w) = u.shape();
        let mut gx = Vec::with_capacity(h * w);
        let mut gy = Vec::with_capacity(h * w);
        let mut inner = T::zero();
        for (&a, &b) in dx.data().iter().zip(dy.data()) {
            let (x, y, cost) = match self.coupling {
                Coupling::Anisotropic => {
                    let x = self.prior.prox_scalar(a, step);
                    let y = self.prior.prox_scalar(b, step);
                    (x, y, self.prior.penalty(x) + self.prior.penalty(y))
                }
                Coupling::Isotropic => {
                    let mag = (a * a + b * b).sqrt();
                    let shrunk = self.prior.prox_scalar(mag, step);
                    if shrunk == T::zero() || mag == T::zero() {
                        (T::zero(), T::zero(), T::zero())
                    } else {
                        let s = shrunk / mag;
                        (a * s, b * s, self.prior.penalty(shrunk))
                    }
                }
            };
            inner += half_beta * ((a - x) * (a - x) + (b - y) * (b - y)) + cost;
            gx.push(x);
            gy.push(y);
        }
        (
            ImageGrid::from_parts(h, w, gx, Domain::GradX),
            ImageGrid::from_parts(h, w, gy, Domain::GradY),
            inner,
        )
    }

    fn solve_spectral(&self, rhs: &ImageGrid<T>, data_symbol: impl Fn(usize) -> T) -> Result<ImageGrid<T>> {
        let spec = self
            .plan
            .forward_grid(rhs)?
            .into_iter()
            .enumerate()
            .map(|(i, s)| s / (data_symbol(i) + self.damping + self.beta * self.laplacian[i]))
            .collect();
        self.plan.inverse_grid(spec, Domain::Pixel)
    }

    fn apply_masked(&self, m: &ImageGrid<T>, x: &ImageGrid<T>) -> ImageGrid<T> {
        let (dx, dy) = forward_differences(x);
        let lap = gradient_adjoint(&dx, &dy).expect("same shape");
        let (h, w) = x.shape();
        ImageGrid::from_fn(h, w, Domain::Pixel, |r, c| {
            (m.get(r, c) + self.damping) * x.get(r, c) + self.beta * lap.get(r, c)
        })
    }

    /// Conjugate gradients on `(M + ρ + βDᵀD)u = b` from `x0`. Every iterate
    /// lowers the quadratic, so stopping early keeps the descent guarantee.
    fn solve_masked(&self, m: &ImageGrid<T>, b: &ImageGrid<T>, x0: &ImageGrid<T>) -> ImageGrid<T> {
        let mut x = x0.clone().with_domain(Domain::Pixel);
        let mut r = b.sub(&self.apply_masked(m, &x));
        let mut p = r.clone();
        let mut rr = r.norm_sq();
        let stop = b.norm_sq().max(T::min_positive_value()) * T::lit(1e-24);
        for _ in 0..self.cg_iterations {
            if rr <= stop {
                break;
            }
            let ap = self.apply_masked(m, &p);
            let pap = p.dot(&ap);
            if !(pap > T::zero()) {
                break;
            }
            let alpha = rr / pap;
            x = x.axpy(alpha, &p);
            r = r.axpy(-alpha, &ap);
            let rr_next = r.norm_sq();
            p = r.axpy(rr_next / rr, &p);
            rr = rr_next;
        }
        x
    }
}

impl<T: Real> Objective<T> for GradientPriorModel<T> {
    fn energy(&self, u: &ImageGrid<T>) -> Result<T> {
        u.check_finite("energy evaluation")?;
        let value = self.fidelity.evaluate(u)? + self.auxiliary(u).2;
        if !value.is_finite() {
            return Err(GcmError::Numeric(format!("energy overflowed: {value}")));
        }
        Ok(value)
    }

    fn warm_start(&self, u_prev: &ImageGrid<T>, gamma: T) -> Result<ImageGrid<T>> {
        self.fidelity.warm_start(u_prev, gamma)
    }

    /// `g = prox(∇v)`, then `u⁺ = argmin f(u) + (β/2)‖∇u − g‖² + (ρ/2)‖u − v‖²`.
    /// The step `μ` does not enter.
    fn correct(&self, v: &ImageGrid<T>, _mu: T) -> Result<ImageGrid<T>> {
        let v = v.clone().with_domain(Domain::Pixel);
        let (gx, gy, _) = self.auxiliary(&v);
        let coupling = gradient_adjoint(&gx, &gy)?.scale(self.beta);
        let prox_term = v.scale(self.damping);
        let y = self.fidelity.target();
        let out = match self.fidelity.kind() {
            FidelityKind::Identity => {
                self.solve_spectral(&y.add(&coupling).add(&prox_term), |_| T::one())?
            }
            FidelityKind::Deconv(op) => {
                let rhs = op.adjoint(y)?.scale(T::lit(2.0)).add(&coupling).add(&prox_term);
                let t: &[Complex<T>] = op.transfer();
                self.solve_spectral(&rhs, |i| T::lit(2.0) * t[i].norm_sqr())?
            }
            FidelityKind::Masked(m) => {
                let rhs = y.zip_map(m, |a, b| a * b).add(&coupling).add(&prox_term);
                self.solve_masked(m, &rhs, &v)
            }
        };
        Ok(out)
    }

    fn smooth_gradient(&self, u: &ImageGrid<T>) -> Result<ImageGrid<T>> {
        self.fidelity.gradient(u)
    }

    fn lipschitz(&self) -> T {
        self.fidelity.lipschitz()
    }
}
