//! The variational energy `Ψ(u) = f(u) + φ(u)`: data fidelities with their
//! gradients and warm-start solvers, and separable ℓ_p priors with their
//! proximal maps.

use std::sync::Arc;

use num_traits::Float;

use crate::error::{GcmError, Result};
use crate::image::ImageGrid;
use crate::kernel::BlurKernel;
use crate::scalar::Real;
use crate::spectral::{ConvolutionOperator, SpectralPlan};

#[derive(Clone, Debug)]
pub enum FidelityKind<T: Real> {
    /// `‖u⊗k − y‖²` (no ½ factor).
    Deconv(ConvolutionOperator<T>),
    /// `½‖u⊙M − y‖²` with a binary mask.
    Masked(ImageGrid<T>),
    /// `½‖u − y‖²`
    Identity,
}

#[derive(Clone, Debug)]
pub struct Fidelity<T: Real> {
    kind: FidelityKind<T>,
    target: ImageGrid<T>,
}

impl<T: Real> Fidelity<T> {
    pub fn deconv(kernel: BlurKernel<T>, target: ImageGrid<T>) -> Result<Self> {
        let plan = Arc::new(SpectralPlan::new(target.height(), target.width()));
        Self::deconv_with_plan(plan, kernel, target)
    }

    /// Deconvolution fidelity reusing an existing FFT plan of the same shape.
    pub fn deconv_with_plan(
        plan: Arc<SpectralPlan<T>>,
        kernel: BlurKernel<T>,
        target: ImageGrid<T>,
    ) -> Result<Self> {
        if plan.shape() != target.shape() {
            return Err(GcmError::Shape("deconv fidelity: plan and target differ".into()));
        }
        Ok(Self {
            kind: FidelityKind::Deconv(ConvolutionOperator::new(plan, kernel)?),
            target,
        })
    }

    /// Masked fidelity. Target samples at missing positions are zeroed.
    pub fn masked(mask: ImageGrid<T>, target: ImageGrid<T>) -> Result<Self> {
        mask.ensure_same_shape(&target, "masked fidelity")?;
        if mask.data().iter().any(|&m| m != T::zero() && m != T::one()) {
            return Err(GcmError::Mask("mask entries must be 0 or 1".into()));
        }
        let target = target.zip_map(&mask, |y, m| y * m);
        Ok(Self {
            kind: FidelityKind::Masked(mask),
            target,
        })
    }

    pub fn identity(target: ImageGrid<T>) -> Self {
        Self {
            kind: FidelityKind::Identity,
            target,
        }
    }

    pub fn kind(&self) -> &FidelityKind<T> {
        &self.kind
    }

    pub fn target(&self) -> &ImageGrid<T> {
        &self.target
    }

    /// Lipschitz constant of `∇f`: 2 for a simplex kernel under periodic
    /// boundary (`‖K‖ ≤ 1`), 1 for the masked and identity fidelities.
    pub fn lipschitz(&self) -> T {
        match self.kind {
            FidelityKind::Deconv(_) => T::lit(2.0),
            FidelityKind::Masked(_) | FidelityKind::Identity => T::one(),
        }
    }

    fn residual(&self, u: &ImageGrid<T>) -> Result<ImageGrid<T>> {
        u.ensure_same_shape(&self.target, "fidelity")?;
        Ok(match &self.kind {
            FidelityKind::Deconv(op) => op.apply(u)?.sub(&self.target),
            FidelityKind::Masked(m) => u.zip_map(m, |a, b| a * b).sub(&self.target),
            FidelityKind::Identity => u.sub(&self.target),
        })
    }

    pub fn evaluate(&self, u: &ImageGrid<T>) -> Result<T> {
        let r = self.residual(u)?.norm_sq();
        Ok(match self.kind {
            FidelityKind::Deconv(_) => r,
            _ => r * T::lit(0.5),
        })
    }

    /// `∇f(u)`: `2·k̄⊗(u⊗k − y)`, `(u⊙M − y)⊙M`, or `u − y`.
    pub fn gradient(&self, u: &ImageGrid<T>) -> Result<ImageGrid<T>> {
        let r = self.residual(u)?;
        let g = match &self.kind {
            FidelityKind::Deconv(op) => op.adjoint(&r)?.scale(T::lit(2.0)),
            FidelityKind::Masked(m) => r.zip_map(m, |a, b| a * b),
            FidelityKind::Identity => r,
        };
        Ok(g.with_domain(u.domain()))
    }

    /// Closed-form `argmin_u f(u) + γ‖u − u_prev‖²`.
    pub fn warm_start(&self, u_prev: &ImageGrid<T>, gamma: T) -> Result<ImageGrid<T>> {
        if !(gamma > T::zero()) || !gamma.is_finite() {
            return Err(GcmError::Parameter(format!("gamma must be positive, got {gamma}")));
        }
        u_prev.ensure_same_shape(&self.target, "warm start")?;
        let two_gamma = gamma * T::lit(2.0);
        let out = match &self.kind {
            FidelityKind::Deconv(op) => op.warm_start(&self.target, u_prev, gamma)?,
            FidelityKind::Masked(m) => {
                let (h, w) = u_prev.shape();
                ImageGrid::from_fn(h, w, u_prev.domain(), |r, c| {
                    let mk = m.get(r, c);
                    (mk * self.target.get(r, c) + two_gamma * u_prev.get(r, c)) / (mk + two_gamma)
                })
            }
            FidelityKind::Identity => self
                .target
                .axpy(two_gamma, u_prev)
                .scale(T::one() / (T::one() + two_gamma)),
        };
        Ok(out.with_domain(u_prev.domain()))
    }
}

/// Supported prior exponents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exponent {
    /// ℓ₀ (counts nonzeros)
    Zero,
    /// ℓ₀.₈ hyper-Laplacian
    FourFifths,
    /// ℓ₁
    One,
}

impl Exponent {
    pub fn from_value(p: f64) -> Result<Self> {
        match p {
            _ if p == 0.0 => Ok(Exponent::Zero),
            _ if p == 0.8 => Ok(Exponent::FourFifths),
            _ if p == 1.0 => Ok(Exponent::One),
            _ => Err(GcmError::Parameter(format!(
                "prior exponent must be 0, 0.8 or 1, got {p}"
            ))),
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Exponent::Zero => 0.0,
            Exponent::FourFifths => 0.8,
            Exponent::One => 1.0,
        }
    }
}

/// `φ(u) = λ·Σ|uᵢ|^p` with `0⁰ := 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prior<T> {
    pub exponent: Exponent,
    pub lambda: T,
}

impl<T: Real> Prior<T> {
    pub fn new(exponent: Exponent, lambda: T) -> Result<Self> {
        if !(lambda >= T::zero()) || !lambda.is_finite() {
            return Err(GcmError::Parameter(format!(
                "prior weight must be finite and >= 0, got {lambda}"
            )));
        }
        Ok(Self { exponent, lambda })
    }

    /// Per-sample penalty `λ|x|^p`.
    #[inline]
    pub fn penalty(&self, x: T) -> T {
        let a = Float::abs(x);
        match self.exponent {
            Exponent::Zero => {
                if a > T::zero() {
                    self.lambda
                } else {
                    T::zero()
                }
            }
            Exponent::FourFifths => self.lambda * a.powf(T::lit(0.8)),
            Exponent::One => self.lambda * a,
        }
    }

    pub fn evaluate(&self, u: &ImageGrid<T>) -> T {
        u.data().iter().map(|&x| self.penalty(x)).sum()
    }

    /// Scalar proximal map `argmin_x λ|x|^p + (x − z)²/(2μ)`. Where the
    /// scalar problem has two minimisers the smaller magnitude is returned.
    pub fn prox_scalar(&self, z: T, mu: T) -> T {
        let w = self.lambda * mu;
        if w == T::zero() {
            return z;
        }
        let a = Float::abs(z);
        match self.exponent {
            Exponent::One => Float::signum(z) * (a - w).max(T::zero()),
            Exponent::Zero => {
                if z * z > T::lit(2.0) * w {
                    z
                } else {
                    T::zero()
                }
            }
            Exponent::FourFifths => {
                let p = T::lit(0.8);
                if a <= gst_threshold(w, p) {
                    return T::zero();
                }
                let x = gst_root(a, w, p);
                // compare against the origin explicitly; ties go to zero
                let at_root = w * x.powf(p) + (x - a) * (x - a) * T::lit(0.5);
                let at_zero = a * a * T::lit(0.5);
                if at_root < at_zero {
                    Float::signum(z) * x
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn prox(&self, z: &ImageGrid<T>, mu: T) -> Result<ImageGrid<T>> {
        if !(mu > T::zero()) || !mu.is_finite() {
            return Err(GcmError::Parameter(format!("prox step must be positive, got {mu}")));
        }
        Ok(z.map(|v| self.prox_scalar(v, mu)))
    }
}

/// Generalised soft-thresholding threshold for `w|x|^p + ½(x − z)²`:
/// `τ = (2w(1−p))^{1/(2−p)} + w·p·(2w(1−p))^{(p−1)/(2−p)}`.
fn gst_threshold<T: Real>(w: T, p: T) -> T {
    let one = T::one();
    let two = T::lit(2.0);
    let base = two * w * (one - p);
    base.powf(one / (two - p)) + w * p * base.powf((p - one) / (two - p))
}

/// Larger root of `x + w·p·x^{p−1} = a` for `a` above the threshold, by
/// Newton iteration from `x = a`. The left side is convex in `x > 0`, so the
/// iterates decrease monotonically onto the root.
fn gst_root<T: Real>(a: T, w: T, p: T) -> T {
    let one = T::one();
    let tol = T::lit(1e-12);
    let mut x = a;
    for _ in 0..50 {
        let g = x + w * p * x.powf(p - one) - a;
        let dg = one + w * p * (p - one) * x.powf(p - T::lit(2.0));
        if !(dg > T::zero()) {
            break;
        }
        let next = x - g / dg;
        if !(next > T::zero()) {
            break;
        }
        let step = Float::abs(next - x);
        x = next;
        if step <= tol * x.max(one) {
            break;
        }
    }
    x
}

/// Pairing of a fidelity and a prior: `Ψ = f + φ`.
#[derive(Clone, Debug)]
pub struct EnergyModel<T: Real> {
    pub fidelity: Fidelity<T>,
    pub prior: Prior<T>,
}

impl<T: Real> EnergyModel<T> {
    pub fn new(fidelity: Fidelity<T>, prior: Prior<T>) -> Self {
        Self { fidelity, prior }
    }
}

/// `Ψ(u) = f(u) + φ(u)`.
pub fn eval_energy<T: Real>(energy: &EnergyModel<T>, u: &ImageGrid<T>) -> Result<T> {
    u.check_finite("energy evaluation")?;
    let value = energy.fidelity.evaluate(u)? + energy.prior.evaluate(u);
    if !value.is_finite() {
        return Err(GcmError::Numeric(format!("energy overflowed: {value}")));
    }
    Ok(value)
}

pub fn grad_fidelity<T: Real>(fidelity: &Fidelity<T>, u: &ImageGrid<T>) -> Result<ImageGrid<T>> {
    fidelity.gradient(u)
}

pub fn prox<T: Real>(prior: &Prior<T>, z: &ImageGrid<T>, mu: T) -> Result<ImageGrid<T>> {
    prior.prox(z, mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{convolve, Boundary, Domain};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(h: usize, w: usize, rng: &mut ChaCha8Rng) -> ImageGrid<f64> {
        ImageGrid::from_fn(h, w, Domain::Pixel, |_, _| rng.random::<f64>())
    }

    fn random_kernel(size: usize, rng: &mut ChaCha8Rng) -> BlurKernel<f64> {
        let w: Vec<f64> = (0..size * size).map(|_| rng.random::<f64>()).collect();
        let s: f64 = w.iter().sum();
        BlurKernel::new(size, w.iter().map(|v| v / s).collect()).unwrap()
    }

    fn scalar_objective(prior: &Prior<f64>, x: f64, z: f64, mu: f64) -> f64 {
        prior.penalty(x) + (x - z) * (x - z) / (2.0 * mu)
    }

    #[test]
    fn energy_examples() {
        let y = ImageGrid::pixel(1, 2, vec![0.5, -0.5]).unwrap();
        let e = EnergyModel::new(Fidelity::identity(y.clone()), Prior::new(Exponent::One, 0.0).unwrap());
        assert_eq!(eval_energy(&e, &y).unwrap(), 0.0);
        let e = EnergyModel::new(Fidelity::identity(y.clone()), Prior::new(Exponent::One, 2.0).unwrap());
        assert_eq!(eval_energy(&e, &y).unwrap(), 2.0);
    }

    #[test]
    fn deconv_energy_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_grid(8, 8, &mut rng);
        let y = random_grid(8, 8, &mut rng);
        let k = random_kernel(3, &mut rng);
        let e = EnergyModel::new(
            Fidelity::deconv(k.clone(), y.clone()).unwrap(),
            Prior::new(Exponent::FourFifths, 0.3).unwrap(),
        );
        // straightforward summation: explicit periodic convolution loop
        let mut oracle = 0.0;
        for r in 0..8isize {
            for c in 0..8isize {
                let mut acc = 0.0;
                for i in 0..3isize {
                    for j in 0..3isize {
                        acc += k.get(i as usize, j as usize) * u.get_wrapped(r - (i - 1), c - (j - 1));
                    }
                }
                let d = acc - y.get(r as usize, c as usize);
                oracle += d * d;
                oracle += 0.3 * u.get(r as usize, c as usize).abs().powf(0.8);
            }
        }
        assert!((eval_energy(&e, &u).unwrap() - oracle).abs() < 1e-10);
        let bad = ImageGrid::from_fn(8, 8, Domain::Pixel, |_, _| 0.0);
        let mut data = bad.into_data();
        data[3] = f64::NAN;
        assert!(ImageGrid::pixel(8, 8, data).is_err());
    }

    #[test]
    fn gradient_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_grid(6, 6, &mut rng);
        let y = random_grid(6, 6, &mut rng);
        assert_eq!(Fidelity::identity(u.clone()).gradient(&u).unwrap().max_abs(), 0.0);
        let g = Fidelity::deconv(BlurKernel::delta(3), y.clone()).unwrap().gradient(&u).unwrap();
        assert!(g.distance(&u.sub(&y).scale(2.0)) < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_grid(8, 8, &mut rng);
        let y = random_grid(8, 8, &mut rng);
        let mask = ImageGrid::from_fn(8, 8, Domain::Pixel, |_, _| f64::from(u8::from(rng.random_bool(0.6))));
        let fids = [
            Fidelity::deconv(random_kernel(3, &mut rng), y.clone()).unwrap(),
            Fidelity::masked(mask, y.clone()).unwrap(),
            Fidelity::identity(y.clone()),
        ];
        let h = 1e-6;
        for f in &fids {
            let g = f.gradient(&u).unwrap();
            for _ in 0..20 {
                let idx = rng.random_range(0..64);
                let bump = |s: f64| {
                    let mut d = u.data().to_vec();
                    d[idx] += s;
                    ImageGrid::pixel(8, 8, d).unwrap()
                };
                let fd = (f.evaluate(&bump(h)).unwrap() - f.evaluate(&bump(-h)).unwrap()) / (2.0 * h);
                let an = g.data()[idx];
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn deconv_gradient_is_two_lipschitz() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(10 + seed);
            let y = random_grid(8, 8, &mut rng);
            let f = Fidelity::deconv(random_kernel(5, &mut rng), y).unwrap();
            let a = random_grid(8, 8, &mut rng).scale(3.0);
            let b = random_grid(8, 8, &mut rng);
            let lhs = f.gradient(&a).unwrap().distance(&f.gradient(&b).unwrap());
            assert!(lhs <= 2.0 * a.distance(&b) + 1e-12);
        }
    }

    #[test]
    fn warm_start_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = random_grid(5, 5, &mut rng);
        let p = random_grid(5, 5, &mut rng);
        let gamma = 0.3;
        let out = Fidelity::identity(y.clone()).warm_start(&p, gamma).unwrap();
        let expected = y.axpy(2.0 * gamma, &p).scale(1.0 / (1.0 + 2.0 * gamma));
        assert!(out.distance(&expected) < 1e-14);

        let mask = ImageGrid::from_fn(5, 5, Domain::Pixel, |r, c| f64::from(u8::from((r + c) % 2 == 0)));
        let f = Fidelity::masked(mask.clone(), y.clone()).unwrap();
        let out = f.warm_start(&p, gamma).unwrap();
        for r in 0..5 {
            for c in 0..5 {
                if mask.get(r, c) == 0.0 {
                    assert!((out.get(r, c) - p.get(r, c)).abs() < 1e-15);
                } else {
                    let e = (y.get(r, c) + 2.0 * gamma * p.get(r, c)) / (1.0 + 2.0 * gamma);
                    assert!((out.get(r, c) - e).abs() < 1e-15);
                }
            }
        }
        // first-order optimality of the deconv warm start
        let k = random_kernel(3, &mut rng);
        let f = Fidelity::deconv(k.clone(), y.clone()).unwrap();
        let u0 = f.warm_start(&p, gamma).unwrap();
        let opt = f.gradient(&u0).unwrap().axpy(2.0 * gamma, &u0.sub(&p));
        assert!(opt.max_abs() < 1e-10);
        let _ = convolve(&u0, &k, Boundary::Periodic).unwrap();
    }

    #[test]
    fn prox_examples() {
        let l1 = Prior::new(Exponent::One, 1.0).unwrap();
        assert!((l1.prox_scalar(0.5, 0.2) - 0.3).abs() < 1e-15);
        assert_eq!(l1.prox_scalar(-0.1, 0.2), 0.0);
        let l0 = Prior::new(Exponent::Zero, 1.0).unwrap();
        assert_eq!(l0.prox_scalar(1.0, 0.3), 1.0);
        assert_eq!(l0.prox_scalar(0.5, 0.3), 0.0);
        // tie z² = 2λμ resolves to zero
        assert_eq!(l0.prox_scalar(1.0, 0.5), 0.0);
        let z = ImageGrid::pixel(1, 1, vec![1.0]).unwrap();
        assert!(matches!(l1.prox(&z, 0.0), Err(GcmError::Parameter(_))));
    }

    /// Grid search over [−4, 4] at resolution 1e−5.
    fn grid_search(prior: &Prior<f64>, z: f64, mu: f64) -> f64 {
        let n = 800_000;
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=n {
            let x = -4.0 + 8.0 * i as f64 / n as f64;
            let v = scalar_objective(prior, x, z, mu);
            if v < best.0 {
                best = (v, x);
            }
        }
        best.1
    }

    #[test]
    fn l08_prox_matches_grid_search() {
        let prior = Prior::new(Exponent::FourFifths, 1.0).unwrap();
        for z in [0.3, 1.0, 2.5] {
            let x = prior.prox_scalar(z, 0.5);
            let oracle = grid_search(&prior, z, 0.5);
            assert!((x - oracle).abs() <= 2e-5, "z={z}: {x} vs {oracle}");
        }
    }

    proptest! {
        #[test]
        fn prox_is_a_local_and_global_improvement(
            z in -4.0f64..4.0,
            mu in 0.01f64..2.0,
            lambda in 0.0f64..2.0,
            p in prop::sample::select(vec![Exponent::Zero, Exponent::FourFifths, Exponent::One]),
            seed in any::<u64>(),
        ) {
            let prior = Prior::new(p, lambda).unwrap();
            let x = prior.prox_scalar(z, mu);
            let fx = scalar_objective(&prior, x, z, mu);
            prop_assert!(fx <= scalar_objective(&prior, z, z, mu) + 1e-12);
            prop_assert!(fx <= scalar_objective(&prior, 0.0, z, mu) + 1e-12);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..200 {
                let y = x + rng.random_range(-0.5..0.5);
                prop_assert!(fx <= scalar_objective(&prior, y, z, mu) + 1e-12);
            }
            prop_assert!(x.abs() <= z.abs());
        }

        #[test]
        fn soft_threshold_is_nonexpansive(
            a in prop::collection::vec(-3.0f64..3.0, 16),
            b in prop::collection::vec(-3.0f64..3.0, 16),
            mu in 0.01f64..2.0,
        ) {
            let prior = Prior::new(Exponent::One, 0.7).unwrap();
            let ga = ImageGrid::pixel(4, 4, a).unwrap();
            let gb = ImageGrid::pixel(4, 4, b).unwrap();
            let d = prior.prox(&ga, mu).unwrap().distance(&prior.prox(&gb, mu).unwrap());
            prop_assert!(d <= ga.distance(&gb) + 1e-12);
        }
    }
}
