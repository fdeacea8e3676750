//! Hybrid SDE models: coefficients, envelopes, step control, truncation,
//! assumption falsifiers, the model DSL and the built-in examples.

mod assumptions;
mod builtin;
mod dsl;
mod envelope;

pub use assumptions::{check_assumption_a31, check_assumption_a44, AssumptionId, AssumptionReport};
pub use builtin::{
    builtin, ginzburg32, ginzburg53, ginzburg_landau, volatility31, BuiltinModel, ModelDefaults,
    BUILTIN_NAMES,
};
pub use dsl::{parse_model, parse_model_with_generator};
pub use envelope::{
    envelope_from_samples, envelope_from_samples_with, project, truncate, Envelope, EnvelopeFn,
    EnvelopeKind, PiecewiseLinear, StepControl, StepVariant, TruncationMap,
};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::markov::GeneratorMatrix;
use crate::scalar::Scalar;

/// Per-regime drift `f(x, i)` and diffusion `g(x, i)`.
///
/// Regimes are 0-based. `diffusion` writes the `n x d` matrix row-major.
pub trait Coefficients<T: Scalar>: Send + Sync {
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn regimes(&self) -> usize;
    fn drift(&self, x: &[T], regime: usize, out: &mut [T]);
    fn diffusion(&self, x: &[T], regime: usize, out: &mut [T]);
}

/// Scalar cubic coefficients `f = a x + b x^3`, `g = sigma x` per regime.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicParams<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub sigma: Vec<T>,
}

impl<T: Scalar> CubicParams<T> {
    pub fn new(a: Vec<T>, b: Vec<T>, sigma: Vec<T>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() || a.len() != sigma.len() {
            return Err(Error::Dimension(format!(
                "cubic parameters need equal non-empty lengths, got a={}, b={}, sigma={}",
                a.len(),
                b.len(),
                sigma.len()
            )));
        }
        Ok(Self { a, b, sigma })
    }
}

impl<T: Scalar> Coefficients<T> for CubicParams<T> {
    fn state_dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn regimes(&self) -> usize {
        self.a.len()
    }
    #[inline]
    fn drift(&self, x: &[T], i: usize, out: &mut [T]) {
        let v = x[0];
        out[0] = self.a[i] * v + self.b[i] * v * v * v;
    }
    #[inline]
    fn diffusion(&self, x: &[T], i: usize, out: &mut [T]) {
        out[0] = self.sigma[i] * x[0];
    }
}

type CoefFn<T> = dyn Fn(&[T], usize, &mut [T]) + Send + Sync;

/// Coefficients given by a pair of closures.
pub struct FnCoefficients<T> {
    n: usize,
    d: usize,
    m: usize,
    drift: Box<CoefFn<T>>,
    diffusion: Box<CoefFn<T>>,
}

impl<T: Scalar> FnCoefficients<T> {
    pub fn new(
        n: usize,
        d: usize,
        m: usize,
        drift: impl Fn(&[T], usize, &mut [T]) + Send + Sync + 'static,
        diffusion: impl Fn(&[T], usize, &mut [T]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            d,
            m,
            drift: Box::new(drift),
            diffusion: Box::new(diffusion),
        }
    }
}

impl<T: Scalar> Coefficients<T> for FnCoefficients<T> {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn noise_dim(&self) -> usize {
        self.d
    }
    fn regimes(&self) -> usize {
        self.m
    }
    fn drift(&self, x: &[T], i: usize, out: &mut [T]) {
        (self.drift)(x, i, out)
    }
    fn diffusion(&self, x: &[T], i: usize, out: &mut [T]) {
        (self.diffusion)(x, i, out)
    }
}

/// A switching diffusion `dX = f(X, r) dt + g(X, r) dB` together with the
/// chain generator and optional envelopes. Cheap to clone.
#[derive(Clone)]
pub struct HybridModel<T: Scalar> {
    name: String,
    coefficients: Arc<dyn Coefficients<T>>,
    generator: GeneratorMatrix<T>,
    growth: Option<Envelope<T>>,
    lipschitz: Option<Envelope<T>>,
    cubic: Option<CubicParams<T>>,
}

impl<T: Scalar> fmt::Debug for HybridModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HybridModel")
            .field("name", &self.name)
            .field("n", &self.state_dim())
            .field("d", &self.noise_dim())
            .field("m", &self.regimes())
            .field("generator", &self.generator)
            .field("growth", &self.growth)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl<T: Scalar> HybridModel<T> {
    pub fn new(
        name: impl Into<String>,
        coefficients: impl Coefficients<T> + 'static,
        generator: GeneratorMatrix<T>,
    ) -> Result<Self> {
        Self::from_arc(name, Arc::new(coefficients), generator)
    }

    pub fn from_arc(
        name: impl Into<String>,
        coefficients: Arc<dyn Coefficients<T>>,
        generator: GeneratorMatrix<T>,
    ) -> Result<Self> {
        if coefficients.regimes() != generator.states() {
            return Err(Error::Dimension(format!(
                "coefficients have {} regimes but the generator has {} states",
                coefficients.regimes(),
                generator.states()
            )));
        }
        if coefficients.state_dim() == 0 || coefficients.noise_dim() == 0 {
            return Err(Error::Dimension(
                "state and noise dimensions must be positive".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            coefficients,
            generator,
            growth: None,
            lipschitz: None,
            cubic: None,
        })
    }

    /// Scalar cubic (Ginzburg-Landau type) model; keeps the parameters for
    /// the backward scheme and the closed-form reference.
    pub fn cubic(
        name: impl Into<String>,
        params: CubicParams<T>,
        generator: GeneratorMatrix<T>,
    ) -> Result<Self> {
        let mut model = Self::new(name, params.clone(), generator)?;
        model.cubic = Some(params);
        Ok(model)
    }

    pub fn with_growth_envelope(mut self, env: Envelope<T>) -> Result<Self> {
        self.check_envelope_len(&env)?;
        self.growth = Some(env);
        Ok(self)
    }

    pub fn with_lipschitz_envelope(mut self, env: Envelope<T>) -> Result<Self> {
        self.check_envelope_len(&env)?;
        self.lipschitz = Some(env);
        Ok(self)
    }

    pub fn with_generator(mut self, generator: GeneratorMatrix<T>) -> Result<Self> {
        if generator.states() != self.regimes() {
            return Err(Error::Dimension(format!(
                "model has {} regimes but the generator has {} states",
                self.regimes(),
                generator.states()
            )));
        }
        self.generator = generator;
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    fn check_envelope_len(&self, env: &Envelope<T>) -> Result<()> {
        if env.regimes() != self.regimes() {
            return Err(Error::Dimension(format!(
                "envelope covers {} regimes, model has {}",
                env.regimes(),
                self.regimes()
            )));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    #[inline]
    pub fn state_dim(&self) -> usize {
        self.coefficients.state_dim()
    }
    #[inline]
    pub fn noise_dim(&self) -> usize {
        self.coefficients.noise_dim()
    }
    #[inline]
    pub fn regimes(&self) -> usize {
        self.coefficients.regimes()
    }
    pub fn generator(&self) -> &GeneratorMatrix<T> {
        &self.generator
    }
    pub fn growth_envelope(&self) -> Option<&Envelope<T>> {
        self.growth.as_ref()
    }
    pub fn lipschitz_envelope(&self) -> Option<&Envelope<T>> {
        self.lipschitz.as_ref()
    }
    pub fn cubic_params(&self) -> Option<&CubicParams<T>> {
        self.cubic.as_ref()
    }
    pub fn coefficients(&self) -> &dyn Coefficients<T> {
        &*self.coefficients
    }

    #[inline]
    pub fn drift_into(&self, x: &[T], regime: usize, out: &mut [T]) {
        self.coefficients.drift(x, regime, out)
    }

    #[inline]
    pub fn diffusion_into(&self, x: &[T], regime: usize, out: &mut [T]) {
        self.coefficients.diffusion(x, regime, out)
    }

    pub fn drift(&self, x: &[T], regime: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.state_dim()];
        self.drift_into(x, regime, &mut out);
        out
    }

    /// Row-major `n x d` diffusion matrix.
    pub fn diffusion(&self, x: &[T], regime: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.state_dim() * self.noise_dim()];
        self.diffusion_into(x, regime, &mut out);
        out
    }

    /// `(|f| / (1+|x|)) ∨ (|g|^2 / (1+|x|)^2)`, the quantity a growth
    /// envelope has to dominate.
    pub fn growth_quotient(&self, x: &[T], regime: usize) -> T {
        let nx = crate::scalar::norm(x);
        let f = self.drift(x, regime);
        let g = self.diffusion(x, regime);
        let one = T::one() + nx;
        let gf = crate::scalar::norm(&f) / one;
        let gg = g.iter().fold(T::zero(), |a, &v| a + v * v) / (one * one);
        gf.max(gg)
    }

    /// `(|f(x)-f(y)| / |x-y|) ∨ (|g(x)-g(y)|^2 / |x-y|^2)`.
    pub fn lipschitz_quotient(&self, x: &[T], y: &[T], regime: usize) -> T {
        let e = crate::scalar::dist(x, y);
        let df = crate::scalar::dist(&self.drift(x, regime), &self.drift(y, regime));
        let dg = crate::scalar::dist(&self.diffusion(x, regime), &self.diffusion(y, regime));
        (df / e).max(dg * dg / (e * e))
    }

    /// True when `f(0, i) = 0` and `g(0, i) = 0` for every regime.
    pub fn has_zero_equilibrium(&self) -> bool {
        let zero = vec![T::zero(); self.state_dim()];
        (0..self.regimes()).all(|i| {
            self.drift(&zero, i).iter().all(|v| *v == T::zero())
                && self.diffusion(&zero, i).iter().all(|v| *v == T::zero())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_coefficients_evaluate() {
        let p = CubicParams::new(vec![1.0, 0.5], vec![-1.0, -1.0], vec![2.0, 1.0]).unwrap();
        let model =
            HybridModel::cubic("gl", p, GeneratorMatrix::two_state(1.0, 4.0).unwrap()).unwrap();
        assert_eq!(model.drift(&[2.0], 0), vec![-6.0]);
        assert_eq!(model.diffusion(&[2.0], 1), vec![2.0]);
        assert!(model.has_zero_equilibrium());
    }

    #[test]
    fn regime_count_must_match_generator() {
        let p = CubicParams::new(vec![1.0f64], vec![-1.0], vec![2.0]).unwrap();
        assert!(matches!(
            HybridModel::cubic("gl", p, GeneratorMatrix::two_state(1.0, 1.0).unwrap()),
            Err(Error::Dimension(_))
        ));
    }
}
