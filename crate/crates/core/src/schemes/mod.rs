//! Time-stepping kernels: the two truncated Euler-Maruyama schemes, plain
//! EM, backward EM for the scalar cubic model, and the closed-form
//! Ginzburg-Landau reference.

mod cubic;
mod path;

pub use cubic::{exact_ginzburg_landau, step_backward_cubic, ClosedForm};
pub use path::PathSample;

use rand::Rng;

use crate::error::{Error, Result};
use crate::markov::TransitionMatrix;
use crate::model::{CubicParams, HybridModel, StepControl, TruncationMap};
use crate::scalar::{norm, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeVariant {
    /// Truncation with the growth envelope and `h`.
    TruncatedFinite,
    /// Truncation with the Lipschitz envelope and `h̄`.
    TruncatedMeasure,
    PlainEm,
    BackwardEmCubic,
}

impl SchemeVariant {
    pub const ALL: [SchemeVariant; 4] = [
        SchemeVariant::TruncatedFinite,
        SchemeVariant::TruncatedMeasure,
        SchemeVariant::PlainEm,
        SchemeVariant::BackwardEmCubic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeVariant::TruncatedFinite => "truncated-finite",
            SchemeVariant::TruncatedMeasure => "truncated-measure",
            SchemeVariant::PlainEm => "plain-em",
            SchemeVariant::BackwardEmCubic => "backward-em-cubic",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }
}

impl std::fmt::Display for SchemeVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig<T> {
    pub delta: T,
    pub horizon: T,
    pub variant: SchemeVariant,
    /// Required by the truncated variants.
    pub step_control: Option<StepControl<T>>,
    pub x0: Vec<T>,
    /// 0-based initial regime.
    pub regime: usize,
}

impl<T: Scalar> SchemeConfig<T> {
    /// Number of grid steps `⌊T/Δ⌋`, tolerant to rounding in `T/Δ`.
    pub fn steps(&self) -> usize {
        let ratio = (self.horizon / self.delta).as_f64();
        (ratio * (1.0 + 1e-12)).floor() as usize
    }

    pub fn with_delta(&self, delta: T) -> Self {
        Self {
            delta,
            ..self.clone()
        }
    }

    pub fn with_variant(&self, variant: SchemeVariant) -> Self {
        Self {
            variant,
            ..self.clone()
        }
    }
}

/// Validated one-step map for a given model and configuration. Holds
/// scratch space, so each path uses its own instance.
#[derive(Debug, Clone)]
pub struct Stepper<T> {
    variant: SchemeVariant,
    delta: T,
    truncation: TruncationMap<T>,
    cubic: Option<CubicParams<T>>,
    f: Vec<T>,
    g: Vec<T>,
}

impl<T: Scalar> Stepper<T> {
    pub fn new(model: &HybridModel<T>, config: &SchemeConfig<T>) -> Result<Self> {
        let (n, d, m) = (model.state_dim(), model.noise_dim(), model.regimes());
        let delta = config.delta;
        if !(delta > T::zero() && delta <= T::one()) {
            return Err(Error::Config(format!(
                "step size must lie in (0, 1], got {delta}"
            )));
        }
        if !(config.horizon >= delta) {
            return Err(Error::Config(format!(
                "horizon {} is shorter than one step {delta}",
                config.horizon
            )));
        }
        if config.x0.len() != n {
            return Err(Error::Dimension(format!(
                "x0 has length {}, model has n = {n}",
                config.x0.len()
            )));
        }
        if config.regime >= m {
            return Err(Error::Config(format!(
                "initial regime {} outside 1..={m}",
                config.regime + 1
            )));
        }
        let mut cubic = None;
        let truncation = match config.variant {
            SchemeVariant::PlainEm => TruncationMap::identity(m),
            SchemeVariant::BackwardEmCubic => {
                let p = model.cubic_params().ok_or_else(|| {
                    Error::Config("backward-em-cubic needs a scalar cubic model".into())
                })?;
                for i in 0..m {
                    if !(p.b[i] < T::zero()) {
                        return Err(Error::Precondition(format!(
                            "backward-em-cubic needs b < 0, regime {} has b = {}",
                            i + 1,
                            p.b[i]
                        )));
                    }
                    if p.a[i] > T::zero() && delta * p.a[i] >= T::one() {
                        return Err(Error::Precondition(format!(
                            "backward-em-cubic needs Δ < 1/a = {} in regime {}",
                            p.a[i].recip(),
                            i + 1
                        )));
                    }
                }
                cubic = Some(p.clone());
                TruncationMap::identity(m)
            }
            SchemeVariant::TruncatedFinite | SchemeVariant::TruncatedMeasure => {
                let measure = config.variant == SchemeVariant::TruncatedMeasure;
                let sc = config.step_control.as_ref().ok_or_else(|| {
                    Error::Config(format!("{} needs a step control", config.variant))
                })?;
                if sc.is_measure() != measure {
                    return Err(Error::Config(format!(
                        "{} cannot use a {:?} step control",
                        config.variant,
                        sc.variant()
                    )));
                }
                let env = if measure {
                    model.lipschitz_envelope()
                } else {
                    model.growth_envelope()
                }
                .ok_or_else(|| {
                    Error::Config(format!(
                        "{} needs a {} envelope on model '{}'",
                        config.variant,
                        if measure { "Lipschitz" } else { "growth" },
                        model.name()
                    ))
                })?;
                sc.check_floor(model)?;
                let map = TruncationMap::new(env, sc, delta)?;
                let r0 = map.radius(config.regime);
                if norm(&config.x0) > r0 {
                    return Err(Error::Config(format!(
                        "x0 would be truncated at k = 0: |x0| = {} exceeds the regime-{} radius {r0} at Δ = {delta}",
                        norm(&config.x0),
                        config.regime + 1
                    )));
                }
                map
            }
        };
        Ok(Self {
            variant: config.variant,
            delta,
            truncation,
            cubic,
            f: vec![T::zero(); n],
            g: vec![T::zero(); n * d],
        })
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn variant(&self) -> SchemeVariant {
        self.variant
    }

    pub fn truncation(&self) -> &TruncationMap<T> {
        &self.truncation
    }

    /// Advances `y` in place by one step, writing the pre-truncation value
    /// to `y_tilde`. `step` is the index of the produced state, used in
    /// error reports.
    pub fn step(
        &mut self,
        model: &HybridModel<T>,
        y: &mut [T],
        y_tilde: &mut [T],
        r: usize,
        r_next: usize,
        db: &[T],
        step: usize,
    ) -> Result<()> {
        if let Some(p) = &self.cubic {
            let next = step_backward_cubic(y[0], db[0], p.a[r], p.b[r], p.sigma[r], self.delta)?;
            y_tilde[0] = next;
            y[0] = next;
        } else {
            euler(
                model,
                y,
                r,
                db,
                self.delta,
                &mut self.f,
                &mut self.g,
                y_tilde,
            );
            y.copy_from_slice(y_tilde);
            self.truncation.apply(y, r_next);
        }
        if y_tilde.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step,
                regime: r + 1,
                state: format!("{:?}", y_tilde),
            });
        }
        Ok(())
    }
}

/// `out = y + f(y, r) Δ + g(y, r) dB`.
#[inline]
#[allow(clippy::too_many_arguments)]
fn euler<T: Scalar>(
    model: &HybridModel<T>,
    y: &[T],
    r: usize,
    db: &[T],
    delta: T,
    f: &mut [T],
    g: &mut [T],
    out: &mut [T],
) {
    let d = db.len();
    model.drift_into(y, r, f);
    model.diffusion_into(y, r, g);
    for k in 0..y.len() {
        let mut acc = y[k] + f[k] * delta;
        for l in 0..d {
            acc = acc + g[k * d + l] * db[l];
        }
        out[k] = acc;
    }
}

/// One step of the truncated scheme: `ỹ = y + f(y,r)Δ + g(y,r)dB` and
/// `y_next = π^{r_next}(ỹ)`. Returns `(ỹ, y_next)`.
pub fn step_truncated<T: Scalar>(
    model: &HybridModel<T>,
    truncation: &TruncationMap<T>,
    delta: T,
    y: &[T],
    r: usize,
    r_next: usize,
    db: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let n = model.state_dim();
    if y.len() != n || db.len() != model.noise_dim() {
        return Err(Error::Dimension(
            "state or increment length does not match the model".into(),
        ));
    }
    let mut f = vec![T::zero(); n];
    let mut g = vec![T::zero(); n * db.len()];
    let mut tilde = vec![T::zero(); n];
    euler(model, y, r, db, delta, &mut f, &mut g, &mut tilde);
    if tilde.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite state from y = {y:?} in regime {}",
            r + 1
        )));
    }
    let mut next = tilde.clone();
    truncation.apply(&mut next, r_next);
    Ok((tilde, next))
}

/// Driving noise on a uniform grid: Brownian increments then one uniform
/// per step for the chain, in that order.
#[derive(Debug, Clone)]
pub struct NoiseSource<T> {
    transition: TransitionMatrix<T>,
    sqrt_delta: T,
}

impl<T: Scalar> NoiseSource<T> {
    pub fn new(model: &HybridModel<T>, delta: T) -> Result<Self> {
        Ok(Self {
            transition: model.generator().transition_matrix(delta)?,
            sqrt_delta: delta.sqrt(),
        })
    }

    /// Fills `db` with `N(0, Δ I)` and returns the next regime.
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, r: usize, db: &mut [T]) -> usize {
        for v in db.iter_mut() {
            *v = T::standard_normal(rng) * self.sqrt_delta;
        }
        self.transition.next_state(r, T::unit_uniform(rng))
    }
}

/// A validated scheme and its noise source, reusable across paths.
#[derive(Debug, Clone)]
pub struct PreparedScheme<T> {
    config: SchemeConfig<T>,
    stepper: Stepper<T>,
    noise: NoiseSource<T>,
}

impl<T: Scalar> PreparedScheme<T> {
    pub fn new(model: &HybridModel<T>, config: &SchemeConfig<T>) -> Result<Self> {
        Ok(Self {
            stepper: Stepper::new(model, config)?,
            noise: NoiseSource::new(model, config.delta)?,
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &SchemeConfig<T> {
        &self.config
    }

    pub fn stepper(&self) -> &Stepper<T> {
        &self.stepper
    }

    /// Runs one path without storing it; `observe(k, y_k, r_k)` sees every
    /// grid point including `k = 0`.
    pub fn run<R, F>(&self, model: &HybridModel<T>, rng: &mut R, mut observe: F) -> Result<()>
    where
        R: Rng + ?Sized,
        F: FnMut(usize, &[T], usize),
    {
        let mut stepper = self.stepper.clone();
        let mut y = self.config.x0.clone();
        let mut tilde = y.clone();
        let mut db = vec![T::zero(); model.noise_dim()];
        let mut r = self.config.regime;
        observe(0, &y, r);
        for k in 0..self.config.steps() {
            let r_next = self.noise.draw(rng, r, &mut db);
            stepper.step(model, &mut y, &mut tilde, r, r_next, &db, k + 1)?;
            r = r_next;
            observe(k + 1, &y, r);
        }
        Ok(())
    }
}

/// Simulates one path on `{0, Δ, …, ⌊T/Δ⌋Δ}`.
pub fn simulate<T: Scalar, R: Rng + ?Sized>(
    model: &HybridModel<T>,
    config: &SchemeConfig<T>,
    rng: &mut R,
) -> Result<PathSample<T>> {
    let mut stepper = Stepper::new(model, config)?;
    let noise = NoiseSource::new(model, config.delta)?;
    let (n, d) = (model.state_dim(), model.noise_dim());
    let steps = config.steps();
    let mut path = PathSample::with_capacity(config.delta, n, d, steps);
    let mut y = config.x0.clone();
    let mut tilde = config.x0.clone();
    let mut db = vec![T::zero(); d];
    let mut r = config.regime;
    path.push_initial(&y, r);
    for k in 0..steps {
        let r_next = noise.draw(rng, r, &mut db);
        stepper.step(model, &mut y, &mut tilde, r, r_next, &db, k + 1)?;
        path.push(&tilde, &y, r_next, &db);
        r = r_next;
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::GeneratorMatrix;
    use crate::model::{volatility31, FnCoefficients};

    fn scalar_model(slope: f64) -> HybridModel<f64> {
        HybridModel::new(
            "lin",
            FnCoefficients::new(
                1,
                1,
                1,
                move |x: &[f64], _, o: &mut [f64]| o[0] = slope * x[0],
                |_: &[f64], _, o: &mut [f64]| o[0] = 0.0,
            ),
            GeneratorMatrix::single(),
        )
        .unwrap()
    }

    #[test]
    fn deterministic_euler_step() {
        let model = scalar_model(-1.0);
        let (tilde, next) = step_truncated(
            &model,
            &TruncationMap::identity(1),
            0.5,
            &[2.0],
            0,
            0,
            &[0.0],
        )
        .unwrap();
        assert_eq!(tilde, vec![1.0]);
        assert_eq!(next, vec![1.0]);
    }

    #[test]
    fn truncation_hits_radius_exactly() {
        let b = volatility31::<f64>();
        let env = b.model.growth_envelope().unwrap();
        let map = TruncationMap::new(env, &b.defaults.finite_step, 1.0).unwrap();
        let (tilde, next) =
            step_truncated(&b.model, &map, 1.0, &[2.0, 1.0], 0, 0, &[0.3, -0.2]).unwrap();
        assert!(norm(&tilde) > 3.0);
        assert_eq!(norm(&next), 3.0);
        let (_, other) =
            step_truncated(&b.model, &map, 1.0, &[2.0, 1.0], 0, 1, &[0.3, -0.2]).unwrap();
        assert_eq!(other, tilde);
    }

    #[test]
    fn initial_truncation_is_rejected() {
        let b = volatility31::<f64>();
        let config = SchemeConfig {
            delta: 1.0,
            horizon: 1.0,
            variant: SchemeVariant::TruncatedFinite,
            step_control: Some(b.defaults.finite_step),
            x0: vec![5.0, 0.0],
            regime: 0,
        };
        let err = Stepper::new(&b.model, &config).unwrap_err();
        assert!(err.to_string().contains("k = 0"), "{err}");
        assert!(Stepper::new(
            &b.model,
            &SchemeConfig {
                regime: 1,
                ..config
            }
        )
        .is_ok());
    }
}
