use std::fmt;
use std::sync::Arc;

use rand::Rng;

use super::HybridModel;
use crate::error::{Error, Result};
use crate::rng::{path_stream, PathRng};
use crate::scalar::{norm, Scalar};

/// Monotone piecewise-linear function on `[knots[0], ∞)`, extrapolated with
/// the slope of the last segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear<T> {
    knots: Vec<T>,
    values: Vec<T>,
}

impl<T: Scalar> PiecewiseLinear<T> {
    pub fn new(knots: Vec<T>, values: Vec<T>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::Model(
                "piecewise envelope needs at least two knots".into(),
            ));
        }
        for w in 0..knots.len() - 1 {
            if !(knots[w + 1] > knots[w]) || !(values[w + 1] > values[w]) {
                return Err(Error::Model(
                    "piecewise envelope must be strictly increasing".into(),
                ));
            }
        }
        Ok(Self { knots, values })
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    fn segment(&self, u: T) -> usize {
        let last = self.knots.len() - 2;
        match self.knots.iter().position(|&k| k > u) {
            Some(0) => 0,
            Some(j) => (j - 1).min(last),
            None => last,
        }
    }

    pub fn eval(&self, u: T) -> T {
        if u <= self.knots[0] {
            return self.values[0];
        }
        let s = self.segment(u);
        let (u0, u1) = (self.knots[s], self.knots[s + 1]);
        let (v0, v1) = (self.values[s], self.values[s + 1]);
        v0 + (v1 - v0) * (u - u0) / (u1 - u0)
    }

    pub fn inverse(&self, v: T) -> Option<T> {
        if v < self.values[0] {
            return None;
        }
        let last = self.values.len() - 2;
        let s = self
            .values
            .iter()
            .position(|&w| w > v)
            .map_or(last, |j| (j.max(1) - 1).min(last));
        let (u0, u1) = (self.knots[s], self.knots[s + 1]);
        let (v0, v1) = (self.values[s], self.values[s + 1]);
        Some(u0 + (u1 - u0) * (v - v0) / (v1 - v0))
    }
}

/// One regime's envelope `φ_i : [1, ∞) → ℝ₊`.
#[derive(Clone)]
pub enum EnvelopeFn<T> {
    /// Constant envelope; the truncation radius is infinite.
    Constant(T),
    /// `coeff * u^power + offset`.
    Power {
        coeff: T,
        power: T,
        offset: T,
    },
    Piecewise(PiecewiseLinear<T>),
    /// Arbitrary strictly increasing function, inverted by bisection.
    Custom(Arc<dyn Fn(T) -> T + Send + Sync>),
}

impl<T: fmt::Debug> fmt::Debug for EnvelopeFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvelopeFn::Constant(c) => write!(f, "Constant({c:?})"),
            EnvelopeFn::Power {
                coeff,
                power,
                offset,
            } => write!(f, "{coeff:?}*u^{power:?}+{offset:?}"),
            EnvelopeFn::Piecewise(p) => write!(f, "Piecewise({} knots)", p.knots.len()),
            EnvelopeFn::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl<T: Scalar> EnvelopeFn<T> {
    pub fn linear(slope: T) -> Self {
        EnvelopeFn::Power {
            coeff: slope,
            power: T::one(),
            offset: T::zero(),
        }
    }

    pub fn eval(&self, u: T) -> T {
        match self {
            EnvelopeFn::Constant(c) => *c,
            EnvelopeFn::Power {
                coeff,
                power,
                offset,
            } => *coeff * pow(u, *power) + *offset,
            EnvelopeFn::Piecewise(p) => p.eval(u),
            EnvelopeFn::Custom(f) => f(u),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, EnvelopeFn::Constant(_))
    }

    /// `φ⁻¹(v)`; `None` when `v < φ(1)`, `+∞` for a constant envelope.
    pub fn inverse(&self, v: T) -> Option<T> {
        if v.is_nan() || v < self.eval(T::one()) {
            return None;
        }
        match self {
            EnvelopeFn::Constant(_) => Some(T::infinity()),
            EnvelopeFn::Power {
                coeff,
                power,
                offset,
            } => {
                let base = (v - *offset) / *coeff;
                let u = if *power == T::one() {
                    base
                } else if *power == T::lit(2.0) {
                    base.sqrt()
                } else {
                    base.powf(power.recip())
                };
                Some(u.max(T::one()))
            }
            EnvelopeFn::Piecewise(p) => p.inverse(v),
            EnvelopeFn::Custom(f) => Some(bisect_inverse(|u| f(u), v)),
        }
    }
}

#[inline]
fn pow<T: Scalar>(u: T, p: T) -> T {
    if p == T::one() {
        u
    } else if p == T::lit(2.0) {
        u * u
    } else {
        u.powf(p)
    }
}

/// Largest `u ≥ 1` with `φ(u) ≤ v` up to relative tolerance 1e-12, for an
/// increasing `φ` with `φ(1) ≤ v`. Returns `+∞` if `φ` never reaches `v`.
fn bisect_inverse<T: Scalar>(phi: impl Fn(T) -> T, v: T) -> T {
    let two = T::lit(2.0);
    let mut lo = T::one();
    let mut hi = two;
    while phi(hi) < v {
        lo = hi;
        hi = hi * two;
        if hi > T::lit(1e300).min(T::max_value() / two) {
            return T::infinity();
        }
    }
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(4.0));
    for _ in 0..400 {
        if hi - lo <= tol * hi {
            break;
        }
        let mid = lo + (hi - lo) / two;
        if phi(mid) <= v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Per-regime envelopes (growth `φ_i` or Lipschitz `φ̄_i`).
#[derive(Debug, Clone)]
pub struct Envelope<T> {
    regimes: Vec<EnvelopeFn<T>>,
}

impl<T: Scalar> Envelope<T> {
    pub fn new(regimes: Vec<EnvelopeFn<T>>) -> Result<Self> {
        if regimes.is_empty() {
            return Err(Error::Model("envelope needs at least one regime".into()));
        }
        Ok(Self { regimes })
    }

    /// Same function in every regime.
    pub fn uniform(f: EnvelopeFn<T>, m: usize) -> Self {
        Self {
            regimes: vec![f; m.max(1)],
        }
    }

    pub fn regimes(&self) -> usize {
        self.regimes.len()
    }

    pub fn get(&self, i: usize) -> &EnvelopeFn<T> {
        &self.regimes[i]
    }

    pub fn eval(&self, i: usize, u: T) -> T {
        self.regimes[i].eval(u)
    }

    pub fn inverse(&self, i: usize, v: T) -> Option<T> {
        self.regimes[i].inverse(v)
    }

    pub fn is_constant(&self, i: usize) -> bool {
        self.regimes[i].is_constant()
    }
}

/// Which quotient an envelope bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeKind {
    Growth,
    Lipschitz,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepVariant<T> {
    /// Finite-horizon control, `θ = 0`.
    Plain,
    /// Infinite-horizon moment control, `θ ∈ (0, 1/2)`.
    Stability { theta: T },
    /// Control for the second (Lipschitz) truncation, `θ̄ ∈ (0, 1/2)`.
    Measure { theta: T },
}

/// Step control `h(Δ) = scale · Δ^(-exponent)` with constant `K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl<T> {
    scale: T,
    exponent: T,
    k: T,
    variant: StepVariant<T>,
}

impl<T: Scalar> StepControl<T> {
    pub fn new(scale: T, exponent: T, k: T, variant: StepVariant<T>) -> Result<Self> {
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(Error::Config(format!(
                "step-control scale must be positive, got {scale}"
            )));
        }
        if !(exponent > T::zero()) {
            return Err(Error::Config(format!(
                "step-control exponent must be positive so that h is strictly decreasing, got {exponent}"
            )));
        }
        let theta = match variant {
            StepVariant::Plain => T::zero(),
            StepVariant::Stability { theta } | StepVariant::Measure { theta } => {
                if !(theta > T::zero() && theta < T::lit(0.5)) {
                    return Err(Error::Config(format!(
                        "theta must lie in (0, 1/2), got {theta}"
                    )));
                }
                theta
            }
        };
        // Δ^(1/2-θ) h(Δ) = scale Δ^(1/2-θ-exponent) stays bounded on (0, 1]
        // only if exponent ≤ 1/2 - θ; its supremum is then h(1) = scale.
        let slack = T::lit(1e-12);
        if exponent > T::lit(0.5) - theta + slack {
            return Err(Error::Config(format!(
                "Δ^(1/2-θ)·h(Δ) is unbounded as Δ→0: exponent {exponent} exceeds 1/2-θ = {}",
                T::lit(0.5) - theta
            )));
        }
        if scale > k * (T::one() + slack) {
            return Err(Error::Config(format!(
                "Δ^(1/2-θ)·h(Δ) reaches {scale} > K = {k} at Δ = 1"
            )));
        }
        Ok(Self {
            scale,
            exponent,
            k,
            variant,
        })
    }

    /// Power law with the smallest admissible `K`, namely `h(1)`.
    pub fn power_law(scale: T, exponent: T, variant: StepVariant<T>) -> Result<Self> {
        Self::new(scale, exponent, scale, variant)
    }

    #[inline]
    pub fn h(&self, delta: T) -> T {
        self.scale * delta.powf(-self.exponent)
    }

    pub fn scale(&self) -> T {
        self.scale
    }
    pub fn exponent(&self) -> T {
        self.exponent
    }
    pub fn k(&self) -> T {
        self.k
    }
    pub fn variant(&self) -> StepVariant<T> {
        self.variant
    }

    pub fn theta(&self) -> T {
        match self.variant {
            StepVariant::Plain => T::zero(),
            StepVariant::Stability { theta } | StepVariant::Measure { theta } => theta,
        }
    }

    pub fn is_measure(&self) -> bool {
        matches!(self.variant, StepVariant::Measure { .. })
    }

    /// The envelope kind this control pairs with.
    pub fn envelope_kind(&self) -> EnvelopeKind {
        if self.is_measure() {
            EnvelopeKind::Lipschitz
        } else {
            EnvelopeKind::Growth
        }
    }

    /// Floor condition `h̄(1) ≥ max_i |f(0,i)| ∨ |g(0,i)|^2` of the measure
    /// variant. Other variants always pass.
    pub fn check_floor(&self, model: &HybridModel<T>) -> Result<()> {
        if !self.is_measure() {
            return Ok(());
        }
        let zero = vec![T::zero(); model.state_dim()];
        for i in 0..model.regimes() {
            let f = norm(&model.drift(&zero, i));
            let g = model
                .diffusion(&zero, i)
                .iter()
                .fold(T::zero(), |a, &v| a + v * v);
            let need = f.max(g);
            if self.h(T::one()) < need {
                return Err(Error::Config(format!(
                    "h̄(1) = {} is below |f(0,{})| ∨ |g(0,{})|² = {need}",
                    self.h(T::one()),
                    i + 1,
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// Radial projection onto the closed ball of radius `radius`. Returns
/// whether `x` changed. The result satisfies `|x| ≤ radius` in floating
/// point, so a second projection is a no-op.
#[inline]
pub fn project<T: Scalar>(x: &mut [T], radius: T) -> bool {
    let n = norm(x);
    if !(n > radius) {
        return false;
    }
    for v in x.iter_mut() {
        *v = *v * radius / n;
    }
    let mut shrink = T::one();
    while norm(x) > radius {
        shrink = shrink * (T::one() - T::epsilon());
        for v in x.iter_mut() {
            *v = *v * shrink;
        }
    }
    true
}

/// Per-regime truncation radii `φ_i⁻¹(h(Δ))` at a fixed step size.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationMap<T> {
    radii: Vec<T>,
}

impl<T: Scalar> TruncationMap<T> {
    pub fn new(env: &Envelope<T>, sc: &StepControl<T>, delta: T) -> Result<Self> {
        if !(delta > T::zero() && delta <= T::one()) {
            return Err(Error::Config(format!(
                "step size must lie in (0, 1], got {delta}"
            )));
        }
        let level = sc.h(delta);
        let radii = (0..env.regimes())
            .map(|i| {
                env.inverse(i, level).ok_or_else(|| {
                    Error::Config(format!(
                        "regime {}: h(Δ) = {level} at Δ = {delta} is below φ(1) = {}",
                        i + 1,
                        env.eval(i, T::one())
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { radii })
    }

    /// No truncation in any of `m` regimes (classical EM).
    pub fn identity(m: usize) -> Self {
        Self {
            radii: vec![T::infinity(); m],
        }
    }

    pub fn radius(&self, regime: usize) -> T {
        self.radii[regime]
    }

    pub fn radii(&self) -> &[T] {
        &self.radii
    }

    pub fn is_identity(&self) -> bool {
        self.radii.iter().all(|r| r.is_infinite())
    }

    #[inline]
    pub fn apply(&self, x: &mut [T], regime: usize) -> bool {
        project(x, self.radii[regime])
    }
}

/// `π^i_Δ(x) = (|x| ∧ R) x/|x|` with `R = φ_i⁻¹(h(Δ))`.
pub fn truncate<T: Scalar>(
    x: &[T],
    regime: usize,
    delta: T,
    env: &Envelope<T>,
    sc: &StepControl<T>,
) -> Result<Vec<T>> {
    let map = TruncationMap::new(env, sc, delta)?;
    if regime >= map.radii.len() {
        return Err(Error::Dimension(format!(
            "regime {} out of range",
            regime + 1
        )));
    }
    let mut y = x.to_vec();
    map.apply(&mut y, regime);
    Ok(y)
}

const ENVELOPE_SAFETY: f64 = 1.05;
const DEFAULT_SAMPLES: usize = 400;
const DEFAULT_SEED: u64 = 0x656e_7665_6c6f_7065;

/// Piecewise-linear envelope fitted to sampled quotients on `grid`.
pub fn envelope_from_samples<T: Scalar>(
    model: &HybridModel<T>,
    kind: EnvelopeKind,
    grid: &[T],
) -> Result<Envelope<T>> {
    envelope_from_samples_with(model, kind, grid, DEFAULT_SAMPLES, DEFAULT_SEED)
}

/// As [`envelope_from_samples`] with an explicit per-radius sample count
/// and seed.
pub fn envelope_from_samples_with<T: Scalar>(
    model: &HybridModel<T>,
    kind: EnvelopeKind,
    grid: &[T],
    samples_per_radius: usize,
    seed: u64,
) -> Result<Envelope<T>> {
    if grid.is_empty() || grid[0] < T::one() || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(
            "envelope grid must be increasing with minimum ≥ 1".into(),
        ));
    }
    let mut knots = grid.to_vec();
    if knots[0] > T::one() {
        knots.insert(0, T::one());
    }
    if knots.len() == 1 {
        knots.push(T::lit(2.0));
    }
    let n = model.state_dim();
    let mut regimes = Vec::with_capacity(model.regimes());
    for i in 0..model.regimes() {
        let mut rng = path_stream(seed, 0, i as u32);
        let mut values = Vec::with_capacity(knots.len());
        let mut running = T::zero();
        for (k, &u) in knots.iter().enumerate() {
            let inner = if k == 0 { T::zero() } else { knots[k - 1] };
            for s in 0..samples_per_radius.max(2) {
                let q = match kind {
                    EnvelopeKind::Growth => {
                        let r = if s == 0 {
                            u
                        } else if s == 1 {
                            inner
                        } else {
                            inner + (u - inner) * T::unit_uniform(&mut rng)
                        };
                        let x = random_point(&mut rng, n, r);
                        model.growth_quotient(&x, i)
                    }
                    EnvelopeKind::Lipschitz => {
                        let (x, y) = random_pair(&mut rng, n, inner, u, s);
                        model.lipschitz_quotient(&x, &y, i)
                    }
                };
                if !q.is_finite() {
                    return Err(Error::Model(format!(
                        "non-finite coefficient quotient in regime {} at radius {u}",
                        i + 1
                    )));
                }
                running = running.max(q);
            }
            let mut v = running * T::lit(ENVELOPE_SAFETY);
            if let Some(&prev) = values.last() {
                let floor_slope = T::lit(1e-9) * T::one().max(prev);
                v = v.max(prev + floor_slope * (u - knots[k - 1]));
            }
            values.push(v);
        }
        regimes.push(EnvelopeFn::Piecewise(PiecewiseLinear::new(
            knots.clone(),
            values,
        )?));
    }
    Envelope::new(regimes)
}

fn random_direction<T: Scalar>(rng: &mut PathRng, n: usize) -> Vec<T> {
    loop {
        let v: Vec<T> = (0..n).map(|_| T::standard_normal(rng)).collect();
        let r = norm(&v);
        if r > T::lit(1e-12) {
            return v.into_iter().map(|c| c / r).collect();
        }
    }
}

fn random_point<T: Scalar>(rng: &mut PathRng, n: usize, radius: T) -> Vec<T> {
    random_direction::<T>(rng, n)
        .into_iter()
        .map(|c| c * radius)
        .collect()
}

/// A pair in the ball of radius `outer` with at least one point in the
/// shell `[inner, outer]`; separations span several orders of magnitude.
fn random_pair<T: Scalar>(
    rng: &mut PathRng,
    n: usize,
    inner: T,
    outer: T,
    s: usize,
) -> (Vec<T>, Vec<T>) {
    let r = inner + (outer - inner) * T::unit_uniform(rng);
    let x = random_point(rng, n, r);
    let y = match s % 3 {
        0 => {
            let r = outer * T::unit_uniform(rng);
            random_point(rng, n, r)
        }
        1 => {
            let sep = outer * T::lit(10f64.powf(-6.0 * rng.random::<f64>()));
            let mut y: Vec<T> = x
                .iter()
                .zip(random_direction::<T>(rng, n))
                .map(|(&a, b)| a + b * sep)
                .collect();
            project(&mut y, outer);
            y
        }
        _ => {
            let dir: Vec<T> = x.iter().map(|&c| c / r.max(T::lit(1e-300))).collect();
            let t = outer * T::unit_uniform(rng);
            dir.into_iter().map(|c| c * t).collect()
        }
    };
    if crate::scalar::dist(&x, &y) > T::zero() {
        (x, y)
    } else {
        let mut y = y;
        y[0] = y[0] + outer * T::lit(1e-6);
        (x, y)
    }
}
