//! Reference models with hand-derived envelopes and step controls.

use super::envelope::{Envelope, EnvelopeFn, StepControl, StepVariant};
use super::{CubicParams, FnCoefficients, HybridModel};
use crate::error::{Error, Result};
use crate::markov::GeneratorMatrix;
use crate::scalar::{norm, Scalar};

pub const BUILTIN_NAMES: [&str; 3] = ["volatility31", "ginzburg32", "ginzburg53"];

/// Initial data and step controls that come with a built-in model.
#[derive(Debug, Clone)]
pub struct ModelDefaults<T> {
    pub x0: Vec<T>,
    /// 0-based initial regime.
    pub regime: usize,
    pub horizon: T,
    /// Control for the finite-horizon truncation (growth envelope).
    pub finite_step: StepControl<T>,
    /// Control for the second truncation (Lipschitz envelope).
    pub measure_step: Option<StepControl<T>>,
    pub description: &'static str,
}

#[derive(Debug, Clone)]
pub struct BuiltinModel<T: Scalar> {
    pub model: HybridModel<T>,
    pub defaults: ModelDefaults<T>,
}

/// Looks up a built-in by name. `gamma` only affects `ginzburg53`.
pub fn builtin<T: Scalar>(name: &str, gamma: Option<T>) -> Result<BuiltinModel<T>> {
    match name {
        "volatility31" => Ok(volatility31()),
        "ginzburg32" => Ok(ginzburg32()),
        "ginzburg53" => ginzburg53(gamma.unwrap_or(T::lit(1.5))),
        other => Err(Error::Config(format!(
            "unknown built-in model '{other}' (available: {})",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

/// Two-dimensional volatility-type model with two regimes:
/// `f1 = 2.5 x (1-|x|)`, `g1 = [[-1, √2], [√2, 1]] |x|^{3/2}`,
/// `f2 = (1, 2)ᵀ - x`, `g2 = [[0.2, -0.5], [1, 0.4]] |x|`.
pub fn volatility31<T: Scalar>() -> BuiltinModel<T> {
    let lit = T::lit;
    let s2 = lit(2f64.sqrt());
    let coefficients = FnCoefficients::new(
        2,
        2,
        2,
        move |x: &[T], i, out: &mut [T]| {
            if i == 0 {
                let c = lit(2.5) * (T::one() - norm(x));
                out[0] = c * x[0];
                out[1] = c * x[1];
            } else {
                out[0] = T::one() - x[0];
                out[1] = lit(2.0) - x[1];
            }
        },
        move |x: &[T], i, out: &mut [T]| {
            let r = norm(x);
            if i == 0 {
                let s = r * r.sqrt();
                out[0] = -s;
                out[1] = s2 * s;
                out[2] = s2 * s;
                out[3] = s;
            } else {
                out[0] = lit(0.2) * r;
                out[1] = lit(-0.5) * r;
                out[2] = r;
                out[3] = lit(0.4) * r;
            }
        },
    );
    let generator = GeneratorMatrix::two_state(lit(4.0), lit(0.2)).expect("valid generator");
    let growth = Envelope::new(vec![
        EnvelopeFn::linear(lit(6.0)),
        EnvelopeFn::Constant(lit(10.0).sqrt()),
    ])
    .expect("two regimes");
    let lipschitz = Envelope::new(vec![
        EnvelopeFn::linear(lit(18.0)),
        EnvelopeFn::Constant(lit(1.45)),
    ])
    .expect("two regimes");
    let model = HybridModel::new("volatility31", coefficients, generator)
        .and_then(|m| m.with_growth_envelope(growth))
        .and_then(|m| m.with_lipschitz_envelope(lipschitz))
        .expect("consistent built-in");
    BuiltinModel {
        model,
        defaults: ModelDefaults {
            x0: vec![T::one(), T::one()],
            regime: 1,
            horizon: T::one(),
            finite_step: StepControl::power_law(lit(18.0), lit(0.5), StepVariant::Plain)
                .expect("valid control"),
            measure_step: Some(
                StepControl::power_law(
                    lit(54.0),
                    lit(0.4),
                    StepVariant::Measure { theta: lit(0.1) },
                )
                .expect("valid control"),
            ),
            description: "2-D volatility model, 2 regimes, Γ=[[-4,4],[0.2,-0.2]], x0=(1,1), ℓ=2",
        },
    }
}

/// Scalar Ginzburg-Landau model `dX = (aX + bX³)dt + σX dB` with the growth
/// envelope `c(u²+1)` (`c = max |b| ∨ σ² ∨ |a|`, or the constant `|a| ∨ σ²`
/// in regimes with `b = 0`) and the Lipschitz envelope
/// `3|b|u² + (|a| ∨ (σ² - 3|b|))`.
pub fn ginzburg_landau<T: Scalar>(
    name: &str,
    params: CubicParams<T>,
    generator: GeneratorMatrix<T>,
) -> Result<HybridModel<T>> {
    let m = params.a.len();
    let c = (0..m).fold(T::zero(), |acc, i| {
        acc.max(params.b[i].abs())
            .max(params.sigma[i] * params.sigma[i])
            .max(params.a[i].abs())
    });
    let three = T::lit(3.0);
    let growth = (0..m)
        .map(|i| {
            if params.b[i] == T::zero() {
                EnvelopeFn::Constant((params.a[i].abs()).max(params.sigma[i] * params.sigma[i]))
            } else {
                EnvelopeFn::Power {
                    coeff: c,
                    power: T::lit(2.0),
                    offset: c,
                }
            }
        })
        .collect();
    let lipschitz = (0..m)
        .map(|i| {
            let (a, b, s2) = (
                params.a[i].abs(),
                params.b[i].abs(),
                params.sigma[i] * params.sigma[i],
            );
            if b == T::zero() {
                EnvelopeFn::Constant(a.max(s2))
            } else {
                EnvelopeFn::Power {
                    coeff: three * b,
                    power: T::lit(2.0),
                    offset: a.max(s2 - three * b),
                }
            }
        })
        .collect();
    HybridModel::cubic(name, params, generator)?
        .with_growth_envelope(Envelope::new(growth)?)?
        .with_lipschitz_envelope(Envelope::new(lipschitz)?)
}

/// Two-regime Ginzburg-Landau model: `γ12 = 1`, `γ21 = 4`, `a = (1, 0.5)`,
/// `b = (-1, -1)`, `σ = (2, 1)`, `x0 = 20`, `ℓ = 1`, `T = 2`, and
/// `h(Δ) = φ(|x0|) Δ^{-0.2}`.
pub fn ginzburg32<T: Scalar>() -> BuiltinModel<T> {
    let lit = T::lit;
    let params = CubicParams::new(
        vec![lit(1.0), lit(0.5)],
        vec![lit(-1.0), lit(-1.0)],
        vec![lit(2.0), lit(1.0)],
    )
    .expect("equal lengths");
    let generator = GeneratorMatrix::two_state(lit(1.0), lit(4.0)).expect("valid generator");
    let model = ginzburg_landau("ginzburg32", params, generator).expect("consistent built-in");
    let x0 = lit(20.0);
    let level = model.growth_envelope().unwrap().eval(0, x0);
    BuiltinModel {
        model,
        defaults: ModelDefaults {
            x0: vec![x0],
            regime: 0,
            horizon: lit(2.0),
            finite_step: StepControl::power_law(level, lit(0.2), StepVariant::Plain).expect("valid control"),
            measure_step: None,
            description: "scalar Ginzburg-Landau, 2 regimes, γ12=1, γ21=4, a=(1,0.5), b=(-1,-1), σ=(2,1), x0=20, ℓ=1",
        },
    }
}

/// Two-regime Ginzburg-Landau model with `Γ = [[-γ, γ], [3, -3]]`,
/// `a = (1, 2)`, `b = (-1, 0)`, `σ = (2, -1)`, `x0 = 0.5`, `ℓ = 2`,
/// `h̄(Δ) = 6 Δ^{-0.4}`.
pub fn ginzburg53<T: Scalar>(gamma: T) -> Result<BuiltinModel<T>> {
    let lit = T::lit;
    if !(gamma > T::zero()) {
        return Err(Error::Config(format!(
            "ginzburg53 needs γ > 0, got {gamma}"
        )));
    }
    let params = CubicParams::new(
        vec![lit(1.0), lit(2.0)],
        vec![lit(-1.0), lit(0.0)],
        vec![lit(2.0), lit(-1.0)],
    )?;
    let generator = GeneratorMatrix::two_state(gamma, lit(3.0))?;
    let model = ginzburg_landau("ginzburg53", params, generator)?;
    Ok(BuiltinModel {
        model,
        defaults: ModelDefaults {
            x0: vec![lit(0.5)],
            regime: 1,
            horizon: lit(100.0),
            finite_step: StepControl::power_law(lit(8.0), lit(0.2), StepVariant::Plain)?,
            measure_step: Some(StepControl::power_law(lit(6.0), lit(0.4), StepVariant::Measure { theta: lit(0.1) })?),
            description: "scalar Ginzburg-Landau, 2 regimes, Γ=[[-γ,γ],[3,-3]], a=(1,2), b=(-1,0), σ=(2,-1), x0=0.5, ℓ=2",
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry() {
        for name in BUILTIN_NAMES {
            assert_eq!(builtin::<f64>(name, None).unwrap().model.name(), name);
        }
        assert!(builtin::<f64>("nope", None).is_err());
    }

    #[test]
    fn ginzburg32_radius_formula() {
        let b = ginzburg32::<f64>();
        let env = b.model.growth_envelope().unwrap();
        for &delta in &[2f64.powi(-6), 2f64.powi(-12), 1e-5] {
            let r = env.inverse(0, b.defaults.finite_step.h(delta)).unwrap();
            let expected = (401.0 * delta.powf(-0.2) - 1.0).sqrt();
            assert!((r - expected).abs() < 1e-12 * expected);
        }
    }

    #[test]
    fn ginzburg53_lipschitz_envelope() {
        let b = ginzburg53::<f64>(1.5).unwrap();
        let env = b.model.lipschitz_envelope().unwrap();
        assert_eq!(env.eval(0, 2.0), 13.0);
        assert!(env.is_constant(1));
        assert_eq!(env.eval(1, 5.0), 2.0);
    }
}
