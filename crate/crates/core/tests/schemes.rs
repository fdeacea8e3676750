use proptest::prelude::*;
use switchsde::markov::GeneratorMatrix;
use switchsde::model::*;
use switchsde::rng::{family, path_stream};
use switchsde::schemes::*;

fn config<T: switchsde::Scalar>(
    b: &BuiltinModel<T>,
    delta: T,
    variant: SchemeVariant,
) -> SchemeConfig<T> {
    let step_control = match variant {
        SchemeVariant::TruncatedMeasure => b.defaults.measure_step,
        _ => Some(b.defaults.finite_step),
    };
    SchemeConfig {
        delta,
        horizon: b.defaults.horizon,
        variant,
        step_control,
        x0: b.defaults.x0.clone(),
        regime: b.defaults.regime,
    }
}

/// Linear two-regime model whose envelopes are constant, so no truncation
/// ever happens.
fn linear_constant_envelopes() -> HybridModel<f64> {
    let coeffs = FnCoefficients::new(
        2,
        2,
        2,
        |x: &[f64], i: usize, out: &mut [f64]| {
            let a = if i == 0 { -0.5 } else { 0.3 };
            out[0] = a * x[0] + 0.1 * x[1];
            out[1] = -x[1];
        },
        |x: &[f64], i: usize, out: &mut [f64]| {
            let s = if i == 0 { 0.4 } else { 0.2 };
            out.copy_from_slice(&[s * x[0], 0.0, 0.1 * x[1], s * x[1]]);
        },
    );
    let env = Envelope::uniform(EnvelopeFn::Constant(10.0), 2);
    HybridModel::new(
        "linear",
        coeffs,
        GeneratorMatrix::two_state(1.5, 0.7).unwrap(),
    )
    .unwrap()
    .with_growth_envelope(env.clone())
    .unwrap()
    .with_lipschitz_envelope(env)
    .unwrap()
}

#[test]
fn simulate_is_deterministic() {
    let b = volatility31::<f64>();
    let cfg = config(&b, 2f64.powi(-8), SchemeVariant::TruncatedFinite);
    let p1 = simulate(&b.model, &cfg, &mut path_stream(11, family::PRIMARY, 3)).unwrap();
    let p2 = simulate(&b.model, &cfg, &mut path_stream(11, family::PRIMARY, 3)).unwrap();
    assert_eq!(p1, p2);
    let p3 = simulate(&b.model, &cfg, &mut path_stream(11, family::PRIMARY, 4)).unwrap();
    assert_ne!(p1.terminal(), p3.terminal());
}

#[test]
fn single_precision_paths_run() {
    let b = volatility31::<f32>();
    let cfg = config(&b, 2f32.powi(-8), SchemeVariant::TruncatedFinite);
    let p = simulate(&b.model, &cfg, &mut path_stream(1, family::PRIMARY, 0)).unwrap();
    assert!(p.terminal().iter().all(|v| v.is_finite()));
}

#[test]
fn constant_envelopes_make_all_variants_coincide() {
    let model = linear_constant_envelopes();
    let base = SchemeConfig {
        delta: 2f64.powi(-7),
        horizon: 3.0,
        variant: SchemeVariant::PlainEm,
        step_control: None,
        x0: vec![1.0, -2.0],
        regime: 1,
    };
    let finite = SchemeConfig {
        variant: SchemeVariant::TruncatedFinite,
        step_control: Some(StepControl::power_law(10.0, 0.25, StepVariant::Plain).unwrap()),
        ..base.clone()
    };
    let measure = SchemeConfig {
        variant: SchemeVariant::TruncatedMeasure,
        step_control: Some(
            StepControl::power_law(10.0, 0.25, StepVariant::Measure { theta: 0.1 }).unwrap(),
        ),
        ..base.clone()
    };
    for seed in 0..20 {
        let run = |c: &SchemeConfig<f64>| {
            simulate(&model, c, &mut path_stream(seed, family::PRIMARY, 0)).unwrap()
        };
        let plain = run(&base);
        let a = run(&finite);
        let b = run(&measure);
        for k in 0..=plain.steps() {
            assert_eq!(plain.state(k), a.state(k));
            assert_eq!(plain.state(k), b.state(k));
            assert_eq!(a.state(k), a.pre_truncation(k));
        }
        assert_eq!(plain.regimes(), a.regimes());
    }
}

#[test]
fn plain_em_blows_up_where_truncation_does_not() {
    let b = ginzburg32::<f64>();
    let plain = config(&b, 2f64.powi(-6), SchemeVariant::PlainEm);
    let trunc = config(&b, 2f64.powi(-6), SchemeVariant::TruncatedFinite);
    let mut blown = 0;
    for path in 0..20 {
        match simulate(&b.model, &plain, &mut path_stream(5, family::PRIMARY, path)) {
            Err(switchsde::Error::NonFinite { step, .. }) => {
                blown += 1;
                assert!(step >= 1);
            }
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => {}
        }
        simulate(&b.model, &trunc, &mut path_stream(5, family::PRIMARY, path)).unwrap();
    }
    assert!(blown > 0);
}

#[test]
fn closed_form_follows_the_simulated_chain() {
    let b = ginzburg32::<f64>();
    let delta = 2f64.powi(-10);
    let cfg = config(&b, delta, SchemeVariant::TruncatedFinite);
    let path = simulate(&b.model, &cfg, &mut path_stream(9, family::PRIMARY, 0)).unwrap();
    let params = b.model.cubic_params().unwrap();
    let exact =
        exact_ginzburg_landau(path.regimes(), path.increments(), params, 20.0, delta).unwrap();
    assert_eq!(exact.len(), path.steps() + 1);

    // Independent evaluation of the same formula with left-endpoint sums.
    let (mut a, mut integral) = (0.0f64, 0.0f64);
    for k in 0..path.steps() {
        let r = path.regimes()[k];
        integral += params.b[r] * (2.0 * a).exp() * delta;
        a += (params.a[r] - 0.5 * params.sigma[r] * params.sigma[r]) * delta
            + params.sigma[r] * path.increment(k)[0];
    }
    let x = 20.0 * a.exp() / (1.0 - 2.0 * 400.0 * integral).sqrt();
    let last = *exact.last().unwrap();
    assert!((last - x).abs() <= 1e-10 * (1.0 + x.abs()), "{last} vs {x}");
    assert!((last - path.terminal()[0]).abs() < 0.5);
}

#[test]
fn closed_form_reduces_to_gbm() {
    let params = CubicParams::new(vec![0.7], vec![0.0], vec![0.3]).unwrap();
    let db = [0.1, -0.05, 0.2, 0.0];
    let delta = 0.01;
    let exact = exact_ginzburg_landau(&[0, 0, 0, 0], &db, &params, 2.0, delta).unwrap();
    let w: f64 = db.iter().sum();
    let gbm = 2.0 * ((0.7 - 0.045) * 0.04 + 0.3 * w).exp();
    assert!((exact[4] - gbm).abs() < 1e-13);
}

#[test]
fn backward_step_on_gbm_matches_linear_solve() {
    // With b → 0⁻ the cubic root approaches y(1+σΔB)/(1-aΔ).
    let (y, db, a, sigma, delta) = (1.3f64, 0.02, 0.5, 0.4, 0.01);
    let root = step_backward_cubic(y, db, a, -1e-12, sigma, delta).unwrap();
    let linear = y * (1.0 + sigma * db) / (1.0 - a * delta);
    assert!((root - linear).abs() < 1e-9);
}

fn bisection_root(y: f64, db: f64, a: f64, b: f64, sigma: f64, delta: f64) -> f64 {
    let f = |v: f64| v - (a * v + b * v * v * v) * delta - y - sigma * y * db;
    let rhs = y + sigma * y * db;
    let mut lo = -(rhs.abs() + 1.0) * 2.0;
    let mut hi = -lo;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truncated_states_stay_within_radius(seed in 0u64..1000, k in 6i32..11, measure in any::<bool>()) {
        let b = volatility31::<f64>();
        let variant = if measure { SchemeVariant::TruncatedMeasure } else { SchemeVariant::TruncatedFinite };
        let mut cfg = config(&b, 2f64.powi(-k), variant);
        cfg.horizon = 2.0;
        let stepper = Stepper::new(&b.model, &cfg).unwrap();
        let path = simulate(&b.model, &cfg, &mut path_stream(seed, family::PRIMARY, 0)).unwrap();
        for j in 0..=path.steps() {
            let r = path.regimes()[j];
            let y = path.state(j);
            prop_assert!(y.iter().map(|v| v * v).sum::<f64>().sqrt() <= stepper.truncation().radius(r));
        }
    }

    #[test]
    fn ginzburg_truncation_contains_paths(seed in 0u64..1000) {
        let b = ginzburg32::<f64>();
        let cfg = config(&b, 2f64.powi(-6), SchemeVariant::TruncatedFinite);
        let stepper = Stepper::new(&b.model, &cfg).unwrap();
        let path = simulate(&b.model, &cfg, &mut path_stream(seed, family::PRIMARY, 0)).unwrap();
        for j in 0..=path.steps() {
            prop_assert!(path.state(j)[0].abs() <= stepper.truncation().radius(path.regimes()[j]));
        }
    }

    #[test]
    fn backward_step_solves_the_implicit_equation(
        y in -50.0f64..50.0,
        z in -4.0f64..4.0,
        regime in 0usize..2,
        k in 4i32..16,
    ) {
        let params = ginzburg32::<f64>().model.cubic_params().unwrap().clone();
        let (a, b, sigma) = (params.a[regime], params.b[regime], params.sigma[regime]);
        let delta = 2f64.powi(-k);
        let db = z * delta.sqrt();
        let root = step_backward_cubic(y, db, a, b, sigma, delta).unwrap();
        let residual = (root - (a * root + b * root.powi(3)) * delta - y - sigma * y * db).abs();
        prop_assert!(residual < 1e-10 * (1.0 + y.abs().powi(3)), "residual {residual}");
        prop_assert!((root - bisection_root(y, db, a, b, sigma, delta)).abs() < 1e-9);
    }
}
