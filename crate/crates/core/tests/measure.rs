use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use switchsde::markov::GeneratorMatrix;
use switchsde::measure::*;
use switchsde::model::*;
use switchsde::montecarlo::Ensemble;
use switchsde::scalar::mean_and_stderr;
use switchsde::schemes::{SchemeConfig, SchemeVariant};

fn measure_1d(points: &[(f64, usize)]) -> EmpiricalMeasure {
    EmpiricalMeasure::new(
        1,
        points.iter().map(|p| vec![p.0]).collect(),
        points.iter().map(|p| p.1).collect(),
    )
    .unwrap()
}

fn arb_measure(n: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    prop::collection::vec((-3.0f64..3.0, 0usize..2), n).prop_map(|p| measure_1d(&p))
}

fn brute_force(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> f64 {
    fn perms(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for rest in perms(k - 1) {
            for pos in 0..=rest.len() {
                let mut v = rest.clone();
                v.insert(pos, k - 1);
                out.push(v);
            }
        }
        out
    }
    perms(mu.len())
        .iter()
        .map(|s| {
            s.iter()
                .enumerate()
                .map(|(a, &b)| {
                    (mu.point(a)[0] - nu.point(b)[0]).abs().powf(p)
                        + if mu.regime(a) != nu.regime(b) {
                            1.0
                        } else {
                            0.0
                        }
                })
                .sum::<f64>()
                / mu.len() as f64
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn three_atoms_match_enumeration() {
    let mu = measure_1d(&[(0.0, 0), (1.0, 0), (5.0, 0)]);
    let nu = measure_1d(&[(0.5, 0), (2.0, 0), (-1.0, 0)]);
    let w = wasserstein_p(&mu, &nu, 1.0).unwrap();
    assert!((w.distance - brute_force(&mu, &nu, 1.0)).abs() < 1e-12);
}

#[test]
fn single_atoms_have_forced_cost() {
    let mu = EmpiricalMeasure::new(2, vec![vec![0.0, 0.0]], vec![0]).unwrap();
    let nu = EmpiricalMeasure::new(2, vec![vec![3.0, 4.0]], vec![1]).unwrap();
    let w = wasserstein_p(&mu, &nu, 0.5).unwrap();
    assert!((w.distance - (5f64.sqrt() + 1.0)).abs() < 1e-12);
}

#[test]
fn oversized_supports_ask_for_subsampling() {
    let pts = vec![vec![0.0]; EXACT_TRANSPORT_CAP + 1];
    let mu = EmpiricalMeasure::new(1, pts, vec![0; EXACT_TRANSPORT_CAP + 1]).unwrap();
    let err = wasserstein_p(&mu, &mu, 0.5).unwrap_err().to_string();
    assert!(err.contains("subsample"), "{err}");
    let small = mu.subsample(10, 1).unwrap();
    assert_eq!(wasserstein_p(&small, &small, 0.5).unwrap().distance, 0.0);
}

#[test]
fn weights_must_be_a_probability() {
    assert!(EmpiricalMeasure::with_weights(
        1,
        vec![vec![0.0], vec![1.0]],
        vec![0, 0],
        vec![0.5, 0.6]
    )
    .is_err());
    assert!(EmpiricalMeasure::with_weights(
        1,
        vec![vec![0.0], vec![1.0]],
        vec![0, 0],
        vec![-0.5, 1.5]
    )
    .is_err());
}

#[test]
fn csv_layout() {
    let mu = EmpiricalMeasure::new(2, vec![vec![1.0, 2.0]], vec![1]).unwrap();
    let mut out = Vec::new();
    mu.write_csv(&mut out).unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        "x1,x2,regime,weight\n1,2,2,1\n"
    );
}

#[test]
fn uniform_samples_give_a_flat_histogram() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 20_000;
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let mu = EmpiricalMeasure::new(2, pts, vec![0; n]).unwrap();
    let g = density_grid(&mu, (0, 1), [(0.0, 1.0), (0.0, 1.0)], (8, 8)).unwrap();
    assert!((g.total_mass() - 1.0).abs() < 1e-12);
    let p = 1.0 / 64.0;
    let band = 3.0 * (n as f64 * p * (1.0 - p)).sqrt();
    for d in &g.density {
        let count = d * g.bin_area() * n as f64;
        assert!((count - n as f64 * p).abs() < band, "count {count}");
    }
    let empty = EmpiricalMeasure::new(2, vec![], vec![]).unwrap();
    assert!(density_grid(&empty, (0, 1), [(0.0, 1.0), (0.0, 1.0)], (8, 8)).is_err());
}

#[test]
fn frozen_state_samples_the_stationary_chain() {
    let coeffs = FnCoefficients::new(
        1,
        1,
        2,
        |_: &[f64], _: usize, out: &mut [f64]| out[0] = 0.0,
        |_: &[f64], _: usize, out: &mut [f64]| out[0] = 0.0,
    );
    let gen = GeneratorMatrix::two_state(1.0, 3.0).unwrap();
    let pi = gen.stationary_distribution().unwrap();
    let model = HybridModel::new("frozen", coeffs, gen)
        .unwrap()
        .with_lipschitz_envelope(Envelope::uniform(EnvelopeFn::Constant(1.0), 2))
        .unwrap();
    let cfg = SchemeConfig {
        delta: 0.1,
        horizon: 5.0,
        variant: SchemeVariant::TruncatedMeasure,
        step_control: Some(
            StepControl::power_law(1.0, 0.2, StepVariant::Measure { theta: 0.1 }).unwrap(),
        ),
        x0: vec![0.7],
        regime: 0,
    };
    let mu = invariant_sample(
        &model,
        &cfg,
        SamplingMode::AcrossPaths,
        Ensemble::new(100_000, 4),
    )
    .unwrap();
    assert_eq!(mu.len(), 100_000);
    assert!((0..mu.len()).all(|k| mu.point(k)[0] == 0.7));
    let marginal = mu.regime_marginal(2);
    let tv: f64 = marginal
        .iter()
        .zip(pi.probabilities())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.02, "total variation {tv}");

    let along = invariant_sample(
        &model,
        &cfg,
        SamplingMode::along_path_default(cfg.horizon),
        Ensemble::new(3, 4),
    )
    .unwrap();
    // Steps 25, 35 and 45 of 50 on each of three paths.
    assert_eq!(along.len(), 9);
}

#[test]
fn distance_between_starts_shrinks_with_burn_in() {
    let b = volatility31::<f64>();
    let delta = 2f64.powi(-6);
    let starts = [(vec![1.0, 1.0], 1usize), (vec![4.0, -3.0], 0usize)];
    let burn_ins = [1.0, 5.0, 25.0];
    let mut stats = Vec::new();
    for &burn in &burn_ins {
        let mut values = Vec::new();
        for rep in 0..20u64 {
            let sample = |k: usize| {
                let cfg = SchemeConfig {
                    delta,
                    horizon: burn,
                    variant: SchemeVariant::TruncatedMeasure,
                    step_control: b.defaults.measure_step,
                    x0: starts[k].0.clone(),
                    regime: starts[k].1,
                };
                invariant_sample(
                    &b.model,
                    &cfg,
                    SamplingMode::AcrossPaths,
                    Ensemble::new(100, 1000 * rep + k as u64),
                )
                .unwrap()
            };
            values.push(wasserstein_p(&sample(0), &sample(1), 0.5).unwrap().distance);
        }
        stats.push(mean_and_stderr(&values));
    }
    for w in stats.windows(2) {
        let ((m0, s0), (m1, s1)) = (w[0], w[1]);
        assert!(m1 <= m0 + s0.max(s1), "{stats:?}");
    }
    assert!(stats[2].0 < stats[0].0, "{stats:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transport_matches_enumeration(mu in arb_measure(4), nu in arb_measure(4), p in 0.1f64..=1.0) {
        let w = wasserstein_p(&mu, &nu, p).unwrap();
        prop_assert!((w.distance - brute_force(&mu, &nu, p)).abs() < 1e-12);
        prop_assert!(w.upper_bound >= w.distance);
    }

    #[test]
    fn transport_is_a_metric(
        a in arb_measure(6),
        b in arb_measure(6),
        c in arb_measure(6),
        p in 0.1f64..=1.0,
    ) {
        let d = |x: &EmpiricalMeasure, y: &EmpiricalMeasure| wasserstein_p(x, y, p).unwrap().distance;
        let (ab, ba, bc, ac) = (d(&a, &b), d(&b, &a), d(&b, &c), d(&a, &c));
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn transport_is_permutation_invariant(a in arb_measure(7), seed in any::<u64>()) {
        let shuffled = a.subsample(a.len(), seed).unwrap();
        prop_assert_eq!(wasserstein_p(&a, &shuffled, 0.5).unwrap().distance, 0.0);
    }

    #[test]
    fn ks_ignores_monotone_transforms(
        s1 in prop::collection::vec(-5.0f64..5.0, 1..60),
        s2 in prop::collection::vec(-5.0f64..5.0, 1..60),
    ) {
        let f = |v: &f64| v.exp() * 3.0 + v.powi(3);
        let t1: Vec<f64> = s1.iter().map(f).collect();
        let t2: Vec<f64> = s2.iter().map(f).collect();
        let a = ks_two_sample(&s1, &s2, 0.02).unwrap();
        let b = ks_two_sample(&t1, &t2, 0.02).unwrap();
        prop_assert_eq!(a.statistic, b.statistic);
        prop_assert!((0.0..=1.0).contains(&a.statistic));
        prop_assert_eq!(a.reject, a.statistic > a.critical);
    }

    #[test]
    fn ecdf_is_a_distribution_function(s in prop::collection::vec(-5.0f64..5.0, 1..40), t in -6.0f64..6.0, dt in 0.0f64..3.0) {
        let f = ecdf(&s).unwrap();
        prop_assert!(f.eval(t) <= f.eval(t + dt));
        prop_assert_eq!(f.eval(-10.0), 0.0);
        prop_assert_eq!(f.eval(10.0), 1.0);
    }
}
