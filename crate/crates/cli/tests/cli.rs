use std::fs;
use std::path::Path;
use std::process::Command as Process;

use proptest::prelude::*;
use switchsde::model::BUILTIN_NAMES;
use switchsde::schemes::SchemeVariant;
use switchsde_cli::{
    list_models, run, CliError, Command, ExperimentConfig, ModelRef, Sampling, StepSpec,
};

fn bin() -> Process {
    Process::new(env!("CARGO_BIN_EXE_switchsde"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn defaults_round_trip() {
    for command in Command::ALL {
        for model in BUILTIN_NAMES {
            for large in [false, true] {
                let cfg = ExperimentConfig::defaults(command, model, large).unwrap();
                let text = cfg.serialize();
                let back = ExperimentConfig::parse(&text, None, false).unwrap();
                assert_eq!(back, cfg, "{command} {model}");
                assert_eq!(back.serialize(), text);
            }
        }
    }
}

fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
    (
        prop::sample::select(Command::ALL.to_vec()),
        any::<u64>(),
        1usize..5000,
        prop::option::of(1usize..16),
        3usize..8,
        -20i32..-1,
        0.1f64..100.0,
        prop::option::of(0.01f64..0.49),
        any::<bool>(),
        prop::sample::select(vec![SchemeVariant::TruncatedFinite, SchemeVariant::PlainEm]),
        1e-3f64..0.5,
    )
        .prop_map(
            |(
                command,
                seed,
                paths,
                workers,
                levels,
                top,
                horizon,
                theta,
                along,
                variant,
                alpha,
            )| {
                let mut cfg = ExperimentConfig::defaults(command, "volatility31", false).unwrap();
                cfg.seed = seed;
                cfg.paths = paths;
                cfg.workers = workers;
                cfg.deltas = (0..levels as i32).map(|k| 2f64.powi(top - k)).collect();
                cfg.reference_delta = 2f64.powi(top - levels as i32 - 2);
                cfg.horizon = horizon;
                cfg.step = Some(StepSpec {
                    scale: horizon,
                    exponent: 0.3,
                    k: horizon * 1.5,
                    theta,
                });
                cfg.sampling = if along {
                    Sampling::AlongPath
                } else {
                    Sampling::AcrossPaths
                };
                cfg.variant = variant;
                cfg.alpha = alpha;
                cfg.generator = Some(vec![-alpha, alpha, 1.0 / 3.0, -1.0 / 3.0]);
                cfg
            },
        )
}

proptest! {
    #[test]
    fn parse_serialize_is_identity(cfg in arb_config()) {
        let text = cfg.serialize();
        let back = ExperimentConfig::parse(&text, None, false).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.serialize(), text);
    }
}

#[test]
fn power_notation_and_partial_files() {
    let cfg = ExperimentConfig::parse(
        "[experiment]\ncommand = convergence\nseed = 5\n[scheme]\ndeltas = 2^-4, 2^-5, 2^-6\nreference_delta = 2^-8\n",
        None,
        false,
    )
    .unwrap();
    assert_eq!(cfg.deltas, vec![0.0625, 0.03125, 0.015625]);
    assert_eq!(cfg.reference_delta, 2f64.powi(-8));
    assert_eq!(cfg.seed, 5);
    assert_eq!(
        cfg.model,
        ModelRef::Builtin {
            name: "volatility31".into(),
            gamma: None
        }
    );
}

#[test]
fn invalid_configs_are_config_errors() {
    let cases = [
        "[scheme]\nfoo = 1\n",
        "[scheme]\ndeltas = 2^-6, 2^-4, 2^-5\n",
        "[model]\nname = nope\n",
        "[model]\nfile = /does/not/exist.sde\n",
        "[scheme]\ndelta = abc\n",
        "[scheme]\nregime = 0\n",
        "[bogus]\n",
    ];
    for text in cases {
        let err = ExperimentConfig::parse(text, Some(Command::Convergence), false).unwrap_err();
        assert!(matches!(err, CliError::Config(_)), "{text}: {err:?}");
        assert_eq!(err.exit_code(), 2);
    }
}

#[test]
fn registry_lists_the_three_models() {
    let text = list_models();
    for name in BUILTIN_NAMES {
        assert!(text.contains(name));
    }
    assert_eq!(BUILTIN_NAMES.len(), 3);
    assert!(text.contains("γ12=1, γ21=4, a=(1,0.5), b=(-1,-1), σ=(2,1), x0=20, ℓ=1"));
    assert!(text.contains("a=(1,2), b=(-1,0), σ=(2,-1), x0=0.5, ℓ=2"));
    let out = bin().arg("list-models").output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let status = bin()
        .args(["simulate", "--seed", "17", "--out"])
        .arg(&first)
        .status()
        .unwrap();
    assert!(status.success());
    let second = dir.path().join("b");
    let status = bin()
        .args(["simulate", "--workers", "2", "--config"])
        .arg(first.join("manifest.ini"))
        .arg("--out")
        .arg(&second)
        .status()
        .unwrap();
    assert!(status.success());
    let a = fs::read(first.join("path.csv")).unwrap();
    assert_eq!(a, fs::read(second.join("path.csv")).unwrap());
    let header = String::from_utf8(a).unwrap();
    assert!(header.starts_with("k,t,r,y1,y2,ytilde1,ytilde2\n"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.ini", "[scheme]\nunknown = 3\n");
    let out = bin()
        .args(["convergence", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown"));

    let blowup = write(
        dir.path(),
        "blowup.ini",
        "[model]\nname = ginzburg32\n[scheme]\nvariant = plain-em\ndelta = 2^-6\nhorizon = 2\n",
    );
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&blowup)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    let out = bin().args(["simulate", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn small_convergence_run_writes_table_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::defaults(Command::Convergence, "volatility31", false).unwrap();
    cfg.paths = 40;
    cfg.horizon = 0.25;
    cfg.deltas = (4..=7).map(|k| 2f64.powi(-k)).collect();
    cfg.reference_delta = 2f64.powi(-9);
    cfg.out_dir = dir.path().to_path_buf();
    let report = run(&cfg).unwrap();
    assert!(report.records[0].starts_with("fit.slope="));
    let table = fs::read_to_string(dir.path().join("errors.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("delta,error,stderr,paths"));
    assert_eq!(table.lines().count(), 5);
    let svg = fs::read_to_string(dir.path().join("convergence.svg")).unwrap();
    assert!(
        svg.starts_with("<svg") && svg.contains("<polyline") && svg.contains("stroke-dasharray")
    );
    assert!(dir.path().join("slope.txt").is_file());
    let again = run(&cfg).unwrap();
    assert_eq!(report, again);
}

#[test]
fn small_invariant_run_writes_ecdfs_and_ks_records() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::defaults(Command::Invariant, "volatility31", false).unwrap();
    cfg.paths = 60;
    cfg.horizon = 4.0;
    cfg.delta = 2f64.powi(-6);
    cfg.reference_delta = 2f64.powi(-8);
    cfg.out_dir = dir.path().to_path_buf();
    let report = run(&cfg).unwrap();
    for name in [
        "ecdf_x1_coarse.csv",
        "ecdf_x2_fine.csv",
        "ks.txt",
        "density.csv",
        "samples_fine.csv",
    ] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let ks: Vec<&String> = report
        .records
        .iter()
        .filter(|r| r.contains("ks.statistic="))
        .collect();
    assert_eq!(ks.len(), 2);
    assert!(ks.iter().all(|r| r.contains("ks.reject=")));
}

#[test]
fn dsl_model_file_runs() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(
        dir.path(),
        "gl.sde",
        "generator = -1, 1, 4, -4\nm = 2\n[regime 1]\ndrift = x - x^3\ndiff = 2*x\n[regime 2]\ndrift = 0.5*x - x^3\ndiff = x\n\
         [envelope 1]\nphi = 4*(u^2+1)\n[envelope 2]\nphi = 4*(u^2+1)\n",
    );
    let cfg_text = format!(
        "[model]\nfile = {}\n[scheme]\nx0 = 2\nregime = 1\nhorizon = 1\ndelta = 2^-8\nstep_scale = 8\nstep_exponent = 0.2\n",
        model.display()
    );
    let cfg_path = write(dir.path(), "run.ini", &cfg_text);
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("simulate.steps=256"));
}
