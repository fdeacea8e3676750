//! Experiment orchestration for each subcommand.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use switchsde::linalg::Matrix;
use switchsde::markov::{critical_order, p_star};
use switchsde::measure::{
    density_grid, ecdf, invariant_sample, ks_two_sample, wasserstein_p, SamplingMode,
    EXACT_TRANSPORT_CAP,
};
use switchsde::model::{check_assumption_a31, check_assumption_a44, HybridModel};
use switchsde::montecarlo::{
    fit_rate, lyapunov_estimate, moment_trace, strong_error, Ensemble, ErrorMetric, Reference,
    StrongErrorPlan,
};
use switchsde::rng::family;
use switchsde::schemes::{simulate, SchemeConfig, SchemeVariant};

use crate::config::{Command, ExperimentConfig, Sampling};
use crate::plot::loglog_svg;
use crate::CliError;

/// Files written and one-line records printed by a run.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub records: Vec<String>,
}

struct Output {
    dir: PathBuf,
    report: RunReport,
}

impl Output {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create '{}': {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            report: RunReport::default(),
        })
    }

    fn write(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let io =
            |e: std::io::Error| CliError::Io(format!("cannot write '{}': {e}", path.display()));
        let mut w = BufWriter::new(File::create(&path).map_err(io)?);
        f(&mut w).map_err(io)?;
        w.flush().map_err(io)?;
        self.report.files.push(path);
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        self.write(name, |w| w.write_all(body.as_bytes()))
    }

    fn record(&mut self, line: String) {
        self.report.records.push(line);
    }
}

/// Runs the experiment and writes its artifacts, including `manifest.ini`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let model = cfg.load_model()?;
    let mut out = Output::new(&cfg.out_dir)?;
    out.text("manifest.ini", &cfg.serialize())?;
    match cfg.command {
        Command::Simulate => run_simulate(cfg, &model, &mut out)?,
        Command::Convergence | Command::ConvergenceExact => run_convergence(cfg, &model, &mut out)?,
        Command::Invariant => run_invariant(cfg, &model, &mut out)?,
        Command::Stability => run_stability(cfg, &model, &mut out)?,
        Command::CheckAssumptions => run_assumptions(cfg, &model, &mut out)?,
    }
    Ok(out.report)
}

fn scheme(
    cfg: &ExperimentConfig,
    delta: f64,
    variant: SchemeVariant,
) -> Result<SchemeConfig<f64>, CliError> {
    Ok(SchemeConfig {
        delta,
        horizon: cfg.horizon,
        variant,
        step_control: cfg.step_control(variant)?,
        x0: cfg.x0.clone(),
        regime: cfg.regime,
    })
}

fn ensemble(cfg: &ExperimentConfig) -> Ensemble {
    Ensemble::new(cfg.paths, cfg.seed).with_workers(cfg.workers)
}

fn run_simulate(
    cfg: &ExperimentConfig,
    model: &HybridModel<f64>,
    out: &mut Output,
) -> Result<(), CliError> {
    let sc = scheme(cfg, cfg.delta, cfg.variant)?;
    let path = simulate(model, &sc, &mut ensemble(cfg).rng(0))?;
    let truncated = matches!(
        cfg.variant,
        SchemeVariant::TruncatedFinite | SchemeVariant::TruncatedMeasure
    );
    out.write("path.csv", |w| path.write_csv(w, truncated))?;
    let terminal: Vec<String> = path.terminal().iter().map(f64::to_string).collect();
    out.record(format!(
        "simulate.steps={} simulate.terminal={} simulate.regime={}",
        path.steps(),
        terminal.join(","),
        path.regimes().last().map_or(0, |r| r + 1)
    ));
    Ok(())
}

fn run_convergence(
    cfg: &ExperimentConfig,
    model: &HybridModel<f64>,
    out: &mut Output,
) -> Result<(), CliError> {
    let exact = cfg.command == Command::ConvergenceExact;
    let plan = StrongErrorPlan {
        scheme: scheme(cfg, cfg.deltas[0], cfg.variant)?,
        reference: if exact {
            Reference::ClosedForm {
                delta: cfg.reference_delta,
            }
        } else {
            Reference::FineStep {
                delta: cfg.reference_delta,
            }
        },
        deltas: cfg.deltas.clone(),
        metric: if exact {
            ErrorMetric::Rms
        } else {
            ErrorMetric::Moment { q: cfg.q }
        },
        ensemble: ensemble(cfg),
    };
    let table = strong_error(model, &plan)?;
    out.write("errors.csv", |w| table.write_csv(w))?;
    let fit = fit_rate(&table)?;
    let excluded: Vec<String> = fit.excluded.iter().map(f64::to_string).collect();
    let record = format!(
        "fit.slope={} fit.intercept={} fit.residual={} fit.excluded={} reference_failures={}",
        fit.slope,
        fit.intercept,
        fit.residual,
        excluded.join(","),
        table.reference_failures
    );
    out.text("slope.txt", &format!("{record}\n"))?;
    out.record(record);
    if cfg.svg {
        let points: Vec<(f64, f64)> = table.rows.iter().map(|r| (r.delta, r.error)).collect();
        let (title, y_label) = if exact {
            (
                "RMS error against the closed-form solution".to_string(),
                "RMS error",
            )
        } else {
            (format!("strong error E|X(T)-Y(T)|^{}", cfg.q), "error")
        };
        let svg = loglog_svg(&title, "step size", y_label, &points, 0.5);
        out.text("convergence.svg", &svg)?;
    }
    Ok(())
}

fn run_invariant(
    cfg: &ExperimentConfig,
    model: &HybridModel<f64>,
    out: &mut Output,
) -> Result<(), CliError> {
    let n = model.state_dim();
    let mode = match cfg.sampling {
        Sampling::AcrossPaths => SamplingMode::AcrossPaths,
        Sampling::AlongPath => SamplingMode::AlongPath {
            burn_in: cfg.burn_in,
            thinning: cfg.thinning,
        },
    };
    let coarse = invariant_sample(
        model,
        &scheme(cfg, cfg.delta, cfg.variant)?,
        mode,
        ensemble(cfg),
    )?;
    let fine = invariant_sample(
        model,
        &scheme(cfg, cfg.reference_delta, cfg.variant)?,
        mode,
        ensemble(cfg).with_family(family::INDEPENDENT),
    )?;
    out.write("samples_coarse.csv", |w| coarse.write_csv(w))?;
    out.write("samples_fine.csv", |w| fine.write_csv(w))?;
    let mut ks_lines = String::new();
    for j in 0..n {
        let (a, b) = (coarse.component(j), fine.component(j));
        let (fa, fb) = (ecdf(&a)?, ecdf(&b)?);
        out.write(&format!("ecdf_x{}_coarse.csv", j + 1), |w| fa.write_csv(w))?;
        out.write(&format!("ecdf_x{}_fine.csv", j + 1), |w| fb.write_csv(w))?;
        let ks = ks_two_sample(&a, &b, cfg.alpha)?;
        let line = format!("component={} {ks}", j + 1);
        ks_lines.push_str(&line);
        ks_lines.push('\n');
        out.record(line);
    }
    out.text("ks.txt", &ks_lines)?;

    let size = coarse.len().min(fine.len()).min(EXACT_TRANSPORT_CAP);
    let w = wasserstein_p(
        &coarse.subsample(size, cfg.seed)?,
        &fine.subsample(size, cfg.seed + 1)?,
        cfg.p.min(1.0),
    )?;
    let line = format!(
        "w.p={} w.distance={} w.upper_bound={} w.atoms={}",
        cfg.p.min(1.0),
        w.distance,
        w.upper_bound,
        w.atoms
    );
    out.text("wasserstein.txt", &format!("{line}\n"))?;
    out.record(line);

    if n == 2 {
        let bounds = [0, 1].map(|j| {
            let f = ecdf(&coarse.component(j)).expect("nonempty sample");
            let (lo, hi) = (f.quantile(0.005), f.quantile(0.995));
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        });
        let grid = density_grid(&coarse, (0, 1), bounds, (40, 40))?;
        out.write("density.csv", |w| grid.write_csv(w))?;
    }
    Ok(())
}

fn run_stability(
    cfg: &ExperimentConfig,
    model: &HybridModel<f64>,
    out: &mut Output,
) -> Result<(), CliError> {
    let sc = scheme(cfg, cfg.delta, cfg.variant)?;
    let est = lyapunov_estimate(model, &sc, ensemble(cfg))?;
    out.write("lyapunov.csv", |w| {
        writeln!(w, "path,exponent")?;
        for (j, v) in est.per_path.iter().enumerate() {
            writeln!(w, "{j},{v}")?;
        }
        Ok(())
    })?;
    let record = format!(
        "lyapunov.mean={} lyapunov.stderr={} lyapunov.zero_hits={} lyapunov.divergent={}",
        est.mean, est.stderr, est.zero_hits, est.divergent
    );
    out.text("stability.txt", &format!("{record}\n"))?;
    out.record(record);
    let samples = 200usize;
    let times: Vec<f64> = (0..=samples)
        .map(|k| cfg.horizon * k as f64 / samples as f64)
        .collect();
    let trace = moment_trace(model, &sc, cfg.p, &times, ensemble(cfg))?;
    out.write("moments.csv", |w| trace.write_csv(w))?;
    Ok(())
}

fn run_assumptions(
    cfg: &ExperimentConfig,
    model: &HybridModel<f64>,
    out: &mut Output,
) -> Result<(), CliError> {
    let budget = 20_000;
    let q = vec![Matrix::identity(model.state_dim())];
    let reports = [
        check_assumption_a31(model, &q, cfg.p_bar, budget)?,
        check_assumption_a44(model, cfg.rho, budget)?,
    ];
    let mut text = String::new();
    for r in &reports {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut line = format!(
            "assumption={} order={} constants={} global_max={} margin={} samples={} q_varies={}",
            r.id,
            r.order,
            list(&r.constants),
            list(&r.global_max),
            r.margin,
            r.samples,
            r.q_varies
        );
        if let Some(pd) = r.pi_dot {
            line.push_str(&format!(" pi_dot={pd}"));
            if pd < 0.0 {
                let gamma = model.generator();
                line.push_str(&format!(
                    " p_star={} critical_order={}",
                    p_star(gamma, &r.constants)?,
                    critical_order(gamma, &r.constants)?
                ));
            }
        }
        text.push_str(&line);
        text.push('\n');
        out.record(line);
    }
    out.text("assumptions.txt", &text)?;
    Ok(())
}
