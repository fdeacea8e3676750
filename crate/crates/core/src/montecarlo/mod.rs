//! Path ensembles: strong-error estimation against a coupled reference,
//! convergence-rate fits, moment traces and Lyapunov-exponent estimates.
//!
//! Every path draws from its own stream `(seed, family, path)` and results
//! are reduced in path order, so output does not depend on the number of
//! worker threads.

mod strong;

pub use strong::{
    coupled_terminals, fit_rate, strong_error, CoupledTerminal, ErrorMetric, ErrorRow, ErrorTable,
    RateFit, Reference, StrongErrorPlan,
};

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::HybridModel;
use crate::rng::{family, path_stream, PathRng};
use crate::scalar::{mean_and_stderr, norm, Scalar};
use crate::schemes::{PreparedScheme, SchemeConfig};

/// Ensemble size, seeding and parallelism.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ensemble {
    pub paths: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    pub family: u32,
}

impl Ensemble {
    pub fn new(paths: usize, seed: u64) -> Self {
        Self {
            paths,
            seed,
            workers: None,
            family: family::PRIMARY,
        }
    }

    pub fn with_workers(self, workers: Option<usize>) -> Self {
        Self { workers, ..self }
    }

    pub fn with_family(self, family: u32) -> Self {
        Self { family, ..self }
    }

    pub fn rng(&self, path: usize) -> PathRng {
        path_stream(self.seed, self.family, path as u32)
    }

    /// `f(path)` for every path, in path order.
    pub fn map<R, F>(&self, f: F) -> Result<Vec<R>>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        if self.paths == 0 {
            return Err(Error::Config("ensemble needs at least one path".into()));
        }
        if self.paths > u32::MAX as usize {
            return Err(Error::Config("too many paths".into()));
        }
        let run = || (0..self.paths).into_par_iter().map(&f).collect::<Vec<R>>();
        match self.workers {
            None => Ok(run()),
            Some(w) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(w.max(1))
                    .build()
                    .map_err(|e| Error::Config(format!("cannot start {w} workers: {e}")))?;
                Ok(pool.install(run))
            }
        }
    }
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::NonFinite { .. })
}

/// Monte Carlo estimates of `E|Y_k|^p` at selected grid times.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTrace {
    pub p: f64,
    pub times: Vec<f64>,
    pub moments: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Paths that stayed finite and entered the averages.
    pub paths: usize,
    /// Paths aborted on a non-finite state.
    pub divergent: usize,
    per_path: Vec<Vec<f64>>,
}

/// Least-squares slope of a trace over a time window, with the standard
/// error of the mean of the per-path slopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trend {
    pub slope: f64,
    pub stderr: f64,
    pub points: usize,
}

impl Trend {
    /// `|slope| < k · stderr`.
    pub fn flat_within(&self, k: f64) -> bool {
        self.slope.abs() < k * self.stderr
    }
}

impl MomentTrace {
    pub fn divergent_fraction(&self) -> f64 {
        self.divergent as f64 / (self.paths + self.divergent).max(1) as f64
    }

    /// `|Y_k|^p` of path `j` (among the finite paths) at every sample time.
    pub fn path_values(&self, j: usize) -> &[f64] {
        &self.per_path[j]
    }

    pub fn trend(&self, t0: f64, t1: f64) -> Result<Trend> {
        let idx: Vec<usize> = (0..self.times.len())
            .filter(|&k| self.times[k] >= t0 - 1e-12 && self.times[k] <= t1 + 1e-12)
            .collect();
        if idx.len() < 2 {
            return Err(Error::Precondition(format!(
                "fewer than two sample times in [{t0}, {t1}]"
            )));
        }
        if self.per_path.is_empty() {
            return Err(Error::Precondition("no finite paths".into()));
        }
        let ts: Vec<f64> = idx.iter().map(|&k| self.times[k]).collect();
        let tm = ts.iter().sum::<f64>() / ts.len() as f64;
        let sxx: f64 = ts.iter().map(|t| (t - tm) * (t - tm)).sum();
        let slopes: Vec<f64> = self
            .per_path
            .iter()
            .map(|v| {
                idx.iter()
                    .zip(&ts)
                    .map(|(&k, t)| (t - tm) * v[k])
                    .sum::<f64>()
                    / sxx
            })
            .collect();
        let (slope, stderr) = mean_and_stderr(&slopes);
        Ok(Trend {
            slope,
            stderr,
            points: idx.len(),
        })
    }

    /// CSV `t,moment`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,moment")?;
        for (t, m) in self.times.iter().zip(&self.moments) {
            writeln!(w, "{t},{m}")?;
        }
        Ok(())
    }
}

/// Grid indices nearest to `times`, each within `0..=steps`.
fn grid_indices<T: Scalar>(config: &SchemeConfig<T>, times: &[f64]) -> Result<Vec<usize>> {
    let delta = config.delta.as_f64();
    let steps = config.steps();
    times
        .iter()
        .map(|&t| {
            let k = (t / delta).round();
            if !(k >= 0.0) || k as usize > steps {
                Err(Error::Config(format!(
                    "sample time {t} lies outside [0, {}]",
                    steps as f64 * delta
                )))
            } else {
                Ok(k as usize)
            }
        })
        .collect()
}

/// `E|Y_k|^p` at the grid points nearest to `times`.
pub fn moment_trace<T: Scalar>(
    model: &HybridModel<T>,
    config: &SchemeConfig<T>,
    p: f64,
    times: &[f64],
    ensemble: Ensemble,
) -> Result<MomentTrace> {
    if !(p > 0.0) {
        return Err(Error::Precondition(format!(
            "moment order must be positive, got {p}"
        )));
    }
    let scheme = PreparedScheme::new(model, config)?;
    let idx = grid_indices(config, times)?;
    let delta = config.delta.as_f64();
    let outcomes = ensemble.map(|j| {
        let mut rng = ensemble.rng(j);
        let mut values = vec![0.0; idx.len()];
        let mut next = 0;
        let mut order: Vec<usize> = (0..idx.len()).collect();
        order.sort_by_key(|&s| idx[s]);
        let result = scheme.run(model, &mut rng, |k, y, _| {
            while next < order.len() && idx[order[next]] == k {
                values[order[next]] = norm(y).as_f64().powf(p);
                next += 1;
            }
        });
        result.map(|_| values)
    })?;
    let mut per_path = Vec::with_capacity(outcomes.len());
    let mut divergent = 0;
    for o in outcomes {
        match o {
            Ok(v) => per_path.push(v),
            Err(e) if is_divergence(&e) => divergent += 1,
            Err(e) => return Err(e),
        }
    }
    let mut moments = Vec::with_capacity(idx.len());
    let mut stderr = Vec::with_capacity(idx.len());
    for s in 0..idx.len() {
        let column: Vec<f64> = per_path.iter().map(|v| v[s]).collect();
        let (m, se) = if column.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            mean_and_stderr(&column)
        };
        moments.push(m);
        stderr.push(se);
    }
    Ok(MomentTrace {
        p,
        times: idx.iter().map(|&k| k as f64 * delta).collect(),
        moments,
        stderr,
        paths: per_path.len(),
        divergent,
        per_path,
    })
}

/// Per-path `log|Z_K| / (KΔ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovEstimate {
    pub per_path: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
    /// Paths whose terminal state is exactly zero.
    pub zero_hits: usize,
    pub divergent: usize,
}

/// Lyapunov-exponent estimate at the horizon of `config`. The model must
/// have the zero equilibrium and `x0` must be nonzero.
pub fn lyapunov_estimate<T: Scalar>(
    model: &HybridModel<T>,
    config: &SchemeConfig<T>,
    ensemble: Ensemble,
) -> Result<LyapunovEstimate> {
    if !model.has_zero_equilibrium() {
        return Err(Error::Precondition(
            "Lyapunov estimate needs f(0, i) = 0 and g(0, i) = 0 in every regime".into(),
        ));
    }
    if norm(&config.x0) == T::zero() {
        return Err(Error::Precondition(
            "x0 = 0 gives the trivial solution; the estimate is degenerate".into(),
        ));
    }
    let scheme = PreparedScheme::new(model, config)?;
    let steps = config.steps();
    let horizon = steps as f64 * config.delta.as_f64();
    let outcomes = ensemble.map(|j| {
        let mut rng = ensemble.rng(j);
        let mut terminal = 0.0;
        scheme
            .run(model, &mut rng, |k, y, _| {
                if k == steps {
                    terminal = norm(y).as_f64();
                }
            })
            .map(|_| terminal)
    })?;
    let mut per_path = Vec::new();
    let (mut zero_hits, mut divergent) = (0, 0);
    for o in outcomes {
        match o {
            Ok(z) if z == 0.0 => zero_hits += 1,
            Ok(z) => per_path.push(z.ln() / horizon),
            Err(e) if is_divergence(&e) => divergent += 1,
            Err(e) => return Err(e),
        }
    }
    let (mean, stderr) = if per_path.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        mean_and_stderr(&per_path)
    };
    Ok(LyapunovEstimate {
        per_path,
        mean,
        stderr,
        zero_hits,
        divergent,
    })
}

/// Terminal states of an ensemble; `None` marks divergent paths.
pub fn terminal_states<T: Scalar>(
    model: &HybridModel<T>,
    config: &SchemeConfig<T>,
    ensemble: Ensemble,
) -> Result<Vec<Option<(Vec<T>, usize)>>> {
    let scheme = PreparedScheme::new(model, config)?;
    let steps = config.steps();
    let outcomes = ensemble.map(|j| {
        let mut rng = ensemble.rng(j);
        let mut last = (Vec::new(), 0);
        scheme
            .run(model, &mut rng, |k, y, r| {
                if k == steps {
                    last = (y.to_vec(), r);
                }
            })
            .map(|_| last)
    })?;
    outcomes
        .into_iter()
        .map(|o| match o {
            Ok(v) => Ok(Some(v)),
            Err(e) if is_divergence(&e) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}
