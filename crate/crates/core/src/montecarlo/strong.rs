use std::io::{self, Write};

use super::{is_divergence, Ensemble};
use crate::error::{Error, Result};
use crate::model::HybridModel;
use crate::scalar::{dist, mean_and_stderr, Scalar};
use crate::schemes::{ClosedForm, NoiseSource, SchemeConfig, Stepper};

/// What each row of an [`ErrorTable`] estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorMetric {
    /// `E|X(T) - Y(T)|^q`.
    Moment { q: f64 },
    /// `(E|X(T) - Y(T)|²)^{1/2}`, standard error by the delta method.
    Rms,
}

/// Reference solution driving the comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference<T> {
    /// The same scheme on the fine step `delta`.
    FineStep { delta: T },
    /// Closed-form Ginzburg-Landau solution with integrals summed on the
    /// fine step `delta`.
    ClosedForm { delta: T },
}

impl<T: Scalar> Reference<T> {
    pub fn delta(&self) -> T {
        match *self {
            Reference::FineStep { delta } | Reference::ClosedForm { delta } => delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongErrorPlan<T> {
    /// Scheme, step control, initial data and horizon; `delta` is ignored.
    pub scheme: SchemeConfig<T>,
    pub reference: Reference<T>,
    pub deltas: Vec<T>,
    pub metric: ErrorMetric,
    pub ensemble: Ensemble,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub delta: f64,
    pub error: f64,
    pub stderr: f64,
    pub paths: usize,
    pub divergent: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub metric: ErrorMetric,
    pub rows: Vec<ErrorRow>,
    /// Paths dropped because the reference itself became non-finite.
    pub reference_failures: usize,
}

impl ErrorTable {
    /// CSV `delta,error,stderr,paths`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "delta,error,stderr,paths")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.delta, r.error, r.stderr, r.paths)?;
        }
        Ok(())
    }
}

/// Least-squares fit `log(error) = slope · log(Δ) + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    /// Rows skipped for a zero or non-finite error.
    pub excluded: Vec<f64>,
}

pub fn fit_rate(table: &ErrorTable) -> Result<RateFit> {
    let mut excluded = Vec::new();
    let mut pts = Vec::new();
    for r in &table.rows {
        if r.error > 0.0 && r.error.is_finite() && r.delta > 0.0 {
            pts.push((r.delta.ln(), r.error.ln()));
        } else {
            excluded.push(r.delta);
        }
    }
    if pts.len() < 3 {
        return Err(Error::Precondition(format!(
            "rate fit needs at least 3 rows with positive error, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(RateFit {
        slope,
        intercept,
        residual,
        excluded,
    })
}

struct Level<T> {
    ratio: usize,
    stepper: Stepper<T>,
    y: Vec<T>,
    tilde: Vec<T>,
    acc: Vec<T>,
    r: usize,
    failed: bool,
}

enum Fine<T> {
    Scheme {
        stepper: Stepper<T>,
        y: Vec<T>,
        tilde: Vec<T>,
    },
    Exact(ClosedForm<T>),
}

/// Terminal states of one path of the coupled engine.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledTerminal<T> {
    /// Reference state at the horizon.
    pub reference: Vec<T>,
    /// Shared terminal regime (0-based).
    pub regime: usize,
    /// Terminal state of each coarse level, `None` where it diverged.
    pub levels: Vec<Option<Vec<T>>>,
}

/// Runs the reference and every level of `plan.deltas` on one Brownian path
/// and one chain per ensemble member. Coarse levels consume sums of the fine
/// increments and the fine chain sampled at their grid points. Members whose
/// reference diverged are `None`.
pub fn coupled_terminals<T: Scalar>(
    model: &HybridModel<T>,
    plan: &StrongErrorPlan<T>,
) -> Result<Vec<Option<CoupledTerminal<T>>>> {
    let fine_delta = plan.reference.delta();
    let horizon = plan.scheme.horizon;
    let fine_steps_f = (horizon / fine_delta).as_f64();
    let fine_steps = fine_steps_f.round() as usize;
    if fine_steps == 0 || (fine_steps_f - fine_steps as f64).abs() > 1e-9 * fine_steps_f {
        return Err(Error::Config(format!(
            "horizon {horizon} is not a multiple of the reference step {fine_delta}"
        )));
    }
    let mut ratios = Vec::with_capacity(plan.deltas.len());
    for &delta in &plan.deltas {
        let ratio_f = (delta / fine_delta).as_f64();
        let ratio = ratio_f.round() as usize;
        if ratio == 0 || (ratio_f - ratio as f64).abs() > 1e-9 * ratio_f || fine_steps % ratio != 0
        {
            return Err(Error::Config(format!(
                "Δ = {delta} is not an integer multiple of the reference step {fine_delta} dividing the horizon"
            )));
        }
        ratios.push(ratio);
    }
    let steppers = plan
        .deltas
        .iter()
        .map(|&delta| Stepper::new(model, &plan.scheme.with_delta(delta)))
        .collect::<Result<Vec<_>>>()?;
    let fine_template = match plan.reference {
        Reference::FineStep { delta } => Some(Stepper::new(model, &plan.scheme.with_delta(delta))?),
        Reference::ClosedForm { .. } => {
            if model.state_dim() != 1 {
                return Err(Error::Config(
                    "closed-form reference needs a scalar model".into(),
                ));
            }
            let params = model.cubic_params().ok_or_else(|| {
                Error::Config("closed-form reference needs a Ginzburg-Landau model".into())
            })?;
            ClosedForm::new(params, plan.scheme.x0[0], fine_delta)?;
            None
        }
    };
    let noise = NoiseSource::new(model, fine_delta)?;
    let d = model.noise_dim();
    let ensemble = plan.ensemble;

    let outcomes = ensemble.map(|j| -> Result<Option<CoupledTerminal<T>>> {
        let mut rng = ensemble.rng(j);
        let x0 = &plan.scheme.x0;
        let mut fine = match &fine_template {
            Some(s) => Fine::Scheme {
                stepper: s.clone(),
                y: x0.clone(),
                tilde: x0.clone(),
            },
            None => Fine::Exact(ClosedForm::new(
                model.cubic_params().unwrap(),
                x0[0],
                fine_delta,
            )?),
        };
        let mut levels: Vec<Level<T>> = steppers
            .iter()
            .zip(&ratios)
            .map(|(s, &ratio)| Level {
                ratio,
                stepper: s.clone(),
                y: x0.clone(),
                tilde: x0.clone(),
                acc: vec![T::zero(); d],
                r: plan.scheme.regime,
                failed: false,
            })
            .collect();
        let mut db = vec![T::zero(); d];
        let mut r = plan.scheme.regime;
        for k in 0..fine_steps {
            let r_next = noise.draw(&mut rng, r, &mut db);
            match &mut fine {
                Fine::Scheme { stepper, y, tilde } => {
                    match stepper.step(model, y, tilde, r, r_next, &db, k + 1) {
                        Ok(()) => {}
                        Err(e) if is_divergence(&e) => return Ok(None),
                        Err(e) => return Err(e),
                    }
                }
                Fine::Exact(cf) => cf.advance(model.cubic_params().unwrap(), r, db[0]),
            }
            for level in levels.iter_mut().filter(|l| !l.failed) {
                for (a, b) in level.acc.iter_mut().zip(&db) {
                    *a = *a + *b;
                }
                if (k + 1) % level.ratio == 0 {
                    let step = (k + 1) / level.ratio;
                    match level.stepper.step(
                        model,
                        &mut level.y,
                        &mut level.tilde,
                        level.r,
                        r_next,
                        &level.acc,
                        step,
                    ) {
                        Ok(()) => {}
                        Err(e) if is_divergence(&e) => level.failed = true,
                        Err(e) => return Err(e),
                    }
                    level.r = r_next;
                    level.acc.iter_mut().for_each(|a| *a = T::zero());
                }
            }
            r = r_next;
        }
        let reference: Vec<T> = match &fine {
            Fine::Scheme { y, .. } => y.clone(),
            Fine::Exact(cf) => vec![cf.value()?],
        };
        Ok(Some(CoupledTerminal {
            reference,
            regime: r,
            levels: levels
                .into_iter()
                .map(|l| if l.failed { None } else { Some(l.y) })
                .collect(),
        }))
    })?;
    outcomes.into_iter().collect()
}

/// Strong error of the scheme at each `Δ` against a reference driven by the
/// same Brownian path and the same chain.
pub fn strong_error<T: Scalar>(
    model: &HybridModel<T>,
    plan: &StrongErrorPlan<T>,
) -> Result<ErrorTable> {
    let outcomes = coupled_terminals(model, plan)?;
    let mut per_level: Vec<Vec<f64>> = vec![Vec::new(); plan.deltas.len()];
    let mut divergent = vec![0usize; plan.deltas.len()];
    let mut reference_failures = 0;
    for o in outcomes {
        match o {
            None => reference_failures += 1,
            Some(path) => {
                for (l, y) in path.levels.iter().enumerate() {
                    match y.as_ref().map(|y| dist(&path.reference, y).as_f64()) {
                        Some(e) => per_level[l].push(match plan.metric {
                            ErrorMetric::Moment { q } => e.powf(q),
                            ErrorMetric::Rms => e * e,
                        }),
                        None => divergent[l] += 1,
                    }
                }
            }
        }
    }
    let rows = plan
        .deltas
        .iter()
        .zip(per_level.iter().zip(&divergent))
        .map(|(&delta, (vals, &div))| {
            let (mean, se) = if vals.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                mean_and_stderr(vals)
            };
            let (error, stderr) = match plan.metric {
                ErrorMetric::Moment { .. } => (mean, se),
                ErrorMetric::Rms => {
                    let rms = mean.sqrt();
                    (rms, if rms > 0.0 { se / (2.0 * rms) } else { 0.0 })
                }
            };
            ErrorRow {
                delta: delta.as_f64(),
                error,
                stderr,
                paths: vals.len(),
                divergent: div,
            }
        })
        .collect();
    Ok(ErrorTable {
        metric: plan.metric,
        rows,
        reference_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(points: &[(f64, f64)]) -> ErrorTable {
        ErrorTable {
            metric: ErrorMetric::Rms,
            rows: points
                .iter()
                .map(|&(delta, error)| ErrorRow {
                    delta,
                    error,
                    stderr: 0.0,
                    paths: 1,
                    divergent: 0,
                })
                .collect(),
            reference_failures: 0,
        }
    }

    #[test]
    fn exact_on_power_laws() {
        for &(c, order) in &[(3.7, 0.5), (0.02, 1.0)] {
            let pts: Vec<(f64, f64)> = (4..12)
                .map(|k| {
                    let d = 2f64.powi(-k);
                    (d, c * d.powf(order))
                })
                .collect();
            let fit = fit_rate(&table(&pts)).unwrap();
            assert!((fit.slope - order).abs() < 1e-12, "{}", fit.slope);
            assert!((fit.intercept - c.ln()).abs() < 1e-11);
        }
    }

    #[test]
    fn zero_rows_are_excluded() {
        let fit = fit_rate(&table(&[
            (0.1, 0.0),
            (0.01, 0.1),
            (0.001, 0.01),
            (0.0001, 0.001),
        ]))
        .unwrap();
        assert_eq!(fit.excluded, vec![0.1]);
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!(fit_rate(&table(&[(0.1, 0.0), (0.01, 0.1), (0.001, 0.01)])).is_err());
    }
}
