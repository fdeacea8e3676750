//! Empirical measures on `ℝⁿ × S`: ECDF, two-sample Kolmogorov-Smirnov,
//! Wasserstein distance under `d_p((x,i),(y,j)) = |x-y|^p + 1{i≠j}`,
//! histograms and long-run sampling of the numerical invariant measure.

mod transport;

pub use transport::{wasserstein_p, Wasserstein, EXACT_TRANSPORT_CAP};

use std::io::{self, Write};

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::model::HybridModel;
use crate::montecarlo::Ensemble;
use crate::rng::path_stream;
use crate::scalar::Scalar;
use crate::schemes::{PreparedScheme, SchemeConfig};

/// Weighted atoms `(x, i)` with `x ∈ ℝⁿ` and 0-based regime `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    n: usize,
    points: Vec<f64>,
    regimes: Vec<usize>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Uniformly weighted atoms.
    pub fn new(n: usize, points: Vec<Vec<f64>>, regimes: Vec<usize>) -> Result<Self> {
        let w = if points.is_empty() {
            0.0
        } else {
            1.0 / points.len() as f64
        };
        let weights = vec![w; points.len()];
        Self::with_weights(n, points, regimes, weights)
    }

    pub fn with_weights(
        n: usize,
        points: Vec<Vec<f64>>,
        regimes: Vec<usize>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if points.len() != regimes.len() || points.len() != weights.len() {
            return Err(Error::Dimension(
                "points, regimes and weights differ in length".into(),
            ));
        }
        if points.iter().any(|p| p.len() != n) {
            return Err(Error::Dimension(format!(
                "every atom must have {n} coordinates"
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Precondition("weights must be nonnegative".into()));
        }
        if !points.is_empty() {
            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Precondition(format!(
                    "weights sum to {total}, expected 1"
                )));
            }
        }
        Ok(Self {
            n,
            points: points.concat(),
            regimes,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.regimes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regimes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.n..(k + 1) * self.n]
    }

    pub fn regime(&self, k: usize) -> usize {
        self.regimes[k]
    }

    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len().max(1) as f64;
        self.weights.iter().all(|v| (v - w).abs() <= 1e-12 * w)
    }

    /// Coordinate `j` of every atom.
    pub fn component(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.point(k)[j]).collect()
    }

    /// Mass of each of `m` regimes.
    pub fn regime_marginal(&self, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; m];
        for (r, w) in self.regimes.iter().zip(&self.weights) {
            if *r < m {
                out[*r] += w;
            }
        }
        out
    }

    /// Uniform subsample of `size` distinct atoms, reweighted uniformly.
    pub fn subsample(&self, size: usize, seed: u64) -> Result<Self> {
        if size > self.len() {
            return Err(Error::Precondition(format!(
                "cannot draw {size} distinct atoms from {}",
                self.len()
            )));
        }
        let mut rng = path_stream(seed, crate::rng::family::RESAMPLE, 0);
        let mut idx = sample(&mut rng, self.len(), size).into_vec();
        idx.sort_unstable();
        Self::new(
            self.n,
            idx.iter().map(|&k| self.point(k).to_vec()).collect(),
            idx.iter().map(|&k| self.regimes[k]).collect(),
        )
    }

    /// CSV `x1..xn,regime,weight` with 1-based regimes.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.n).map(|j| format!("x{j}")).collect();
        writeln!(w, "{},regime,weight", header.join(","))?;
        for k in 0..self.len() {
            for v in self.point(k) {
                write!(w, "{v},")?;
            }
            writeln!(w, "{},{}", self.regimes[k] + 1, self.weights[k])?;
        }
        Ok(())
    }
}

/// Right-continuous empirical distribution function.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Precondition("ECDF of an empty sample".into()));
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::Precondition("ECDF sample contains NaN".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    /// Fraction of samples `≤ t`.
    pub fn eval(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= t) as f64 / self.sorted.len() as f64
    }

    /// Smallest sample `v` with `F(v) ≥ q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.sorted.len();
        let k = ((q * n as f64).ceil() as usize).clamp(1, n);
        self.sorted[k - 1]
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    /// CSV `x,F` at every distinct sample value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,F")?;
        let n = self.sorted.len();
        for k in 0..n {
            if k + 1 < n && self.sorted[k + 1] == self.sorted[k] {
                continue;
            }
            writeln!(w, "{},{}", self.sorted[k], (k + 1) as f64 / n as f64)?;
        }
        Ok(())
    }
}

pub fn ecdf(samples: &[f64]) -> Result<Ecdf> {
    Ecdf::new(samples)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub critical: f64,
    pub reject: bool,
}

impl std::fmt::Display for KsResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "ks.statistic={} ks.n={} ks.m={} ks.alpha={} ks.critical={} ks.reject={}",
            self.statistic, self.n, self.m, self.alpha, self.critical, self.reject
        )
    }
}

/// Asymptotic coefficient `c(α) = √(-ln(α/2)/2)`.
pub fn ks_coefficient(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic critical value
/// `c(α)√((n+m)/(nm))`.
pub fn ks_two_sample(s1: &[f64], s2: &[f64], alpha: f64) -> Result<KsResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Precondition(format!(
            "significance level must lie in (0, 1), got {alpha}"
        )));
    }
    let a = Ecdf::new(s1)?;
    let b = Ecdf::new(s2)?;
    let (x, y) = (a.samples(), b.samples());
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = x[i].min(y[j]);
        while i < n && x[i] <= t {
            i += 1;
        }
        while j < m && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    // Once one sample is exhausted its ECDF is 1 and the other only grows.
    d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    let critical = ks_coefficient(alpha) * ((n + m) as f64 / (n as f64 * m as f64)).sqrt();
    Ok(KsResult {
        statistic: d,
        n,
        m,
        alpha,
        critical,
        reject: d > critical,
    })
}

/// Normalized 2-D histogram of two coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// Row-major `bins.0 x bins.1` densities.
    pub density: Vec<f64>,
}

impl DensityGrid {
    pub fn bin_area(&self) -> f64 {
        (self.x_edges[1] - self.x_edges[0]) * (self.y_edges[1] - self.y_edges[0])
    }

    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_area()
    }

    /// CSV `x,y,density` at bin centres.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,y,density")?;
        let ny = self.y_edges.len() - 1;
        for a in 0..self.x_edges.len() - 1 {
            for b in 0..ny {
                let cx = 0.5 * (self.x_edges[a] + self.x_edges[a + 1]);
                let cy = 0.5 * (self.y_edges[b] + self.y_edges[b + 1]);
                writeln!(w, "{cx},{cy},{}", self.density[a * ny + b])?;
            }
        }
        Ok(())
    }
}

/// Histogram of coordinates `components` over `bounds`, normalized to unit
/// mass over the grid. Atoms outside the bounds are ignored.
pub fn density_grid(
    mu: &EmpiricalMeasure,
    components: (usize, usize),
    bounds: [(f64, f64); 2],
    bins: (usize, usize),
) -> Result<DensityGrid> {
    if mu.is_empty() {
        return Err(Error::Precondition("density of an empty measure".into()));
    }
    if components.0 >= mu.dim() || components.1 >= mu.dim() {
        return Err(Error::Dimension(format!(
            "components {components:?} outside dimension {}",
            mu.dim()
        )));
    }
    if bins.0 == 0 || bins.1 == 0 || !(bounds[0].1 > bounds[0].0) || !(bounds[1].1 > bounds[1].0) {
        return Err(Error::Config(
            "density grid needs positive bin counts and nonempty bounds".into(),
        ));
    }
    let edges = |(lo, hi): (f64, f64), k: usize| -> Vec<f64> {
        (0..=k)
            .map(|j| lo + (hi - lo) * j as f64 / k as f64)
            .collect()
    };
    let (xe, ye) = (edges(bounds[0], bins.0), edges(bounds[1], bins.1));
    let mut mass = vec![0.0; bins.0 * bins.1];
    let mut total = 0.0;
    let locate = |v: f64, (lo, hi): (f64, f64), k: usize| -> Option<usize> {
        if v < lo || v > hi {
            return None;
        }
        Some((((v - lo) / (hi - lo) * k as f64) as usize).min(k - 1))
    };
    for k in 0..mu.len() {
        let p = mu.point(k);
        if let (Some(a), Some(b)) = (
            locate(p[components.0], bounds[0], bins.0),
            locate(p[components.1], bounds[1], bins.1),
        ) {
            mass[a * bins.1 + b] += mu.weight(k);
            total += mu.weight(k);
        }
    }
    if !(total > 0.0) {
        return Err(Error::Precondition(
            "no atoms inside the density bounds".into(),
        ));
    }
    let area = (xe[1] - xe[0]) * (ye[1] - ye[0]);
    Ok(DensityGrid {
        density: mass.iter().map(|m| m / (total * area)).collect(),
        x_edges: xe,
        y_edges: ye,
    })
}

/// Where invariant-measure samples come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingMode {
    /// Terminal state of every path.
    AcrossPaths,
    /// States after `burn_in` (time units) every `thinning` steps.
    AlongPath { burn_in: f64, thinning: usize },
}

impl SamplingMode {
    /// Burn-in of half the horizon, every tenth step.
    pub fn along_path_default(horizon: f64) -> Self {
        SamplingMode::AlongPath {
            burn_in: horizon / 2.0,
            thinning: 10,
        }
    }
}

/// Samples `(Z_k, r_k)` of the scheme in `config` from every path of
/// `ensemble`.
pub fn invariant_sample<T: Scalar>(
    model: &HybridModel<T>,
    config: &SchemeConfig<T>,
    mode: SamplingMode,
    ensemble: Ensemble,
) -> Result<EmpiricalMeasure> {
    let scheme = PreparedScheme::new(model, config)?;
    let steps = config.steps();
    let delta = config.delta.as_f64();
    let (first, stride) = match mode {
        SamplingMode::AcrossPaths => (steps, 1),
        SamplingMode::AlongPath { burn_in, thinning } => {
            if thinning == 0 || !(burn_in >= 0.0) {
                return Err(Error::Config(
                    "thinning must be positive and burn-in nonnegative".into(),
                ));
            }
            let first = (burn_in / delta).ceil() as usize;
            if first > steps {
                return Err(Error::Config(format!(
                    "burn-in {burn_in} exceeds the horizon {}",
                    steps as f64 * delta
                )));
            }
            (first, thinning)
        }
    };
    let per_path = ensemble.map(|j| {
        let mut rng = ensemble.rng(j);
        let mut out: Vec<(Vec<f64>, usize)> = Vec::new();
        scheme
            .run(model, &mut rng, |k, y, r| {
                if k >= first && (k - first) % stride == 0 {
                    out.push((y.iter().map(|v| v.as_f64()).collect(), r));
                }
            })
            .map(|_| out)
    })?;
    let mut points = Vec::new();
    let mut regimes = Vec::new();
    for p in per_path {
        for (x, r) in p? {
            points.push(x);
            regimes.push(r);
        }
    }
    EmpiricalMeasure::new(model.state_dim(), points, regimes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ecdf_basics() {
        let f = ecdf(&[0.0]).unwrap();
        assert_eq!(f.eval(-1.0), 0.0);
        assert_eq!(f.eval(0.0), 1.0);
        let f = ecdf(&[3.0, 1.0, 2.0]).unwrap();
        assert!((f.eval(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.quantile(0.5), 2.0);
        assert!(ecdf(&[]).is_err());
    }

    #[test]
    fn ks_extremes() {
        let s = [0.3, 1.0, -2.0, 0.3];
        let r = ks_two_sample(&s, &s, 0.02).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(!r.reject);
        let r = ks_two_sample(&[0.0; 7], &[1.0; 5], 0.02).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(r.reject);
        assert!((ks_coefficient(0.02) - 1.5174).abs() < 1e-4);
    }

    #[test]
    fn single_atom_density() {
        let mu = EmpiricalMeasure::new(2, vec![vec![0.25, 0.75]], vec![0]).unwrap();
        let g = density_grid(&mu, (0, 1), [(0.0, 1.0), (0.0, 1.0)], (4, 4)).unwrap();
        let nonzero: Vec<f64> = g.density.iter().copied().filter(|v| *v > 0.0).collect();
        assert_eq!(nonzero, vec![1.0 / g.bin_area()]);
        assert!((g.total_mass() - 1.0).abs() < 1e-12);
    }
}
