//! Sampling-based falsifiers for the structural assumptions. They can
//! refute a claimed constant on the sampled region; they never prove one.

use super::HybridModel;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{path_stream, PathRng};
use crate::scalar::{norm, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssumptionId {
    /// Polynomial Lyapunov condition with matrices `Q_i`.
    A31,
    /// One-sided Lipschitz-type condition with constant `ρ`.
    A44,
}

impl std::fmt::Display for AssumptionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AssumptionId::A31 => "A3.1",
            AssumptionId::A44 => "A4.4",
        })
    }
}

/// Outcome of a falsification run.
///
/// `constants` are the fitted `α_i` (A3.1, taken over the outermost sampled
/// decade) or `β_i` (A4.4, over every sample). `margin` is `-π·constants`
/// when the generator is irreducible, so `margin ≥ 0` means the averaged
/// condition was not refuted.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub id: AssumptionId,
    /// `p̄` for A3.1, `ρ` for A4.4.
    pub order: f64,
    pub constants: Vec<f64>,
    /// Largest quotient over all samples, per regime.
    pub global_max: Vec<f64>,
    pub pi_dot: Option<f64>,
    pub margin: f64,
    pub samples: usize,
    /// The matrices `Q_i` differ between regimes, which rules out the
    /// infinite-horizon results that need a common `Q`.
    pub q_varies: bool,
}

impl AssumptionReport {
    /// Smallest `declared_i - constants_i`; nonnegative when every declared
    /// constant dominates the fitted one.
    pub fn margin_against(&self, declared: &[f64]) -> f64 {
        declared
            .iter()
            .zip(&self.constants)
            .map(|(d, c)| d - c)
            .fold(f64::INFINITY, f64::min)
    }
}

const FIT_SLACK: f64 = 1e-9;

fn finish<T: Scalar>(
    model: &HybridModel<T>,
    id: AssumptionId,
    order: f64,
    constants: Vec<f64>,
    global_max: Vec<f64>,
    samples: usize,
    q_varies: bool,
) -> AssumptionReport {
    let constants: Vec<f64> = constants
        .into_iter()
        .map(|c| c + FIT_SLACK * (1.0 + c.abs()))
        .collect();
    let pi_dot = model.generator().stationary_distribution().ok().map(|pi| {
        pi.probabilities()
            .iter()
            .zip(&constants)
            .map(|(p, c)| p.as_f64() * c)
            .sum::<f64>()
    });
    AssumptionReport {
        id,
        order,
        margin: pi_dot.map_or(f64::NAN, |v| -v),
        constants,
        global_max,
        pi_dot,
        samples,
        q_varies,
    }
}

fn cholesky_ok(q: &Matrix<f64>) -> bool {
    let n = q.rows();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        for i in j..n {
            let mut s = q[(i, j)];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return false;
                }
                l[j * n + j] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    true
}

fn validate_q<T: Scalar>(q: &[Matrix<T>], n: usize, m: usize) -> Result<Vec<Matrix<f64>>> {
    if q.len() != 1 && q.len() != m {
        return Err(Error::Dimension(format!(
            "expected 1 or {m} matrices Q_i, got {}",
            q.len()
        )));
    }
    q.iter()
        .enumerate()
        .map(|(i, qi)| {
            if qi.rows() != n || qi.cols() != n {
                return Err(Error::Dimension(format!("Q_{} must be {n}x{n}", i + 1)));
            }
            let q64 =
                Matrix::from_row_major(n, n, qi.as_slice().iter().map(|v| v.as_f64()).collect())?;
            for r in 0..n {
                for c in 0..r {
                    let (a, b) = (q64[(r, c)], q64[(c, r)]);
                    if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                        return Err(Error::Precondition(format!("Q_{} is not symmetric", i + 1)));
                    }
                }
            }
            if !cholesky_ok(&q64) {
                return Err(Error::Precondition(format!(
                    "Q_{} is not positive definite",
                    i + 1
                )));
            }
            Ok(q64)
        })
        .collect()
}

fn directions(rng: &mut PathRng, n: usize, random: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for k in 0..n {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; n];
            v[k] = s;
            dirs.push(v);
        }
    }
    if n == 1 {
        return dirs;
    }
    if n == 2 {
        let grid = random.max(8);
        for j in 0..grid {
            let a = 2.0 * std::f64::consts::PI * j as f64 / grid as f64;
            dirs.push(vec![a.cos(), a.sin()]);
        }
        return dirs;
    }
    for _ in 0..random {
        dirs.push(random_unit(rng, n));
    }
    dirs
}

fn random_unit(rng: &mut PathRng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| f64::standard_normal(rng)).collect();
        let r = norm(&v);
        if r > 1e-12 {
            return v.into_iter().map(|c| c / r).collect();
        }
    }
}

fn to_t<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&c| T::lit(c)).collect()
}

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|c| c.as_f64()).collect()
}

fn quad(q: &Matrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let qb = q.mul_vec(b);
    a.iter().zip(&qb).map(|(x, y)| x * y).sum()
}

/// Sampled version of
/// `[(1+xᵀQx)(2xᵀQf + tr(gᵀQg)) - (2-p̄)|xᵀQg|²] / (xᵀQx)²`
/// on log-spaced shells `|x| ∈ [10, 10⁴]`. `budget` bounds the number of
/// evaluations per regime.
pub fn check_assumption_a31<T: Scalar>(
    model: &HybridModel<T>,
    q: &[Matrix<T>],
    p_bar: f64,
    budget: usize,
) -> Result<AssumptionReport> {
    if !(p_bar > 0.0) {
        return Err(Error::Precondition(format!(
            "p̄ must be positive, got {p_bar}"
        )));
    }
    let (n, d, m) = (model.state_dim(), model.noise_dim(), model.regimes());
    let qs = validate_q(q, n, m)?;
    let q_varies = qs.windows(2).any(|w| w[0] != w[1]);
    const SHELLS: usize = 13;
    let per_shell = (budget / SHELLS).max(2 * n);
    let mut rng = path_stream(0x4133_31, 0, 0);
    let dirs = directions(&mut rng, n, per_shell.saturating_sub(2 * n));
    let mut fitted = vec![f64::NEG_INFINITY; m];
    let mut global = vec![f64::NEG_INFINITY; m];
    let mut used = 0;
    for i in 0..m {
        let qi = &qs[if qs.len() == 1 { 0 } else { i }];
        for s in 0..SHELLS {
            let r = 10f64.powf(1.0 + 3.0 * s as f64 / (SHELLS - 1) as f64);
            for dir in dirs.iter().take(per_shell) {
                let x: Vec<f64> = dir.iter().map(|c| c * r).collect();
                let xt = to_t::<T>(&x);
                let f = to_f64(&model.drift(&xt, i));
                let g = to_f64(&model.diffusion(&xt, i));
                let xqx = quad(qi, &x, &x);
                let xqf = quad(qi, &x, &f);
                let qx = qi.mul_vec(&x);
                let mut trace = 0.0;
                let mut xqg2 = 0.0;
                for l in 0..d {
                    let col: Vec<f64> = (0..n).map(|k| g[k * d + l]).collect();
                    trace += quad(qi, &col, &col);
                    let c: f64 = qx.iter().zip(&col).map(|(a, b)| a * b).sum();
                    xqg2 += c * c;
                }
                let psi = 2.0 * xqf + trace;
                let value = ((1.0 + xqx) * psi - (2.0 - p_bar) * xqg2) / (xqx * xqx);
                if !value.is_finite() {
                    return Err(Error::Model(format!(
                        "non-finite quotient in regime {} at |x| = {r}",
                        i + 1
                    )));
                }
                used += 1;
                global[i] = global[i].max(value);
                if r >= 1e3 * (1.0 - 1e-12) {
                    fitted[i] = fitted[i].max(value);
                }
            }
        }
    }
    Ok(finish(
        model,
        AssumptionId::A31,
        p_bar,
        fitted,
        global,
        used,
        q_varies,
    ))
}

/// Sampled version of `[|e|²(2eᵀF + |G|²) - (2-ρ)|eᵀG|²] / |e|⁴` with
/// `e = x-y`, `F = f(x)-f(y)`, `G = g(x)-g(y)`, over pairs at scales
/// `10⁻³ … 10⁴`.
pub fn check_assumption_a44<T: Scalar>(
    model: &HybridModel<T>,
    rho: f64,
    budget: usize,
) -> Result<AssumptionReport> {
    if !(rho > 0.0) {
        return Err(Error::Precondition(format!(
            "ρ must be positive, got {rho}"
        )));
    }
    let (n, d, m) = (model.state_dim(), model.noise_dim(), model.regimes());
    const SCALES: usize = 29;
    let per_scale = (budget / SCALES).max(8);
    let mut fitted = vec![f64::NEG_INFINITY; m];
    let mut used = 0;
    for i in 0..m {
        let mut rng = path_stream(0x4134_34, 0, i as u32);
        let axes = directions(&mut rng, n, 0);
        for s in 0..SCALES {
            let scale = 10f64.powf(-3.0 + 7.0 * s as f64 / (SCALES - 1) as f64);
            for j in 0..per_scale {
                let (x, y) = sample_pair(&mut rng, n, scale, j, &axes);
                let e: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                let e2: f64 = e.iter().map(|v| v * v).sum();
                if !(e2 > 0.0) {
                    continue;
                }
                let (xt, yt) = (to_t::<T>(&x), to_t::<T>(&y));
                let ff: Vec<f64> = to_f64(&model.drift(&xt, i))
                    .iter()
                    .zip(to_f64(&model.drift(&yt, i)))
                    .map(|(a, b)| a - b)
                    .collect();
                let gg: Vec<f64> = to_f64(&model.diffusion(&xt, i))
                    .iter()
                    .zip(to_f64(&model.diffusion(&yt, i)))
                    .map(|(a, b)| a - b)
                    .collect();
                let ef: f64 = e.iter().zip(&ff).map(|(a, b)| a * b).sum();
                let g2: f64 = gg.iter().map(|v| v * v).sum();
                let mut eg2 = 0.0;
                for l in 0..d {
                    let c: f64 = (0..n).map(|k| e[k] * gg[k * d + l]).sum();
                    eg2 += c * c;
                }
                let value = (e2 * (2.0 * ef + g2) - (2.0 - rho) * eg2) / (e2 * e2);
                if !value.is_finite() {
                    return Err(Error::Model(format!(
                        "non-finite quotient in regime {} at scale {scale}",
                        i + 1
                    )));
                }
                used += 1;
                fitted[i] = fitted[i].max(value);
            }
        }
    }
    let global = fitted.clone();
    Ok(finish(
        model,
        AssumptionId::A44,
        rho,
        fitted,
        global,
        used,
        false,
    ))
}

/// Four pair families: independent points in the ball, close pairs,
/// collinear pairs on one ray, and antipodal pairs.
fn sample_pair(
    rng: &mut PathRng,
    n: usize,
    scale: f64,
    j: usize,
    axes: &[Vec<f64>],
) -> (Vec<f64>, Vec<f64>) {
    use rand::Rng;
    let dir = |rng: &mut PathRng| -> Vec<f64> {
        if rng.random::<f64>() < 0.5 {
            axes[rng.random_range(0..axes.len())].clone()
        } else {
            random_unit(rng, n)
        }
    };
    match j % 4 {
        0 => {
            let a = random_unit(rng, n);
            let b = random_unit(rng, n);
            let (ra, rb) = (scale * rng.random::<f64>(), scale * rng.random::<f64>());
            (
                a.iter().map(|c| c * ra).collect(),
                b.iter().map(|c| c * rb).collect(),
            )
        }
        1 => {
            let x: Vec<f64> = dir(rng).iter().map(|c| c * scale).collect();
            let sep = scale * 10f64.powf(-6.0 * rng.random::<f64>());
            let e = dir(rng);
            let y = x.iter().zip(&e).map(|(a, b)| a + b * sep).collect();
            (x, y)
        }
        2 => {
            let v = dir(rng);
            let (a, b) = (scale * rng.random::<f64>(), scale * rng.random::<f64>());
            (
                v.iter().map(|c| c * a).collect(),
                v.iter().map(|c| c * b).collect(),
            )
        }
        _ => {
            let v = dir(rng);
            let a = scale * rng.random::<f64>();
            (
                v.iter().map(|c| c * a).collect(),
                v.iter().map(|c| -c * a).collect(),
            )
        }
    }
}
