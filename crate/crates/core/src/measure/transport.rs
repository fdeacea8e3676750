use super::EmpiricalMeasure;
use crate::error::{Error, Result};

/// Largest support size solved exactly.
pub const EXACT_TRANSPORT_CAP: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wasserstein {
    /// Optimal average cost.
    pub distance: f64,
    /// Cost of the lexicographic-order pairing; never below `distance`.
    pub upper_bound: f64,
    pub atoms: usize,
}

fn cost(mu: &EmpiricalMeasure, a: usize, nu: &EmpiricalMeasure, b: usize, p: f64) -> f64 {
    let d2: f64 = mu
        .point(a)
        .iter()
        .zip(nu.point(b))
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let jump = if mu.regime(a) != nu.regime(b) {
        1.0
    } else {
        0.0
    };
    d2.sqrt().powf(p) + jump
}

fn lex_order(mu: &EmpiricalMeasure) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..mu.len()).collect();
    idx.sort_by(|&a, &b| {
        mu.regime(a).cmp(&mu.regime(b)).then_with(|| {
            mu.point(a)
                .iter()
                .zip(mu.point(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    idx
}

/// Minimal-cost perfect matching on a square cost matrix (shortest
/// augmenting paths with potentials). Returns the column of each row.
fn assignment(n: usize, c: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|s| *s = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col = vec![0; n];
    for j in 1..=n {
        col[owner[j] - 1] = j - 1;
    }
    col
}

/// `W_p(μ, ν) = inf over couplings of E[|X-Y|^p + 1{I≠J}]` for equal-size,
/// uniformly weighted measures, `p ∈ (0, 1]`.
pub fn wasserstein_p(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<Wasserstein> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Precondition(format!(
            "order p must lie in (0, 1], got {p}"
        )));
    }
    if mu.dim() != nu.dim() {
        return Err(Error::Dimension(
            "measures live in different dimensions".into(),
        ));
    }
    let n = mu.len();
    if n == 0 || n != nu.len() {
        return Err(Error::Precondition(format!(
            "exact transport needs two nonempty supports of equal size, got {} and {}",
            n,
            nu.len()
        )));
    }
    if !mu.is_uniform() || !nu.is_uniform() {
        return Err(Error::Precondition(
            "exact transport needs uniform weights".into(),
        ));
    }
    if n > EXACT_TRANSPORT_CAP {
        return Err(Error::Precondition(format!(
            "support size {n} exceeds the exact-transport cap {EXACT_TRANSPORT_CAP}; subsample first"
        )));
    }
    let (a, b) = (lex_order(mu), lex_order(nu));
    let upper = a
        .iter()
        .zip(&b)
        .map(|(&i, &j)| cost(mu, i, nu, j, p))
        .sum::<f64>()
        / n as f64;
    let mut table = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            table[i * n + j] = cost(mu, i, nu, j, p);
        }
    }
    let col = assignment(n, |i, j| table[i * n + j]);
    let exact = col
        .iter()
        .enumerate()
        .map(|(i, &j)| table[i * n + j])
        .sum::<f64>()
        / n as f64;
    Ok(Wasserstein {
        distance: exact.min(upper),
        upper_bound: upper,
        atoms: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(c: &[Vec<f64>]) -> f64 {
        fn go(c: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
            if row == c.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..c.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(c[row][j] + go(c, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        go(c, 0, &mut vec![false; c.len()])
    }

    #[test]
    fn assignment_matches_enumeration() {
        let mut s = 17u64;
        for n in 1..=6 {
            let c: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..n)
                        .map(|_| {
                            s = s
                                .wrapping_mul(6364136223846793005)
                                .wrapping_add(1442695040888963407);
                            (s >> 11) as f64 / (1u64 << 53) as f64
                        })
                        .collect()
                })
                .collect();
            let col = assignment(n, |i, j| c[i][j]);
            let got: f64 = col.iter().enumerate().map(|(i, &j)| c[i][j]).sum();
            assert!((got - brute(&c)).abs() < 1e-12);
        }
    }

    #[test]
    fn regime_mismatch_costs_one() {
        let mu = EmpiricalMeasure::new(1, vec![vec![0.0]], vec![0]).unwrap();
        let nu = EmpiricalMeasure::new(1, vec![vec![0.0]], vec![1]).unwrap();
        assert_eq!(wasserstein_p(&mu, &nu, 0.5).unwrap().distance, 1.0);
        let nu = EmpiricalMeasure::new(1, vec![vec![4.0]], vec![0]).unwrap();
        assert_eq!(wasserstein_p(&mu, &nu, 0.5).unwrap().distance, 2.0);
    }
}
