//! Finite-state continuous-time Markov chains: generators, grid transition
//! matrices, stationary laws and chain sampling on a uniform time grid.
//!
//! States are 0-based here (`0..m`); user-facing formats number them from 1.

mod spectral;

pub use spectral::{critical_order, eta_xi, gamma_pu, p_star, SpectralResult};

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{expm, Matrix};
use crate::scalar::Scalar;

/// Generator (rate matrix) of a CTMC: nonnegative off-diagonal rates, rows
/// summing to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix<T> {
    gamma: Matrix<T>,
}

impl<T: Scalar> GeneratorMatrix<T> {
    pub fn new(gamma: Matrix<T>) -> Result<Self> {
        if !gamma.is_square() || gamma.rows() == 0 {
            return Err(Error::InvalidGenerator(format!(
                "generator must be a non-empty square matrix, got {}x{}",
                gamma.rows(),
                gamma.cols()
            )));
        }
        let m = gamma.rows();
        let scale = gamma.max_abs().max(T::one());
        let tol = T::epsilon() * T::lit(1e3) * scale * T::lit(m as f64);
        for i in 0..m {
            let mut sum = T::zero();
            for j in 0..m {
                let v = gamma[(i, j)];
                if !v.is_finite() {
                    return Err(Error::InvalidGenerator(format!(
                        "non-finite rate at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
                if i != j && v < T::zero() {
                    return Err(Error::InvalidGenerator(format!(
                        "negative off-diagonal rate {v} at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
                sum = sum + v;
            }
            if sum.abs() > tol {
                return Err(Error::InvalidGenerator(format!(
                    "row {} sums to {sum}, expected 0",
                    i + 1
                )));
            }
        }
        Ok(Self { gamma })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// Row-major list of `m*m` rates.
    pub fn from_row_major(rates: &[T]) -> Result<Self> {
        let m = (rates.len() as f64).sqrt().round() as usize;
        if m * m != rates.len() {
            return Err(Error::InvalidGenerator(format!(
                "{} rates do not form a square matrix",
                rates.len()
            )));
        }
        Self::new(Matrix::from_row_major(m, m, rates.to_vec())?)
    }

    /// Two-state generator `[[-q01, q01], [q10, -q10]]`.
    pub fn two_state(q01: T, q10: T) -> Result<Self> {
        Self::from_rows(&[vec![-q01, q01], vec![q10, -q10]])
    }

    /// The trivial one-state chain.
    pub fn single() -> Self {
        Self {
            gamma: Matrix::zeros(1, 1),
        }
    }

    #[inline]
    pub fn states(&self) -> usize {
        self.gamma.rows()
    }

    #[inline]
    pub fn rate(&self, i: usize, j: usize) -> T {
        self.gamma[(i, j)]
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.gamma
    }

    /// True iff the directed graph of positive off-diagonal rates is
    /// strongly connected.
    pub fn is_irreducible(&self) -> bool {
        self.unreachable_from_some_state().is_none()
    }

    fn reachable_from(&self, start: usize) -> Vec<bool> {
        let m = self.states();
        let mut seen = vec![false; m];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..m {
                if j != i && !seen[j] && self.gamma[(i, j)] > T::zero() {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    }

    fn unreachable_from_some_state(&self) -> Option<(usize, Vec<usize>)> {
        (0..self.states()).find_map(|i| {
            let seen = self.reachable_from(i);
            let missing: Vec<usize> = (0..seen.len()).filter(|&j| !seen[j]).collect();
            (!missing.is_empty()).then_some((i, missing))
        })
    }

    /// One-step transition matrix `exp(delta * Gamma)`.
    pub fn transition_matrix(&self, delta: T) -> Result<TransitionMatrix<T>> {
        if !(delta > T::zero()) || !delta.is_finite() {
            return Err(Error::Precondition(format!(
                "step must be positive and finite, got {delta}"
            )));
        }
        let mut p = expm(&self.gamma.scaled(delta))?;
        let m = self.states();
        for i in 0..m {
            for j in 0..m {
                if p[(i, j)] < T::zero() {
                    p[(i, j)] = T::zero();
                }
            }
            let s: T = p.row(i).iter().copied().sum();
            for j in 0..m {
                p[(i, j)] = p[(i, j)] / s;
            }
        }
        Ok(TransitionMatrix::from_stochastic(delta, p))
    }

    /// Unique `pi` with `pi Gamma = 0`, `sum(pi) = 1`.
    pub fn stationary_distribution(&self) -> Result<StationaryDistribution<T>> {
        if let Some((from, unreachable)) = self.unreachable_from_some_state() {
            return Err(Error::Reducible {
                from: from + 1,
                unreachable: unreachable.into_iter().map(|j| j + 1).collect(),
            });
        }
        let m = self.states();
        // pi [Gamma with last column replaced by ones] = e_m
        let mut a = self.gamma.transpose();
        for j in 0..m {
            a[(m - 1, j)] = T::one();
        }
        let mut rhs = vec![T::zero(); m];
        rhs[m - 1] = T::one();
        let pi = a.solve_vec(&rhs)?;
        if pi.iter().any(|&p| !(p > T::zero())) {
            return Err(Error::Numerical(format!(
                "stationary vector has non-positive entries: {pi:?}"
            )));
        }
        Ok(StationaryDistribution { pi })
    }
}

/// `P(delta) = exp(delta * Gamma)` with precomputed cumulative rows for
/// inverse-CDF sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix<T> {
    step: T,
    p: Matrix<T>,
    cumulative: Matrix<T>,
}

impl<T: Scalar> TransitionMatrix<T> {
    /// Wraps an already row-stochastic matrix.
    pub fn from_stochastic(step: T, p: Matrix<T>) -> Self {
        let m = p.rows();
        let mut cumulative = Matrix::zeros(m, m);
        for i in 0..m {
            let mut acc = T::zero();
            for j in 0..m {
                acc = acc + p[(i, j)];
                cumulative[(i, j)] = acc;
            }
            cumulative[(i, m - 1)] = T::one();
        }
        Self {
            step,
            p,
            cumulative,
        }
    }

    #[inline]
    pub fn step(&self) -> T {
        self.step
    }

    #[inline]
    pub fn states(&self) -> usize {
        self.p.rows()
    }

    #[inline]
    pub fn prob(&self, i: usize, j: usize) -> T {
        self.p[(i, j)]
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.p
    }

    /// Next state from `current` given a uniform draw `u`: the first `j`
    /// with `u <= P_{current,0} + ... + P_{current,j}`.
    #[inline]
    pub fn next_state(&self, current: usize, u: T) -> usize {
        let row = self.cumulative.row(current);
        row.iter().position(|&c| u <= c).unwrap_or(row.len() - 1)
    }
}

/// Regime path `r_0..r_steps` started at `r0`, one uniform draw per step.
pub fn sample_chain<T: Scalar, R: Rng + ?Sized>(
    p: &TransitionMatrix<T>,
    r0: usize,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if r0 >= p.states() {
        return Err(Error::Precondition(format!(
            "initial state {} outside 1..={}",
            r0 + 1,
            p.states()
        )));
    }
    let mut path = Vec::with_capacity(steps + 1);
    let mut r = r0;
    path.push(r);
    for _ in 0..steps {
        r = p.next_state(r, T::unit_uniform(rng));
        path.push(r);
    }
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution<T> {
    pi: Vec<T>,
}

impl<T: Scalar> StationaryDistribution<T> {
    pub fn probabilities(&self) -> &[T] {
        &self.pi
    }

    /// `pi . u`
    pub fn dot(&self, u: &[T]) -> Result<T> {
        if u.len() != self.pi.len() {
            return Err(Error::Dimension(format!(
                "vector of length {} against {} states",
                u.len(),
                self.pi.len()
            )));
        }
        Ok(self.pi.iter().zip(u).map(|(&p, &v)| p * v).sum())
    }
}
