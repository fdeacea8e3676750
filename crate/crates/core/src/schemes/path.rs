use std::io::{self, Write};

use crate::scalar::Scalar;

/// One simulated trajectory stored in flat arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample<T> {
    delta: T,
    n: usize,
    d: usize,
    regimes: Vec<usize>,
    states: Vec<T>,
    pre_truncation: Vec<T>,
    increments: Vec<T>,
}

impl<T: Scalar> PathSample<T> {
    pub(crate) fn with_capacity(delta: T, n: usize, d: usize, steps: usize) -> Self {
        Self {
            delta,
            n,
            d,
            regimes: Vec::with_capacity(steps + 1),
            states: Vec::with_capacity((steps + 1) * n),
            pre_truncation: Vec::with_capacity((steps + 1) * n),
            increments: Vec::with_capacity(steps * d),
        }
    }

    pub(crate) fn push_initial(&mut self, x0: &[T], r0: usize) {
        self.regimes.push(r0);
        self.states.extend_from_slice(x0);
        self.pre_truncation.extend_from_slice(x0);
    }

    pub(crate) fn push(&mut self, tilde: &[T], y: &[T], r: usize, db: &[T]) {
        self.regimes.push(r);
        self.states.extend_from_slice(y);
        self.pre_truncation.extend_from_slice(tilde);
        self.increments.extend_from_slice(db);
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    /// Number of steps `K`; there are `K + 1` grid points.
    pub fn steps(&self) -> usize {
        self.regimes.len() - 1
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn time(&self, k: usize) -> T {
        T::lit(k as f64) * self.delta
    }

    pub fn regimes(&self) -> &[usize] {
        &self.regimes
    }

    pub fn state(&self, k: usize) -> &[T] {
        &self.states[k * self.n..(k + 1) * self.n]
    }

    pub fn pre_truncation(&self, k: usize) -> &[T] {
        &self.pre_truncation[k * self.n..(k + 1) * self.n]
    }

    /// Increment over `[t_k, t_{k+1})`.
    pub fn increment(&self, k: usize) -> &[T] {
        &self.increments[k * self.d..(k + 1) * self.d]
    }

    pub fn increments(&self) -> &[T] {
        &self.increments
    }

    pub fn terminal(&self) -> &[T] {
        self.state(self.steps())
    }

    /// CSV with columns `k,t,r,y1..yn` (regimes 1-based), plus
    /// `ytilde1..ytilden` when `with_tilde` is set.
    pub fn write_csv<W: Write>(&self, mut w: W, with_tilde: bool) -> io::Result<()> {
        write!(w, "k,t,r")?;
        for j in 1..=self.n {
            write!(w, ",y{j}")?;
        }
        if with_tilde {
            for j in 1..=self.n {
                write!(w, ",ytilde{j}")?;
            }
        }
        writeln!(w)?;
        for k in 0..=self.steps() {
            write!(w, "{k},{},{}", self.time(k).as_f64(), self.regimes[k] + 1)?;
            for v in self.state(k) {
                write!(w, ",{}", v.as_f64())?;
            }
            if with_tilde {
                for v in self.pre_truncation(k) {
                    write!(w, ",{}", v.as_f64())?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
