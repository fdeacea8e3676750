use crate::error::{Error, Result};
use crate::model::CubicParams;
use crate::scalar::Scalar;

/// Backward EM step for `dX = (aX + bX³)dt + σX dB`: the real root `Y` of
/// `Y = y + (aY + bY³)Δ + σ y ΔB`, by Cardano's formula plus one Newton
/// correction.
pub fn step_backward_cubic<T: Scalar>(y: T, db: T, a: T, b: T, sigma: T, delta: T) -> Result<T> {
    if !(b < T::zero()) {
        return Err(Error::Precondition(format!(
            "backward cubic step needs b < 0, got {b}"
        )));
    }
    let one = T::one();
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    // Y³ + P Y - 2D = 0
    let p = (delta.recip() - a) / (-b);
    if !(p > T::zero()) {
        return Err(Error::Precondition(format!(
            "backward cubic step needs Δ < 1/a, got Δ = {delta}, a = {a}"
        )));
    }
    let d = y * (one + sigma * db) / (-two * b * delta);
    let p3 = p / three;
    let radicand = d * d + p3 * p3 * p3;
    if !(radicand >= T::zero()) {
        return Err(Error::Numerical(format!(
            "negative Cardano radicand {radicand}"
        )));
    }
    let h = radicand.sqrt();
    // With s = ∛(H+|D|) and t = P/(3s): root = sign(D)(s - t) = 2D / (s² + st + t²).
    let s = (h + d.abs()).cbrt();
    let root = if s > T::zero() {
        let t = p3 / s;
        two * d / (s * s + p3 + t * t)
    } else {
        T::zero()
    };
    let f = root * root * root + p * root - two * d;
    let fp = three * root * root + p;
    Ok(root - f / fp)
}

/// Incremental evaluation of the closed-form Ginzburg-Landau solution
///
/// `X(t) = x0 e^{A(t)} / √(1 - 2x0² ∫₀ᵗ b(r(s)) e^{2A(s)} ds)`,
/// `A(t) = ∫₀ᵗ (a - σ²/2)(r(s)) ds + ∫₀ᵗ σ(r(s)) dB(s)`,
///
/// with left-endpoint sums on the grid of the increments fed to it.
#[derive(Debug, Clone)]
pub struct ClosedForm<T> {
    x0: T,
    delta: T,
    exponent: T,
    integral: T,
}

impl<T: Scalar> ClosedForm<T> {
    pub fn new(params: &CubicParams<T>, x0: T, delta: T) -> Result<Self> {
        if !(x0 > T::zero()) {
            return Err(Error::Precondition(format!(
                "closed form needs x0 > 0, got {x0}"
            )));
        }
        if let Some(b) = params.b.iter().find(|b| **b > T::zero()) {
            return Err(Error::Precondition(format!(
                "closed form needs b ≤ 0, got {b}"
            )));
        }
        Ok(Self {
            x0,
            delta,
            exponent: T::zero(),
            integral: T::zero(),
        })
    }

    /// Consumes the increment over `[t_k, t_{k+1})` spent in regime `r`.
    #[inline]
    pub fn advance(&mut self, params: &CubicParams<T>, r: usize, db: T) {
        let (a, b, s) = (params.a[r], params.b[r], params.sigma[r]);
        self.integral = self.integral + b * (T::lit(2.0) * self.exponent).exp() * self.delta;
        self.exponent = self.exponent + (a - s * s / T::lit(2.0)) * self.delta + s * db;
    }

    pub fn value(&self) -> Result<T> {
        let radicand = T::one() - T::lit(2.0) * self.x0 * self.x0 * self.integral;
        if !(radicand > T::zero()) {
            return Err(Error::Numerical(format!(
                "closed-form radicand {radicand} is not positive"
            )));
        }
        Ok(self.x0 * self.exponent.exp() / radicand.sqrt())
    }
}

/// Closed-form path at every grid point, driven by the regime path
/// `chain` (length ≥ `db.len()`) and the increments `db`.
pub fn exact_ginzburg_landau<T: Scalar>(
    chain: &[usize],
    db: &[T],
    params: &CubicParams<T>,
    x0: T,
    delta: T,
) -> Result<Vec<T>> {
    if chain.len() < db.len() {
        return Err(Error::Dimension(format!(
            "{} regimes for {} increments",
            chain.len(),
            db.len()
        )));
    }
    let mut cf = ClosedForm::new(params, x0, delta)?;
    let mut out = Vec::with_capacity(db.len() + 1);
    out.push(cf.value()?);
    for (k, &inc) in db.iter().enumerate() {
        cf.advance(params, chain[k], inc);
        out.push(cf.value()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_is_a_fixed_point() {
        assert_eq!(
            step_backward_cubic(0.0, 0.3, 1.0, -1.0, 2.0, 0.01).unwrap(),
            0.0
        );
        assert_eq!(
            step_backward_cubic(0.0f64, 0.0, 1.0, -1.0, 2.0, 0.01).unwrap(),
            0.0
        );
    }

    #[test]
    fn b_zero_is_rejected() {
        assert!(matches!(
            step_backward_cubic(1.0, 0.0, 1.0, 0.0, 1.0, 0.01),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn geometric_brownian_motion_reduction() {
        let params = CubicParams::new(vec![0.3], vec![0.0], vec![0.5]).unwrap();
        let db = [0.1, -0.05, 0.2, 0.0];
        let dt = 0.01;
        let path = exact_ginzburg_landau(&[0, 0, 0, 0], &db, &params, 2.0, dt).unwrap();
        let mut b = 0.0;
        for (k, x) in path.iter().enumerate() {
            let t = k as f64 * dt;
            let expected = 2.0 * ((0.3 - 0.125) * t + 0.5 * b).exp();
            assert!((x - expected).abs() < 1e-13 * expected);
            if k < db.len() {
                b += db[k];
            }
        }
    }

    #[test]
    fn deterministic_exponential() {
        let params = CubicParams::new(vec![0.7], vec![0.0], vec![0.0]).unwrap();
        let path = exact_ginzburg_landau(&[0; 10], &[0.0; 10], &params, 1.5, 0.1).unwrap();
        assert!((path[10] - 1.5 * 0.7f64.exp()).abs() < 1e-14);
    }
}
