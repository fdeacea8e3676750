//! Spectral quantities of the perturbed generator `Gamma + (p/2) diag(u)`
//! used by the moment, stability and ergodicity criteria.
//!
//! The perturbed generator is Metzler (nonnegative off-diagonal), so its
//! eigenvalue of maximal real part is real, simple when the chain is
//! irreducible, and owns a strictly positive eigenvector. For `m <= 2` it is
//! obtained in closed form; for larger `m` by Noda's inverse iteration, which
//! keeps the iterate positive and brackets the root with Collatz-Wielandt
//! bounds.

use super::GeneratorMatrix;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// `eta_{p,u}` and the positive eigenvector `xi^{p,u}`, normalized so that
/// `min_i xi_i = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult<T> {
    pub p: T,
    pub u: Vec<T>,
    pub eta: T,
    pub xi: Vec<T>,
}

impl<T: Scalar> SpectralResult<T> {
    /// `max_i |(Gamma_{p,u} xi)_i + eta xi_i|`
    pub fn residual(&self, gamma: &GeneratorMatrix<T>) -> Result<T> {
        let a = gamma_pu(gamma, self.p, &self.u)?;
        let ax = a.mul_vec(&self.xi);
        Ok(ax
            .iter()
            .zip(&self.xi)
            .fold(T::zero(), |m, (&v, &x)| m.max((v + self.eta * x).abs())))
    }
}

/// `Gamma + (p/2) diag(u)`
pub fn gamma_pu<T: Scalar>(gamma: &GeneratorMatrix<T>, p: T, u: &[T]) -> Result<Matrix<T>> {
    check_len(gamma, u)?;
    let mut a = gamma.matrix().clone();
    let half_p = p / T::lit(2.0);
    for (i, &ui) in u.iter().enumerate() {
        a[(i, i)] = a[(i, i)] + half_p * ui;
    }
    Ok(a)
}

/// `+inf` when `max_i u_i <= 0`, otherwise `min_{u_i > 0} -2 gamma_ii / u_i`.
/// Admissible orders lie strictly below this value.
pub fn p_star<T: Scalar>(gamma: &GeneratorMatrix<T>, u: &[T]) -> Result<T> {
    check_len(gamma, u)?;
    Ok(u.iter()
        .enumerate()
        .filter(|(_, &ui)| ui > T::zero())
        .map(|(i, &ui)| -T::lit(2.0) * gamma.rate(i, i) / ui)
        .fold(T::infinity(), T::min))
}

/// Supremum of the orders `p > 0` for which `eta_{p,u} > 0`.
///
/// The dominant eigenvalue of `Gamma_{p,u}` is convex in `p`, vanishes at
/// `p = 0` with slope `pi.u / 2`, and is positive at `p_star` when `m >= 2`,
/// so the admissible set is an interval `(0, p_c)` with `p_c <= p_star`.
/// Returns zero when `pi.u >= 0`.
pub fn critical_order<T: Scalar>(gamma: &GeneratorMatrix<T>, u: &[T]) -> Result<T> {
    let pi = gamma.stationary_distribution()?;
    if pi.dot(u)? >= T::zero() {
        return Ok(T::zero());
    }
    let upper = p_star(gamma, u)?;
    if upper.is_infinite() {
        return Ok(upper);
    }
    let mut lo = T::zero();
    let mut hi = upper;
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        let (lambda, _) = dominant_pair(&gamma_pu(gamma, mid, u)?)?;
        if lambda < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `eta_{p,u} = -max Re spec(Gamma_{p,u})` and its positive eigenvector.
pub fn eta_xi<T: Scalar>(gamma: &GeneratorMatrix<T>, p: T, u: &[T]) -> Result<SpectralResult<T>> {
    check_len(gamma, u)?;
    let limit = p_star(gamma, u)?;
    if !(p > T::zero() && p < limit) {
        return Err(Error::Precondition(format!(
            "order p = {p} outside (0, {limit})"
        )));
    }
    let pi = gamma.stationary_distribution()?;
    let pu = pi.dot(u)?;
    if !(pu < T::zero()) {
        return Err(Error::Precondition(format!("pi.u = {pu} is not negative")));
    }
    let a = gamma_pu(gamma, p, u)?;
    let (lambda, xi) = dominant_pair(&a)?;
    let eta = -lambda;
    if !(eta > T::zero()) {
        return Err(Error::Numerical(format!(
            "eta = {eta} is not positive (dominant eigenvalue {lambda}, eigenvector {xi:?}); \
             the largest admissible order is {}",
            critical_order(gamma, u).map_or(T::nan(), |v| v)
        )));
    }
    Ok(SpectralResult {
        p,
        u: u.to_vec(),
        eta,
        xi,
    })
}

fn check_len<T: Scalar>(gamma: &GeneratorMatrix<T>, u: &[T]) -> Result<()> {
    if u.len() != gamma.states() {
        return Err(Error::Dimension(format!(
            "vector of length {} for a {}-state generator",
            u.len(),
            gamma.states()
        )));
    }
    Ok(())
}

/// Dominant (maximal real part) eigenvalue of an irreducible Metzler matrix
/// and its positive eigenvector, normalized to `min = 1`.
fn dominant_pair<T: Scalar>(a: &Matrix<T>) -> Result<(T, Vec<T>)> {
    let (lambda, mut xi) = match a.rows() {
        1 => (a[(0, 0)], vec![T::one()]),
        2 => dominant_pair_2x2(a)?,
        _ => noda_iteration(a)?,
    };
    let min = xi.iter().copied().fold(T::infinity(), T::min);
    if !(min > T::zero()) {
        return Err(Error::Numerical(format!(
            "dominant eigenvector is not positive: {xi:?}"
        )));
    }
    xi.iter_mut().for_each(|v| *v = *v / min);
    Ok((lambda, xi))
}

fn dominant_pair_2x2<T: Scalar>(a: &Matrix<T>) -> Result<(T, Vec<T>)> {
    let (p, q, r, s) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    let two = T::lit(2.0);
    let half_gap = (p - s) / two;
    let root = (half_gap * half_gap + q * r).sqrt();
    let lambda = (p + s) / two + root;
    if !(q > T::zero() && r > T::zero()) {
        return Err(Error::Precondition(
            "perturbed generator is reducible".into(),
        ));
    }
    // (q, lambda - p) and (lambda - s, r) span the same line; pick the
    // cancellation-free form of the differences.
    let xi = if half_gap >= T::zero() {
        // lambda - p = q r / (root + half_gap)
        vec![root + half_gap, r]
    } else {
        // lambda - s = q r / (root - half_gap)
        vec![q, root - half_gap]
    };
    Ok((lambda, xi))
}

fn noda_iteration<T: Scalar>(a: &Matrix<T>) -> Result<(T, Vec<T>)> {
    let n = a.rows();
    let scale = a.max_abs().max(T::min_positive_value());
    let tol = T::epsilon() * T::lit(64.0) * scale;
    let mut x = vec![T::one(); n];
    let (mut lower, mut upper) = collatz_bounds(a, &x);
    for _ in 0..100 {
        if upper - lower <= tol {
            break;
        }
        let mut shifted = a.scaled(-T::one());
        for i in 0..n {
            shifted[(i, i)] = shifted[(i, i)] + upper;
        }
        let y = match shifted.solve_vec(&x) {
            Ok(y) => y,
            Err(_) => break,
        };
        let norm = y.iter().copied().fold(T::zero(), T::max);
        if !(norm > T::zero()) || y.iter().any(|v| !(*v > T::zero())) {
            break;
        }
        let candidate: Vec<T> = y.iter().map(|&v| v / norm).collect();
        let (lo, hi) = collatz_bounds(a, &candidate);
        if hi > upper {
            break;
        }
        x = candidate;
        lower = lo;
        upper = hi;
    }
    if !(upper - lower <= T::lit(1e4) * tol) {
        return Err(Error::Numerical(format!(
            "dominant eigenvalue did not converge: bracket [{lower}, {upper}]"
        )));
    }
    Ok((upper, x))
}

/// `(min_i (Ax)_i / x_i, max_i (Ax)_i / x_i)` for positive `x`.
fn collatz_bounds<T: Scalar>(a: &Matrix<T>, x: &[T]) -> (T, T) {
    a.mul_vec(x)
        .iter()
        .zip(x)
        .map(|(&ax, &xi)| ax / xi)
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), r| {
            (lo.min(r), hi.max(r))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn volatility_generator() -> GeneratorMatrix<f64> {
        GeneratorMatrix::two_state(4.0, 0.2).unwrap()
    }

    #[test]
    fn gamma_pu_examples() {
        let g = volatility_generator();
        assert_eq!(gamma_pu(&g, 1.0, &[0.0, 0.0]).unwrap(), g.matrix().clone());
        let a = gamma_pu(&g, 1.0, &[5.0, -0.64]).unwrap();
        assert!((a[(0, 0)] + 1.5).abs() < 1e-15);
        assert!((a[(1, 1)] + 0.52).abs() < 1e-15);
        assert_eq!(a[(0, 1)], 4.0);
        assert_eq!(a[(1, 0)], 0.2);
        let single = GeneratorMatrix::<f64>::single();
        assert_eq!(gamma_pu(&single, 3.0, &[2.0]).unwrap()[(0, 0)], 3.0);
        assert!(matches!(
            gamma_pu(&g, 1.0, &[1.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn p_star_examples() {
        let g = volatility_generator();
        assert!(p_star(&g, &[-1.0, -2.0]).unwrap().is_infinite());
        assert!(p_star(&g, &[0.0, 0.0]).unwrap().is_infinite());
        assert!((p_star(&g, &[5.0, -0.64]).unwrap() - 1.6).abs() < 1e-15);
    }

    #[test]
    fn scalar_chain() {
        let s = eta_xi(&GeneratorMatrix::<f64>::single(), 1.0, &[-2.0]).unwrap();
        assert_eq!(s.eta, 1.0);
        assert_eq!(s.xi, vec![1.0]);
    }

    #[test]
    fn volatility_alpha_at_half() {
        let g = volatility_generator();
        let s = eta_xi(&g, 0.5, &[5.0, -0.64]).unwrap();
        assert!(s.eta > 0.0);
        assert!(s.xi.iter().all(|&v| v >= 1.0));
        assert!(s.residual(&g).unwrap() < 1e-12);
    }

    #[test]
    fn preconditions() {
        let g = volatility_generator();
        assert!(matches!(
            eta_xi(&g, 2.0, &[5.0, -0.64]),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            eta_xi(&g, 0.0, &[5.0, -0.64]),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            eta_xi(&g, 0.5, &[5.0, 5.0]),
            Err(Error::Precondition(_))
        ));
        // 0.975 is where det(Gamma_{p,alpha}) vanishes for this generator
        assert!(matches!(
            eta_xi(&g, 1.2, &[5.0, -0.64]),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn critical_order_matches_determinant_root() {
        let g = volatility_generator();
        let pc = critical_order(&g, &[5.0, -0.64]).unwrap();
        assert!((pc - 0.975).abs() < 1e-12);
        assert!(critical_order(&g, &[-1.0, -1.0]).unwrap().is_infinite());
        assert_eq!(critical_order(&g, &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn three_state_noda_against_closed_form_circulant() {
        // Symmetric circulant generator plus constant diagonal shift: the
        // dominant eigenvalue is the shift with eigenvector of ones.
        let g = GeneratorMatrix::<f64>::from_rows(&[
            vec![-2.0, 1.0, 1.0],
            vec![1.0, -2.0, 1.0],
            vec![1.0, 1.0, -2.0],
        ])
        .unwrap();
        let s = eta_xi(&g, 1.0, &[-0.6, -0.6, -0.6]).unwrap();
        assert!((s.eta - 0.3).abs() < 1e-13);
        for v in &s.xi {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }
}
