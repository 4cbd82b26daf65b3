//! Leray-Lions operators `a(x, s, ξ)` with their structural constants.

use std::fmt;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Mat2, Vec2};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("permeability is not symmetric positive definite (eigenvalues {lo:e}, {hi:e})")]
    NotSpd { lo: f64, hi: f64 },
    #[error("invalid operator parameter: {0}")]
    InvalidParameter(String),
    #[error("sampled {check} condition violated at x = ({x}, {y}), s = {s}: {detail}")]
    Violation {
        check: &'static str,
        x: f64,
        y: f64,
        s: f64,
        detail: String,
    },
}

pub type FluxFn<T> = dyn Fn(Vec2<T>, T, Vec2<T>) -> Vec2<T> + Send + Sync;
pub type JacobianFn<T> = dyn Fn(Vec2<T>, T, Vec2<T>) -> Mat2<T> + Send + Sync;
pub type TensorFn<T> = dyn Fn(Vec2<T>, T) -> Mat2<T> + Send + Sync;

/// A flux `a(x, s, ξ)` with exponent `p` and constants for
/// `|a| ≤ ā + μ |ξ|^{p-1}`, `a·ξ ≥ a̲ |ξ|^p` and monotonicity in `ξ`.
#[derive(Clone)]
pub struct OperatorSpec<T> {
    pub name: String,
    pub p: T,
    pub abar: T,
    pub mu: T,
    pub coercivity: T,
    pub strictly_monotone: bool,
    flux: Arc<FluxFn<T>>,
    jacobian: Option<Arc<JacobianFn<T>>>,
    /// `Λ(x, s)` when `a(x, s, ξ) = Λ(x, s) ξ`.
    tensor: Option<Arc<TensorFn<T>>>,
}

impl<T: Scalar> fmt::Debug for OperatorSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorSpec")
            .field("name", &self.name)
            .field("p", &self.p)
            .field("abar", &self.abar)
            .field("mu", &self.mu)
            .field("coercivity", &self.coercivity)
            .field("quasilinear", &self.is_quasilinear())
            .finish()
    }
}

impl<T: Scalar> OperatorSpec<T> {
    /// A user-supplied operator; the constants are declared, not inferred,
    /// and should be confirmed with [`validate`](Self::validate).
    #[allow(clippy::too_many_arguments)]
    pub fn custom<F>(name: &str, p: T, abar: T, mu: T, coercivity: T, strictly_monotone: bool, flux: F) -> Result<Self, OperatorError>
    where
        F: Fn(Vec2<T>, T, Vec2<T>) -> Vec2<T> + Send + Sync + 'static,
    {
        check_exponent(p)?;
        Ok(Self {
            name: name.to_string(),
            p,
            abar,
            mu,
            coercivity,
            strictly_monotone,
            flux: Arc::new(flux),
            jacobian: None,
            tensor: None,
        })
    }

    /// Quasi-linear operator `a(x, s, ξ) = Λ(x, s) ξ` with `p = 2`.
    pub fn quasilinear<F>(name: &str, mu: T, coercivity: T, tensor: F) -> Self
    where
        F: Fn(Vec2<T>, T) -> Mat2<T> + Send + Sync + 'static,
    {
        let tensor: Arc<TensorFn<T>> = Arc::new(tensor);
        let (t1, t2) = (tensor.clone(), tensor.clone());
        Self {
            name: name.to_string(),
            p: T::two(),
            abar: T::zero(),
            mu,
            coercivity,
            strictly_monotone: coercivity > T::zero(),
            flux: Arc::new(move |x, s, xi| t1(x, s).apply(xi)),
            jacobian: Some(Arc::new(move |x, s, _| t2(x, s))),
            tensor: Some(tensor),
        }
    }

    pub fn with_jacobian<F>(mut self, jacobian: F) -> Self
    where
        F: Fn(Vec2<T>, T, Vec2<T>) -> Mat2<T> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn is_quasilinear(&self) -> bool {
        self.tensor.is_some()
    }

    pub fn flux(&self, x: Vec2<T>, s: T, xi: Vec2<T>) -> Vec2<T> {
        (self.flux)(x, s, xi)
    }

    pub fn tensor(&self, x: Vec2<T>, s: T) -> Option<Mat2<T>> {
        self.tensor.as_ref().map(|t| t(x, s))
    }

    /// `∂a/∂ξ`, analytic when available, central differences otherwise.
    pub fn jacobian(&self, x: Vec2<T>, s: T, xi: Vec2<T>) -> Mat2<T> {
        if let Some(j) = &self.jacobian {
            return j(x, s, xi);
        }
        let h = T::epsilon().cbrt() * (T::one() + xi.norm());
        let ex = Vec2::new(h, T::zero());
        let ey = Vec2::new(T::zero(), h);
        let dx = (self.flux(x, s, xi + ex) - self.flux(x, s, xi - ex)).scale(T::half() / h);
        let dy = (self.flux(x, s, xi + ey) - self.flux(x, s, xi - ey)).scale(T::half() / h);
        Mat2::new(dx.x, dy.x, dx.y, dy.y)
    }

    /// Samples `count` random `(x, s, ξ, χ)` with `x` in `[lo, hi]²`,
    /// `s, ξ, χ` in `[-10, 10]` and checks growth, coercivity and
    /// monotonicity with a relative slack of `1e-10`.
    pub fn validate(&self, count: usize, lo: f64, hi: f64, seed: u64) -> Result<(), OperatorError> {
        let mut rng = StdRng::seed_from_u64(seed);
        let slack = T::lit(1e-10);
        let p1 = self.p - T::one();
        for _ in 0..count {
            let mut r = |a: f64, b: f64| T::lit(rng.gen_range(a..b));
            let x = Vec2::new(r(lo, hi), r(lo, hi));
            let s = r(-10.0, 10.0);
            let xi = Vec2::new(r(-10.0, 10.0), r(-10.0, 10.0));
            let chi = Vec2::new(r(-10.0, 10.0), r(-10.0, 10.0));
            let a = self.flux(x, s, xi);
            let b = self.flux(x, s, chi);
            let violation = |check, detail: String| OperatorError::Violation {
                check,
                x: x.x.as_f64(),
                y: x.y.as_f64(),
                s: s.as_f64(),
                detail,
            };
            let bound = self.abar + self.mu * xi.norm().powf(p1);
            if a.norm() > bound * (T::one() + slack) + slack {
                return Err(violation("growth", format!("|a| = {} > {}", a.norm(), bound)));
            }
            let lower = self.coercivity * xi.norm().powf(self.p);
            if a.dot(xi) < lower * (T::one() - slack) - slack {
                return Err(violation("coercivity", format!("a·ξ = {} < {}", a.dot(xi), lower)));
            }
            let m = (a - b).dot(xi - chi);
            let scale = (a.norm() + b.norm()) * (xi.norm() + chi.norm());
            if m < -slack * scale || (self.strictly_monotone && m <= T::zero() && (xi - chi).norm() > T::zero()) {
                return Err(violation("monotonicity", format!("(a(ξ)-a(χ))·(ξ-χ) = {m}")));
            }
        }
        Ok(())
    }
}

fn check_exponent<T: Scalar>(p: T) -> Result<(), OperatorError> {
    if p > T::one() && p.is_finite() {
        Ok(())
    } else {
        Err(OperatorError::InvalidParameter(format!("exponent p = {p} must lie in (1, ∞)")))
    }
}

/// Parameters of the regularised Heaviside function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeavisideParams<T> {
    /// Lower plateau value.
    pub epsilon: T,
    /// Width of the linear ramp.
    pub lambda: T,
}

impl<T: Scalar> Default for HeavisideParams<T> {
    fn default() -> Self {
        Self {
            epsilon: T::lit(1e-3),
            lambda: T::lit(1e-3),
        }
    }
}

impl<T: Scalar> HeavisideParams<T> {
    pub fn new(epsilon: T, lambda: T) -> Result<Self, OperatorError> {
        if !(epsilon > T::zero() && epsilon <= T::one()) {
            return Err(OperatorError::InvalidParameter(format!("epsilon = {epsilon} must lie in (0, 1]")));
        }
        if !(lambda > T::zero() && lambda.is_finite()) {
            return Err(OperatorError::InvalidParameter(format!("lambda = {lambda} must be positive")));
        }
        Ok(Self { epsilon, lambda })
    }
}

/// `H(ρ) = 1` for `ρ ≥ 0`, `(1-ε)ρ/λ + 1` on `(-λ, 0)`, `ε` below `-λ`.
pub fn heaviside<T: Scalar>(rho: T, params: HeavisideParams<T>) -> T {
    if rho >= T::zero() {
        T::one()
    } else if rho > -params.lambda {
        (T::one() - params.epsilon) / params.lambda * rho + T::one()
    } else {
        params.epsilon
    }
}

/// Seepage operator `a(x, s, ξ) = H(s - y) K ξ`.
pub fn seepage_operator<T: Scalar>(params: HeavisideParams<T>, permeability: Mat2<T>) -> Result<OperatorSpec<T>, OperatorError> {
    HeavisideParams::new(params.epsilon, params.lambda)?;
    let (lo, hi) = permeability.sym_eigenvalues();
    let tol = T::lit(1e3) * T::epsilon() * hi.abs();
    if !(lo > T::zero()) || !permeability.is_symmetric(tol) {
        return Err(OperatorError::NotSpd {
            lo: lo.as_f64(),
            hi: hi.as_f64(),
        });
    }
    Ok(OperatorSpec::quasilinear("seepage", hi, params.epsilon * lo, move |x: Vec2<T>, s: T| {
        permeability.scale(heaviside(s - x.y, params))
    }))
}

/// `a(ξ) = |ξ|^{p-2} ξ`.
pub fn p_laplacian<T: Scalar>(p: T) -> Result<OperatorSpec<T>, OperatorError> {
    check_exponent(p)?;
    if p == T::two() {
        let mut op = OperatorSpec::quasilinear("p-laplacian", T::one(), T::one(), |_, _| Mat2::identity());
        op.strictly_monotone = true;
        return Ok(op);
    }
    let op = OperatorSpec::custom("p-laplacian", p, T::zero(), T::one(), T::one(), true, move |_, _, xi: Vec2<T>| {
        let n = xi.norm();
        if n == T::zero() {
            Vec2::zero()
        } else {
            xi.scale(n.powf(p - T::two()))
        }
    })?;
    Ok(op.with_jacobian(move |_, _, xi: Vec2<T>| p_laplacian_jacobian(p, xi)))
}

/// `|ξ|^{p-2} (I + (p-2) ξ ξᵀ / |ξ|²)`, with `|ξ|` floored for `p < 2`.
fn p_laplacian_jacobian<T: Scalar>(p: T, xi: Vec2<T>) -> Mat2<T> {
    let floor = T::lit(1e-12);
    let n = xi.norm().max(floor);
    let base = n.powf(p - T::two());
    let u = xi.scale(T::one() / n);
    Mat2::identity()
        .add(&Mat2::outer(u, u).scale(p - T::two()))
        .scale(base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn heaviside_values() {
        let p = HeavisideParams::<f64>::default();
        assert_eq!(heaviside(0.0, p), 1.0);
        assert!((heaviside(-5e-4, p) - 0.5005).abs() < 1e-12);
        assert_eq!(heaviside(-1.0, p), 1e-3);
    }

    #[test]
    fn heaviside_continuity() {
        let p = HeavisideParams::new(0.2, 0.5).unwrap();
        let tiny = 1e-15f64;
        assert!((heaviside(-tiny, p) - heaviside(0.0, p)).abs() < 1e-14);
        assert!((heaviside(-0.5 + tiny, p) - heaviside(-0.5 - tiny, p)).abs() < 1e-14);
        assert!(HeavisideParams::new(0.0, 1.0).is_err());
        assert!(HeavisideParams::new(0.5, -1.0).is_err());
    }

    #[test]
    fn seepage_tensor() {
        let op = seepage_operator(HeavisideParams::default(), Mat2::<f64>::identity()).unwrap();
        let x = Vec2::new(1.0, 2.0);
        assert_eq!(op.tensor(x, 2.0).unwrap(), Mat2::identity());
        assert_eq!(op.tensor(x, 1.0).unwrap(), Mat2::scalar(1e-3));
        assert!(op.is_quasilinear());
        assert_eq!(op.coercivity, 1e-3);
        op.validate(10_000, 0.0, 7.0, 1).unwrap();
        let bad = seepage_operator(HeavisideParams::default(), Mat2::new(1.0, 2.0, 2.0, 1.0));
        assert!(matches!(bad, Err(OperatorError::NotSpd { .. })));
    }

    #[test]
    fn p_laplacian_values() {
        let two = p_laplacian::<f64>(2.0).unwrap();
        assert_eq!(two.flux(Vec2::zero(), 0.0, Vec2::new(3.0, -1.0)), Vec2::new(3.0, -1.0));
        let four = p_laplacian::<f64>(4.0).unwrap();
        assert_eq!(four.flux(Vec2::zero(), 0.0, Vec2::new(1.0, 0.0)), Vec2::new(1.0, 0.0));
        assert!(p_laplacian::<f64>(1.0).is_err());
        for p in [1.5, 2.0, 3.0, 4.0] {
            p_laplacian::<f64>(p).unwrap().validate(10_000, -1.0, 1.0, 7).unwrap();
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let op = p_laplacian::<f64>(3.0).unwrap();
        let xi = Vec2::new(0.7, -1.2);
        let exact = op.jacobian(Vec2::zero(), 0.0, xi);
        let fd = OperatorSpec::custom("fd", 3.0, 0.0, 1.0, 1.0, true, |_, _, x: Vec2<f64>| x.scale(x.norm())).unwrap();
        let approx = fd.jacobian(Vec2::zero(), 0.0, xi);
        for i in 0..2 {
            for j in 0..2 {
                assert!((exact.m[i][j] - approx.m[i][j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn validation_catches_non_monotone() {
        let op = OperatorSpec::custom("bad", 2.0, 0.0, 1.0, 0.0, false, |_, _, x: Vec2<f64>| Vec2::new(-x.x, x.y)).unwrap();
        assert!(matches!(op.validate(1000, 0.0, 1.0, 3), Err(OperatorError::Violation { .. })));
    }

    proptest! {
        #[test]
        fn heaviside_in_range_and_nondecreasing(a in -2.0f64..2.0, b in -2.0f64..2.0, e in 1e-4f64..1.0, l in 1e-4f64..1.0) {
            let p = HeavisideParams::new(e, l).unwrap();
            let (ha, hb) = (heaviside(a, p), heaviside(b, p));
            prop_assert!(ha >= e - 1e-15 && ha <= 1.0);
            if a <= b { prop_assert!(ha <= hb + 1e-15); }
        }

        #[test]
        fn p_laplacian_strictly_monotone(p in 1.2f64..5.0, x0 in -3.0f64..3.0, x1 in -3.0f64..3.0, y0 in -3.0f64..3.0, y1 in -3.0f64..3.0) {
            let op = p_laplacian::<f64>(p).unwrap();
            let (xi, chi) = (Vec2::new(x0, x1), Vec2::new(y0, y1));
            prop_assume!((xi - chi).norm() > 1e-6);
            let m = (op.flux(Vec2::zero(), 0.0, xi) - op.flux(Vec2::zero(), 0.0, chi)).dot(xi - chi);
            prop_assert!(m > 0.0);
        }
    }
}
