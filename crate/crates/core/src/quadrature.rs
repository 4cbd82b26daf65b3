//! Quadrature rules on segments, triangles and discs.
//!
//! Nodes are computed in `f64` and cast on use.

use std::f64::consts::PI;

use crate::geometry::Vec2;
use crate::scalar::Scalar;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
///
/// Exact for polynomials of degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = ((i as f64 + 0.75) / (n as f64 + 0.5) * PI).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule.reverse();
    rule
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { p0 } else { p1 };
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, dp)
}

/// Points and weights for a Gauss rule on the segment `[a, b]`; weights sum
/// to the segment length.
pub fn segment_rule<T: Scalar>(a: Vec2<T>, b: Vec2<T>, n: usize) -> Vec<(Vec2<T>, T)> {
    let len = (b - a).norm();
    gauss_legendre(n)
        .into_iter()
        .map(|(x, w)| {
            let t = T::lit(0.5 * (x + 1.0));
            (a + (b - a).scale(t), len * T::lit(0.5 * w))
        })
        .collect()
}

/// Mean value of `f` over the segment `[a, b]` with the 3-point Gauss rule.
pub fn segment_mean<T: Scalar, F: Fn(Vec2<T>) -> T>(a: Vec2<T>, b: Vec2<T>, f: F) -> T {
    let mut s = T::zero();
    for (x, w) in gauss_legendre(3) {
        let t = T::lit(0.5 * (x + 1.0));
        s += T::lit(0.5 * w) * f(a + (b - a).scale(t));
    }
    s
}

/// Collapsed (Duffy) Gauss rule with `n x n` points on the triangle `(a, b, c)`.
///
/// Exact for polynomials of degree `2n - 2`; weights sum to the area.
pub fn triangle_rule<T: Scalar>(a: Vec2<T>, b: Vec2<T>, c: Vec2<T>, n: usize) -> Vec<(Vec2<T>, T)> {
    let area = (b - a).cross(c - a).abs() * T::half();
    let g = gauss_legendre(n);
    let mut out = Vec::with_capacity(n * n);
    for &(u, wu) in &g {
        let s = 0.5 * (u + 1.0);
        for &(v, wv) in &g {
            let t = 0.5 * (v + 1.0);
            // (s, t) in the square maps to barycentric (1-s, s(1-t), s t).
            let l1 = T::lit(s * (1.0 - t));
            let l2 = T::lit(s * t);
            let p = a + (b - a).scale(l1) + (c - a).scale(l2);
            out.push((p, area * T::lit(0.5 * wu * wv * s)));
        }
    }
    out
}

/// Polar rule on the disc of centre `c` and radius `r`: Gauss-Legendre in the
/// radius, trapezoid in the angle. Weights sum to the disc area.
///
/// With `nr` radial and `nt` angular points it integrates exactly every
/// polynomial of degree `min(2 nr - 2, nt - 1)`.
pub fn disc_rule<T: Scalar>(c: Vec2<T>, r: T, nr: usize, nt: usize) -> Vec<(Vec2<T>, T)> {
    let g = gauss_legendre(nr);
    let mut out = Vec::with_capacity(nr * nt);
    let dt = 2.0 * PI / nt as f64;
    for &(x, w) in &g {
        let rho = 0.5 * (x + 1.0);
        for j in 0..nt {
            let theta = j as f64 * dt;
            let p = c + Vec2::new(T::lit(theta.cos()), T::lit(theta.sin())).scale(r * T::lit(rho));
            out.push((p, r * r * T::lit(0.5 * w * rho * dt)));
        }
    }
    out
}
