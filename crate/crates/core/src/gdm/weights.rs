use serde::Serialize;

use crate::geometry::Vec2;
use crate::mesh::PolytopalMesh;
use crate::quadrature::disc_rule;
use crate::scalar::Scalar;

/// Radial and angular point counts of the disc rule; exact up to degree 10.
pub const DISC_RADIAL: usize = 6;
pub const DISC_ANGULAR: usize = 16;

/// Ball weights: `ω_K = |K| / |B_K|` on the ball `B_K` of centre `x_K` and
/// radius `h_K / ϱ_T`, zero elsewhere in `K`.
#[derive(Clone, Debug, Serialize)]
pub struct WeightFamily<T> {
    pub varrho: T,
    pub radius: Vec<T>,
    pub magnitude: Vec<T>,
}

impl<T: Scalar> WeightFamily<T> {
    pub fn new(mesh: &PolytopalMesh<T>) -> Self {
        let varrho = mesh.cells().iter().fold(T::zero(), |m, c| {
            c.faces.iter().fold(m, |m, cf| m.max(c.diameter / cf.distance))
        });
        let pi = T::lit(std::f64::consts::PI);
        let radius: Vec<T> = mesh.cells().iter().map(|c| c.diameter / varrho).collect();
        let magnitude = mesh
            .cells()
            .iter()
            .zip(&radius)
            .map(|(c, &r)| c.measure / (pi * r * r))
            .collect();
        Self {
            varrho,
            radius,
            magnitude,
        }
    }

    /// `ω_K(x)`.
    pub fn weight(&self, mesh: &PolytopalMesh<T>, k: usize, x: Vec2<T>) -> T {
        if (x - mesh.cell(k).centre).norm() <= self.radius[k] {
            self.magnitude[k]
        } else {
            T::zero()
        }
    }

    /// `(1/|K|) ∫_K ω_K φ`, which is the mean of `φ` over `B_K`.
    pub fn weighted_mean<G: Fn(Vec2<T>) -> T>(&self, mesh: &PolytopalMesh<T>, k: usize, phi: &G) -> T {
        let cell = mesh.cell(k);
        let rule = disc_rule(cell.centre, self.radius[k], DISC_RADIAL, DISC_ANGULAR);
        let s: T = rule.iter().map(|&(x, w)| w * phi(x)).sum();
        s * self.magnitude[k] / cell.measure
    }

    /// `(∫_K ω_K, ∫_K x ω_K)` by quadrature.
    pub fn moments(&self, mesh: &PolytopalMesh<T>, k: usize) -> (T, Vec2<T>) {
        let cell = mesh.cell(k);
        let rule = disc_rule(cell.centre, self.radius[k], DISC_RADIAL, DISC_ANGULAR);
        let mut mass = T::zero();
        let mut first = Vec2::zero();
        for &(x, w) in &rule {
            mass += w * self.magnitude[k];
            first += x.scale(w * self.magnitude[k]);
        }
        (mass, first)
    }

    /// Whether `B_K` lies inside the star-shaped cell, i.e. the radius does
    /// not exceed any `d_{K,σ}`.
    pub fn ball_inside(&self, mesh: &PolytopalMesh<T>, k: usize) -> bool {
        mesh.cell(k).faces.iter().all(|cf| self.radius[k] <= cf.distance)
    }
}
