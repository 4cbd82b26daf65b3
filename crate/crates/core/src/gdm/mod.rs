//! The HMM gradient discretisation.
//!
//! Unknowns are one value per cell and one per face. On each diamond
//! `D_{K,σ}` (the hull of `σ` and `x_K`) the reconstructed gradient is
//!
//! ```text
//! ∇_D v = ∇_K v + (√d α_K / d_{K,σ}) R_{K,σ}(v) n_{K,σ}
//! ∇_K v = (1/|K|) Σ_σ |σ| v_σ n_{K,σ}
//! R_{K,σ}(v) = v_σ - v_K - ∇_K v · (x̄_σ - x_K)
//! ```
//!
//! which is linear in the local unknowns `(v_K, (v_σ)_σ)`. For every diamond
//! the map is stored as a `2 x (n+1)` matrix, column 0 acting on `v_K`.

mod diagnostics;
mod weights;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Mat2, Vec2};
use crate::linalg::{LinalgError, SparseSymmetric, TripletBuilder};
use crate::mesh::{BoundaryTag, PolytopalMesh};
use crate::quadrature::segment_mean;
use crate::scalar::Scalar;

pub use diagnostics::{
    diag_coercivity, diag_consistency, diag_limit_conformity, CoercivityEstimate,
    ConformityEstimate, ConsistencyEstimate, ConvexSet,
};
pub use weights::WeightFamily;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GdmError {
    #[error("quadrature produced a non-finite value on {0}")]
    QuadratureFailure(String),
    #[error("test function is not admissible: {0}")]
    InadmissibleTestFunction(String),
    #[error("eigenvalue iteration did not converge in {iterations} steps (last change {change:e})")]
    SolverDivergence { iterations: usize, change: f64 },
    #[error("vector does not match the mesh: {0}")]
    Dimension(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// An element of `X_D`: one value per cell, one per face.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteVector<T> {
    pub cells: Vec<T>,
    pub faces: Vec<T>,
}

impl<T: Scalar> DiscreteVector<T> {
    pub fn zeros(mesh: &PolytopalMesh<T>) -> Self {
        Self::constant(mesh, T::zero())
    }

    pub fn constant(mesh: &PolytopalMesh<T>, c: T) -> Self {
        Self {
            cells: vec![c; mesh.num_cells()],
            faces: vec![c; mesh.num_faces()],
        }
    }

    pub fn conforms(&self, mesh: &PolytopalMesh<T>) -> bool {
        self.cells.len() == mesh.num_cells() && self.faces.len() == mesh.num_faces()
    }

    pub fn is_finite(&self) -> bool {
        self.cells.iter().chain(&self.faces).all(|v| v.is_finite())
    }

    /// Local unknowns `(v_K, v_σ1, ..., v_σn)` of cell `k`.
    pub fn local(&self, mesh: &PolytopalMesh<T>, k: usize) -> Vec<T> {
        let cell = mesh.cell(k);
        let mut out = Vec::with_capacity(cell.faces.len() + 1);
        out.push(self.cells[k]);
        out.extend(cell.faces.iter().map(|cf| self.faces[cf.face]));
        out
    }

    pub fn max_abs(&self) -> T {
        crate::scalar::max_abs(&self.cells).max(crate::scalar::max_abs(&self.faces))
    }

    /// `a x + b y`, entrywise.
    pub fn combine(a: T, x: &Self, b: T, y: &Self) -> Self {
        let f = |u: &[T], v: &[T]| u.iter().zip(v).map(|(&p, &q)| a * p + b * q).collect();
        Self {
            cells: f(&x.cells, &y.cells),
            faces: f(&x.faces, &y.faces),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::combine(T::one(), self, -T::one(), other)
    }

    pub fn cast<U: Scalar>(&self) -> DiscreteVector<U> {
        DiscreteVector {
            cells: self.cells.iter().map(|v| U::lit(v.as_f64())).collect(),
            faces: self.faces.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// Gradient operator of one cell.
#[derive(Clone, Debug)]
pub struct LocalGradient<T> {
    /// `|D_{K,σ}| = |σ| d_{K,σ} / d`.
    pub diamond_measures: Vec<T>,
    /// `b[i][j]`: contribution of local unknown `j` to the gradient on diamond `i`.
    pub b: Vec<Vec<Vec2<T>>>,
}

impl<T: Scalar> LocalGradient<T> {
    pub fn num_faces(&self) -> usize {
        self.diamond_measures.len()
    }

    pub fn apply(&self, local: &[T]) -> Vec<Vec2<T>> {
        self.b
            .iter()
            .map(|row| {
                row.iter()
                    .zip(local)
                    .fold(Vec2::zero(), |acc, (&c, &u)| acc + c.scale(u))
            })
            .collect()
    }

    /// `Σ_i |D_i| B_iᵀ Λ B_i`, row-major, size `(n+1)²`.
    pub fn matrix(&self, lambda: &Mat2<T>) -> Vec<T> {
        self.matrix_by_diamond(|_| *lambda)
    }

    /// Same as [`matrix`](Self::matrix) with one tensor per diamond.
    pub fn matrix_by_diamond<F: Fn(usize) -> Mat2<T>>(&self, lambda: F) -> Vec<T> {
        let m = self.num_faces() + 1;
        let mut out = vec![T::zero(); m * m];
        for (i, row) in self.b.iter().enumerate() {
            let l = lambda(i);
            let w = self.diamond_measures[i];
            let lb: Vec<Vec2<T>> = row.iter().map(|&c| l.apply(c)).collect();
            for a in 0..m {
                for c in 0..m {
                    out[a * m + c] += w * row[a].dot(lb[c]);
                }
            }
        }
        out
    }
}

/// Precomputed HMM operators over a mesh.
#[derive(Clone, Debug)]
pub struct HmmDiscretisation<'m, T> {
    mesh: &'m PolytopalMesh<T>,
    p: T,
    stabilisation: Vec<T>,
    local: Vec<LocalGradient<T>>,
}

impl<'m, T: Scalar> HmmDiscretisation<'m, T> {
    /// Discretisation with `A_K` the identity.
    pub fn new(mesh: &'m PolytopalMesh<T>, p: T) -> Self {
        Self::with_stabilisation(mesh, p, |_| T::one())
    }

    /// Discretisation with `A_K = α_K Id`, `α_K = alpha(k)`.
    pub fn with_stabilisation<F: Fn(usize) -> T + Sync>(mesh: &'m PolytopalMesh<T>, p: T, alpha: F) -> Self {
        let stabilisation: Vec<T> = (0..mesh.num_cells()).map(&alpha).collect();
        let local = (0..mesh.num_cells())
            .into_par_iter()
            .map(|k| local_gradient(mesh, k, stabilisation[k]))
            .collect();
        Self {
            mesh,
            p,
            stabilisation,
            local,
        }
    }

    pub fn mesh(&self) -> &'m PolytopalMesh<T> {
        self.mesh
    }

    pub fn p(&self) -> T {
        self.p
    }

    pub fn stabilisation(&self, k: usize) -> T {
        self.stabilisation[k]
    }

    pub fn local(&self, k: usize) -> &LocalGradient<T> {
        &self.local[k]
    }

    fn check(&self, v: &DiscreteVector<T>) {
        assert!(v.conforms(self.mesh), "discrete vector does not match the mesh");
    }

    /// `∇_K v`.
    pub fn cell_gradient(&self, k: usize, v: &DiscreteVector<T>) -> Vec2<T> {
        let cell = self.mesh.cell(k);
        let mut g = Vec2::zero();
        for cf in &cell.faces {
            g += cf.normal.scale(self.mesh.face(cf.face).measure * v.faces[cf.face]);
        }
        g.scale(T::one() / cell.measure)
    }

    /// `R_K(v)` in local face order.
    pub fn residual(&self, k: usize, v: &DiscreteVector<T>) -> Vec<T> {
        let cell = self.mesh.cell(k);
        let g = self.cell_gradient(k, v);
        cell.faces
            .iter()
            .map(|cf| {
                let face = self.mesh.face(cf.face);
                v.faces[cf.face] - v.cells[k] - g.dot(face.centre - cell.centre)
            })
            .collect()
    }

    /// `Π_D v`, one value per cell.
    pub fn reconstruct_function(&self, v: &DiscreteVector<T>) -> Vec<T> {
        self.check(v);
        v.cells.clone()
    }

    /// `T_D v` as `(face, value)` pairs over the boundary faces.
    pub fn reconstruct_trace(&self, v: &DiscreteVector<T>) -> Vec<(usize, T)> {
        self.check(v);
        self.mesh
            .faces()
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_boundary())
            .map(|(s, _)| (s, v.faces[s]))
            .collect()
    }

    /// `∇_D v`, indexed by cell then local face.
    pub fn reconstruct_gradient(&self, v: &DiscreteVector<T>) -> Vec<Vec<Vec2<T>>> {
        self.check(v);
        (0..self.mesh.num_cells())
            .map(|k| self.local[k].apply(&v.local(self.mesh, k)))
            .collect()
    }

    /// `‖Π_D v‖_{L^p}`.
    pub fn function_norm(&self, v: &DiscreteVector<T>, p: T) -> T {
        self.check(v);
        let s: T = self
            .mesh
            .cells()
            .iter()
            .zip(&v.cells)
            .map(|(c, &x)| c.measure * x.abs().powf(p))
            .sum();
        s.powf(T::one() / p)
    }

    /// `‖T_D v‖_{L^p(∂Ω)}`.
    pub fn trace_norm(&self, v: &DiscreteVector<T>, p: T) -> T {
        self.check(v);
        let s: T = self
            .mesh
            .faces()
            .iter()
            .zip(&v.faces)
            .filter(|(f, _)| f.is_boundary())
            .map(|(f, &x)| f.measure * x.abs().powf(p))
            .sum();
        s.powf(T::one() / p)
    }

    /// `‖∇_D v‖_{L^p}`.
    pub fn gradient_norm(&self, v: &DiscreteVector<T>, p: T) -> T {
        self.check(v);
        let s: T = (0..self.mesh.num_cells())
            .map(|k| {
                let lg = &self.local[k];
                lg.apply(&v.local(self.mesh, k))
                    .iter()
                    .zip(&lg.diamond_measures)
                    .map(|(g, &m)| m * g.norm().powf(p))
                    .sum::<T>()
            })
            .sum();
        s.powf(T::one() / p)
    }

    /// Discrete `W^{1,p}` semi-norm
    /// `(Σ_K Σ_σ |σ| d_{K,σ} |(v_σ - v_K)/d_{K,σ}|^p)^{1/p}`.
    pub fn discrete_seminorm(&self, v: &DiscreteVector<T>, p: T) -> T {
        self.check(v);
        let mut s = T::zero();
        for (k, cell) in self.mesh.cells().iter().enumerate() {
            for cf in &cell.faces {
                let q = (v.faces[cf.face] - v.cells[k]) / cf.distance;
                s += self.mesh.face(cf.face).measure * cf.distance * q.abs().powf(p);
            }
        }
        s.powf(T::one() / p)
    }

    /// Checks the two-sided stabilisation bound on cell `k` for the face
    /// vector `mu`, given `θ`:
    /// `θ⁻¹ Σ |D| |R/d|^p ≤ Σ |D| |(A R)/d|^p ≤ θ Σ |D| |R/d|^p`.
    pub fn stabilisation_bound_holds(&self, k: usize, mu: &[T], theta: T) -> bool {
        let cell = self.mesh.cell(k);
        assert_eq!(mu.len(), cell.faces.len());
        // R_K only sees face values; the cell value is zero.
        let mut v = DiscreteVector::zeros(self.mesh);
        for (cf, &m) in cell.faces.iter().zip(mu) {
            v.faces[cf.face] = m;
        }
        let r = self.residual(k, &v);
        let alpha = self.stabilisation[k];
        let p = self.p;
        let (mut plain, mut stab) = (T::zero(), T::zero());
        for ((cf, &ri), &dm) in cell.faces.iter().zip(&r).zip(&self.local[k].diamond_measures) {
            plain += dm * (ri / cf.distance).abs().powf(p);
            stab += dm * (alpha * ri / cf.distance).abs().powf(p);
        }
        let slack = T::lit(1e3) * T::epsilon() * plain;
        plain / theta <= stab + slack && stab <= theta * plain + slack
    }

    /// `I_{D,Γ}g`: face means of `g` on faces whose tag is in `tags`, zero
    /// elsewhere.
    pub fn interpolate_boundary<G>(&self, g: G, tags: &[BoundaryTag]) -> Result<DiscreteVector<T>, GdmError>
    where
        G: Fn(Vec2<T>) -> T,
    {
        let mut v = DiscreteVector::zeros(self.mesh);
        for (s, face) in self.mesh.faces().iter().enumerate() {
            if tags.contains(&face.tag) {
                v.faces[s] = self.face_mean(s, &g)?;
            }
        }
        Ok(v)
    }

    /// Interpolant with `v_K = φ(x_K)` and face means; exact on affine `φ`
    /// in the sense that `R_K` vanishes.
    pub fn interpolate_point<G>(&self, phi: G) -> Result<DiscreteVector<T>, GdmError>
    where
        G: Fn(Vec2<T>) -> T,
    {
        let mut v = DiscreteVector::zeros(self.mesh);
        for (k, cell) in self.mesh.cells().iter().enumerate() {
            v.cells[k] = phi(cell.centre);
            if !v.cells[k].is_finite() {
                return Err(GdmError::QuadratureFailure(format!("cell {k}")));
            }
        }
        for s in 0..self.mesh.num_faces() {
            v.faces[s] = self.face_mean(s, &phi)?;
        }
        Ok(v)
    }

    /// `P^ω_D φ`: weighted cell means and face means.
    pub fn interpolate_full<G>(&self, phi: G, weights: &WeightFamily<T>) -> Result<DiscreteVector<T>, GdmError>
    where
        G: Fn(Vec2<T>) -> T,
    {
        let mut v = DiscreteVector::zeros(self.mesh);
        for k in 0..self.mesh.num_cells() {
            v.cells[k] = weights.weighted_mean(self.mesh, k, &phi);
            if !v.cells[k].is_finite() {
                return Err(GdmError::QuadratureFailure(format!("cell {k}")));
            }
        }
        for s in 0..self.mesh.num_faces() {
            v.faces[s] = self.face_mean(s, &phi)?;
        }
        Ok(v)
    }

    fn face_mean<G: Fn(Vec2<T>) -> T>(&self, s: usize, g: &G) -> Result<T, GdmError> {
        let face = self.mesh.face(s);
        let verts = self.mesh.vertices();
        let m = segment_mean(verts[face.vertices[0]], verts[face.vertices[1]], g);
        if m.is_finite() {
            Ok(m)
        } else {
            Err(GdmError::QuadratureFailure(format!("face {s}")))
        }
    }
}

/// Numbering of the unknowns left free once the faces with an essential tag
/// are removed: all cells first, then the remaining faces.
#[derive(Clone, Debug)]
pub struct FreeDofs {
    pub face: Vec<Option<usize>>,
    num_cells: usize,
    len: usize,
}

impl FreeDofs {
    pub fn new<T: Scalar, F: Fn(BoundaryTag) -> bool>(mesh: &PolytopalMesh<T>, fixed: F) -> Self {
        let mut next = mesh.num_cells();
        let face = mesh
            .faces()
            .iter()
            .map(|f| {
                if fixed(f.tag) {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect();
        Self {
            face,
            num_cells: mesh.num_cells(),
            len: next,
        }
    }

    /// Removes the faces tagged `Gamma1` or `Dirichlet`.
    pub fn essential<T: Scalar>(mesh: &PolytopalMesh<T>) -> Self {
        Self::new(mesh, BoundaryTag::is_essential)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Global indices of the local unknowns of cell `k`.
    pub fn local<T: Scalar>(&self, mesh: &PolytopalMesh<T>, k: usize) -> Vec<Option<usize>> {
        let mut out = vec![Some(k)];
        out.extend(mesh.cell(k).faces.iter().map(|cf| self.face[cf.face]));
        out
    }

    pub fn gather<T: Scalar>(&self, v: &DiscreteVector<T>) -> Vec<T> {
        let mut x = v.cells.clone();
        x.resize(self.len, T::zero());
        for (s, idx) in self.face.iter().enumerate() {
            if let Some(i) = idx {
                x[*i] = v.faces[s];
            }
        }
        x
    }

    /// Inverse of [`gather`](Self::gather); fixed faces take `fill.faces`.
    pub fn scatter<T: Scalar>(&self, x: &[T], fill: &DiscreteVector<T>) -> DiscreteVector<T> {
        let mut v = fill.clone();
        v.cells.copy_from_slice(&x[..self.num_cells]);
        for (s, idx) in self.face.iter().enumerate() {
            if let Some(i) = idx {
                v.faces[s] = x[*i];
            }
        }
        v
    }
}

impl<'m, T: Scalar> HmmDiscretisation<'m, T> {
    /// `∫ Λ ∇_D u · ∇_D v` restricted to the free unknowns, with `Λ`
    /// constant on each cell.
    pub fn assemble<F: Fn(usize) -> Mat2<T>>(&self, dofs: &FreeDofs, lambda: F) -> SparseSymmetric<T> {
        let mut tb = TripletBuilder::new(dofs.len());
        for k in 0..self.mesh.num_cells() {
            let m = self.local[k].matrix(&lambda(k));
            let idx = dofs.local(self.mesh, k);
            let n = idx.len();
            for a in 0..n {
                let Some(i) = idx[a] else { continue };
                for c in 0..=a {
                    if let Some(j) = idx[c] {
                        tb.add(i, j, m[a * n + c]);
                    }
                }
            }
        }
        tb.build()
    }
}

fn local_gradient<T: Scalar>(mesh: &PolytopalMesh<T>, k: usize, alpha: T) -> LocalGradient<T> {
    let cell = mesh.cell(k);
    let n = cell.faces.len();
    let d = T::from_usize_lossy(mesh.dimension());
    let sqrt_d = d.sqrt();
    let inv_k = T::one() / cell.measure;
    // Columns of ∇_K.
    let gk: Vec<Vec2<T>> = cell
        .faces
        .iter()
        .map(|cf| cf.normal.scale(mesh.face(cf.face).measure * inv_k))
        .collect();
    let mut diamond_measures = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for (i, cf) in cell.faces.iter().enumerate() {
        let face = mesh.face(cf.face);
        diamond_measures.push(face.measure * cf.distance / d);
        let beta = sqrt_d * alpha / cf.distance;
        let e = face.centre - cell.centre;
        let ni = cf.normal.scale(beta);
        let mut row = Vec::with_capacity(n + 1);
        row.push(-ni);
        for (j, g) in gk.iter().enumerate() {
            let delta = if i == j { T::one() } else { T::zero() };
            row.push(*g + ni.scale(delta - g.dot(e)));
        }
        b.push(row);
    }
    LocalGradient { diamond_measures, b }
}

#[cfg(test)]
mod tests;
