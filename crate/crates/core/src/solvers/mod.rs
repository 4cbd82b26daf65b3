//! Discrete variational inequality solvers.
//!
//! Signorini and obstacle problems with a quasi-linear operator
//! `a(x, s, ξ) = Λ(x, s) ξ` go through the fixed-point (Kačanov) iteration,
//! each step of which is a linear variational inequality solved by an
//! active-set (monotonicity) iteration. Other operators, and the Bulkley
//! model, go through a damped Newton method inside the same kind of
//! active-set loop. The obstacle and Bulkley algorithms are not taken from
//! the literature of the scheme; their reports say so in `algorithm`.

mod bulkley;
mod condensed;
mod kacanov;
mod newton;
mod obstacle;
mod signorini;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gdm::{DiscreteVector, HmmDiscretisation};
use crate::geometry::{Mat2, Vec2};
use crate::linalg::{default_tolerance, LinalgError};
use crate::mesh::{BoundaryTag, PolytopalMesh};
use crate::operators::OperatorSpec;
use crate::quadrature::triangle_rule;
use crate::scalar::Scalar;

pub use bulkley::solve_bulkley;
pub use condensed::{solve_condensed, LocalSystem};
pub use kacanov::solve_kacanov;
pub use newton::solve_newton_vi;
pub use obstacle::solve_obstacle;
pub use signorini::{solve_linear_vi, LinearViOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("active-set iteration did not settle within its cap of {cap} iterations")]
    IterationCapExceeded { cap: usize },
    #[error("fixed-point iteration did not converge in {iterations} outer iterations (last change ratio {ratio:e})")]
    MaxOuterExceeded { iterations: usize, ratio: f64 },
    #[error("Newton iteration failed: {0}")]
    NewtonDivergence(String),
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(#[from] LinalgError),
    #[error("discrete convex set is empty: {0}")]
    Infeasible(String),
    #[error("this solver needs a quasi-linear operator a(x, s, ξ) = Λ(x, s) ξ; `{0}` is not")]
    NotQuasiLinear(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Signorini,
    Obstacle,
    Bulkley,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Signorini => "signorini",
            Model::Obstacle => "obstacle",
            Model::Bulkley => "bulkley",
        })
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "signorini" => Ok(Model::Signorini),
            "obstacle" => Ok(Model::Obstacle),
            "bulkley" => Ok(Model::Bulkley),
            other => Err(format!("unknown model `{other}` (expected signorini, obstacle or bulkley)")),
        }
    }
}

/// Approximate barrier of the convex set.
#[derive(Clone, Debug, PartialEq)]
pub enum Barrier<T> {
    None,
    /// `v_σ ≤ a_σ` on the faces carrying a value (the `Γ3` faces).
    Faces(Vec<Option<T>>),
    /// `v_K ≤ ψ_K`; `+∞` leaves a cell unconstrained.
    Cells(Vec<T>),
}

/// A discrete variational inequality on an HMM discretisation.
#[derive(Clone)]
pub struct VIProblem<'d, 'm, T> {
    pub disc: &'d HmmDiscretisation<'m, T>,
    pub operator: OperatorSpec<T>,
    pub model: Model,
    /// `f_K`, one value per cell.
    pub source: Vec<T>,
    /// Data on faces with an essential tag; other entries are ignored.
    pub boundary: DiscreteVector<T>,
    pub barrier: Barrier<T>,
    /// Coefficient of `∫|∇u|` in the Bulkley model.
    pub yield_coefficient: T,
}

/// Cell averages of `f`, integrated on the diamonds.
pub fn cell_averages<T: Scalar, F: Fn(Vec2<T>) -> T>(mesh: &PolytopalMesh<T>, f: F) -> Vec<T> {
    mesh.cells()
        .iter()
        .map(|cell| {
            let mut s = T::zero();
            for cf in &cell.faces {
                let face = mesh.face(cf.face);
                let v = mesh.vertices();
                for (x, w) in triangle_rule(cell.centre, v[face.vertices[0]], v[face.vertices[1]], 3) {
                    s += w * f(x);
                }
            }
            s / cell.measure
        })
        .collect()
}

impl<T: Scalar> fmt::Debug for VIProblem<'_, '_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VIProblem")
            .field("model", &self.model)
            .field("operator", &self.operator)
            .field("cells", &self.source.len())
            .field("yield_coefficient", &self.yield_coefficient)
            .finish()
    }
}

impl<'d, 'm, T: Scalar> VIProblem<'d, 'm, T> {
    /// Signorini problem: `u = g` on `Γ1`, no flow on `Γ2`, `u ≤ a`, outward
    /// flux `≥ 0` and complementarity on `Γ3`. The barrier of a `Γ3` face is
    /// `a` at its centre of mass.
    pub fn signorini<F, G, A>(disc: &'d HmmDiscretisation<'m, T>, operator: OperatorSpec<T>, f: F, g: G, a: A) -> Result<Self, SolverError>
    where
        F: Fn(Vec2<T>) -> T,
        G: Fn(Vec2<T>) -> T,
        A: Fn(Vec2<T>) -> T,
    {
        let mesh = disc.mesh();
        let boundary = disc
            .interpolate_boundary(g, &[BoundaryTag::Gamma1])
            .map_err(|e| SolverError::InvalidProblem(e.to_string()))?;
        let barrier = mesh
            .faces()
            .iter()
            .map(|face| (face.tag == BoundaryTag::Gamma3).then(|| a(face.centre)))
            .collect();
        let p = Self {
            disc,
            operator,
            model: Model::Signorini,
            source: cell_averages(mesh, f),
            boundary,
            barrier: Barrier::Faces(barrier),
            yield_coefficient: T::zero(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Obstacle problem: `u = h` on `Dirichlet` faces, `Π_D u ≤ ψ` with
    /// `ψ_K = ψ(x_K)`.
    pub fn obstacle<F, H, P>(disc: &'d HmmDiscretisation<'m, T>, operator: OperatorSpec<T>, f: F, h: H, psi: P) -> Result<Self, SolverError>
    where
        F: Fn(Vec2<T>) -> T,
        H: Fn(Vec2<T>) -> T,
        P: Fn(Vec2<T>) -> T,
    {
        let mesh = disc.mesh();
        let boundary = disc
            .interpolate_boundary(h, &[BoundaryTag::Dirichlet])
            .map_err(|e| SolverError::InvalidProblem(e.to_string()))?;
        let p = Self {
            disc,
            operator,
            model: Model::Obstacle,
            source: cell_averages(mesh, f),
            boundary,
            barrier: Barrier::Cells(mesh.cells().iter().map(|c| psi(c.centre)).collect()),
            yield_coefficient: T::zero(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Bulkley problem with homogeneous Dirichlet data on the whole boundary.
    pub fn bulkley<F: Fn(Vec2<T>) -> T>(disc: &'d HmmDiscretisation<'m, T>, operator: OperatorSpec<T>, f: F, yield_coefficient: T) -> Result<Self, SolverError> {
        let mesh = disc.mesh();
        let p = Self {
            disc,
            operator,
            model: Model::Bulkley,
            source: cell_averages(mesh, f),
            boundary: DiscreteVector::zeros(mesh),
            barrier: Barrier::None,
            yield_coefficient,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn mesh(&self) -> &'m PolytopalMesh<T> {
        self.disc.mesh()
    }

    /// Whether face `s` carries prescribed data in this model.
    pub fn is_fixed_face(&self, s: usize) -> bool {
        let face = self.mesh().face(s);
        match self.model {
            Model::Bulkley => face.is_boundary(),
            _ => face.tag.is_essential(),
        }
    }

    /// Faces (Signorini) or cells (obstacle) under a unilateral constraint.
    pub fn constrained(&self) -> Vec<usize> {
        match &self.barrier {
            Barrier::None => Vec::new(),
            Barrier::Faces(b) => b.iter().enumerate().filter(|(_, a)| a.is_some()).map(|(s, _)| s).collect(),
            Barrier::Cells(psi) => psi.iter().enumerate().filter(|(_, v)| v.is_finite()).map(|(k, _)| k).collect(),
        }
    }

    fn face_barrier(&self, s: usize) -> T {
        match &self.barrier {
            Barrier::Faces(b) => b[s].unwrap_or(T::infinity()),
            _ => T::infinity(),
        }
    }

    fn cell_barrier(&self, k: usize) -> T {
        match &self.barrier {
            Barrier::Cells(psi) => psi[k],
            _ => T::infinity(),
        }
    }

    /// Sizes, finiteness and a compatibility check between boundary data
    /// and barriers: a barrier face touching (sharing a vertex with) a
    /// Dirichlet face must not lie below its data, and the obstacle of a
    /// cell must not lie below the data of its Dirichlet faces.
    pub fn validate(&self) -> Result<(), SolverError> {
        let mesh = self.mesh();
        let bad = |m: String| Err(SolverError::InvalidProblem(m));
        if self.source.len() != mesh.num_cells() || self.source.iter().any(|v| !v.is_finite()) {
            return bad("source must hold one finite value per cell".into());
        }
        if !self.boundary.conforms(mesh) {
            return bad("boundary data does not match the mesh".into());
        }
        for s in 0..mesh.num_faces() {
            if self.is_fixed_face(s) && !self.boundary.faces[s].is_finite() {
                return bad(format!("non-finite boundary data on face {s}"));
            }
        }
        if !(self.yield_coefficient >= T::zero()) {
            return bad("yield coefficient must be non-negative".into());
        }
        let tol = T::lit(1e-12);
        match &self.barrier {
            Barrier::None => {}
            Barrier::Faces(b) => {
                if b.len() != mesh.num_faces() {
                    return bad("face barrier does not match the mesh".into());
                }
                let mut vertex_data: Vec<Option<T>> = vec![None; mesh.vertices().len()];
                for (s, face) in mesh.faces().iter().enumerate() {
                    if self.is_fixed_face(s) {
                        for &v in &face.vertices {
                            let g = self.boundary.faces[s];
                            vertex_data[v] = Some(vertex_data[v].map_or(g, |h: T| h.max(g)));
                        }
                    }
                }
                for (s, a) in b.iter().enumerate() {
                    let Some(a) = a else { continue };
                    if a.is_nan() {
                        return bad(format!("barrier on face {s} is NaN"));
                    }
                    for &v in &mesh.face(s).vertices {
                        if let Some(g) = vertex_data[v] {
                            if *a < g - tol * (T::one() + g.abs()) {
                                return Err(SolverError::Infeasible(format!(
                                    "barrier {a} on face {s} lies below the Dirichlet value {g} of an adjacent face"
                                )));
                            }
                        }
                    }
                }
            }
            Barrier::Cells(psi) => {
                if psi.len() != mesh.num_cells() || psi.iter().any(|v| v.is_nan()) {
                    return bad("obstacle must hold one value per cell".into());
                }
                for (s, face) in mesh.faces().iter().enumerate() {
                    if !self.is_fixed_face(s) {
                        continue;
                    }
                    let k = face.cells.0;
                    let h = self.boundary.faces[s];
                    if psi[k] < h - tol * (T::one() + h.abs()) {
                        return Err(SolverError::Infeasible(format!(
                            "obstacle {} in cell {k} lies below the Dirichlet value {h} of its face {s}",
                            psi[k]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `Λ_K = Λ(x_K, w_K)`, constant on each cell.
    pub fn frozen_tensors(&self, w: &DiscreteVector<T>) -> Result<Vec<Mat2<T>>, SolverError> {
        let mesh = self.mesh();
        (0..mesh.num_cells())
            .map(|k| {
                self.operator
                    .tensor(mesh.cell(k).centre, w.cells[k])
                    .ok_or_else(|| SolverError::NotQuasiLinear(self.operator.name.clone()))
            })
            .collect()
    }
}

/// The seepage problem on a dam-tagged mesh: `f = 0`, `g = 5` on `x = 0`
/// and `g = 1` on the lower slanted side, barrier `ȳ_σ` on `Γ3`.
pub fn dam_problem<'d, 'm, T: Scalar>(disc: &'d HmmDiscretisation<'m, T>, operator: OperatorSpec<T>) -> Result<VIProblem<'d, 'm, T>, SolverError> {
    VIProblem::signorini(
        disc,
        operator,
        |_| T::zero(),
        |x: Vec2<T>| if x.x < T::lit(3.5) { T::lit(5.0) } else { T::one() },
        |x: Vec2<T>| x.y,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationOptions<T> {
    pub enabled: bool,
    /// Trigger when `|u^n - u^{n-2}|_∞ ≤ trigger_tol |u^{n-2}|_∞`.
    pub trigger_tol: T,
    /// `u^{n+1} = u^n + factor (ũ^{n+1} - u^n)`.
    pub factor: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions<T> {
    /// Stopping factor of the fixed-point iteration.
    pub delta: T,
    pub max_outer: usize,
    pub relaxation: RelaxationOptions<T>,
    /// Carry active sets between outer iterations.
    pub warm_start: bool,
    /// Relative residual accepted from linear solves.
    pub linear_tol: T,
    pub newton_tol: T,
    pub newton_max_iter: usize,
    /// First Bulkley regularisation parameter and number of decades.
    pub eta0: T,
    pub eta_steps: usize,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            delta: T::lit(1e-2),
            max_outer: 50,
            relaxation: RelaxationOptions {
                enabled: true,
                trigger_tol: T::lit(1e-2),
                factor: T::half(),
            },
            warm_start: true,
            linear_tol: default_tolerance(),
            newton_tol: T::lit(1e-10),
            newton_max_iter: 60,
            eta0: T::lit(1e-2),
            eta_steps: 4,
        }
    }
}

/// Constrained unknowns (`Γ3` faces or obstacle cells) split into the active
/// set `A` (held at the barrier) and its complement `B`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSetState {
    pub constrained: Vec<usize>,
    pub active: Vec<bool>,
    /// Iterations used by the last call.
    pub iterations: usize,
    pub cap: usize,
}

impl ActiveSetState {
    /// Every constrained unknown starts in `A`.
    pub fn all_active(constrained: Vec<usize>) -> Self {
        let n = constrained.len();
        Self {
            constrained,
            active: vec![true; n],
            iterations: 0,
            cap: n,
        }
    }

    pub fn initial<T: Scalar>(problem: &VIProblem<'_, '_, T>) -> Self {
        Self::all_active(problem.constrained())
    }

    pub fn active_set(&self) -> Vec<usize> {
        self.constrained.iter().zip(&self.active).filter(|(_, &a)| a).map(|(&i, _)| i).collect()
    }

    pub fn inactive_set(&self) -> Vec<usize> {
        self.constrained.iter().zip(&self.active).filter(|(_, &a)| !a).map(|(&i, _)| i).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationEvent<T> {
    /// Index `n + 1` of the relaxed iterate.
    pub iteration: usize,
    /// `|u^n - u^{n-2}|_∞ / |u^{n-2}|_∞`.
    pub ratio: T,
}

/// Scaled optimality residuals of a returned solution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals<T> {
    /// Unconstrained balance equations (cells, interior and natural faces).
    pub equilibrium: T,
    /// `|F_σ (u_σ - a_σ)|` or `|λ_K (u_K - ψ_K)|`, scaled.
    pub complementarity: T,
    /// Largest violation of `u ≤ barrier` and of the multiplier sign, scaled.
    pub sign: T,
    /// `|Σ_K (|K| f_K - λ_K) - Σ_∂Ω |σ| F_σ|`, scaled.
    pub flux_balance: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport<T> {
    pub model: Model,
    pub algorithm: String,
    pub solution: DiscreteVector<T>,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: Vec<usize>,
    /// `‖Π_D(u^{n+1}-u^n)‖ + ‖∇_D(u^{n+1}-u^n)‖` per outer step (or the
    /// Newton residual for Newton solves).
    pub residual_history: Vec<T>,
    pub relaxation_events: Vec<RelaxationEvent<T>>,
    pub kkt: KktResiduals<T>,
    pub active_set: Option<ActiveSetState>,
    /// Smallest value of the Bulkley inequality over the probe directions.
    pub vi_probe_residual: Option<T>,
    /// Iterate at which `Λ` was frozen for the final linear solve
    /// (fixed-point solves only).
    pub frozen_iterate: Option<DiscreteVector<T>>,
    pub wall_time_seconds: f64,
}

/// Local response `r_K = Σ_i |D_i| B_iᵀ a_i` of cell `k` for the frozen
/// tensor `lambda` (so `r_K = M_K u_K`).
pub(crate) fn linear_response<T: Scalar>(disc: &HmmDiscretisation<'_, T>, k: usize, lambda: &Mat2<T>, u: &DiscreteVector<T>) -> Vec<T> {
    let m = disc.local(k).matrix(lambda);
    let loc = u.local(disc.mesh(), k);
    let n = loc.len();
    (0..n).map(|a| (0..n).map(|c| m[a * n + c] * loc[c]).sum()).collect()
}

/// Per-cell fluxes `F_{K,σ}(u) = -r_{K,σ} / |σ|`, indexed like the cell's faces.
pub fn assemble_fluxes<T: Scalar>(disc: &HmmDiscretisation<'_, T>, lambda: &[Mat2<T>], u: &DiscreteVector<T>) -> Vec<Vec<T>> {
    let mesh = disc.mesh();
    (0..mesh.num_cells())
        .map(|k| {
            let r = linear_response(disc, k, &lambda[k], u);
            mesh.cell(k)
                .faces
                .iter()
                .enumerate()
                .map(|(i, cf)| -r[i + 1] / mesh.face(cf.face).measure)
                .collect()
        })
        .collect()
}

/// KKT residuals from local responses `r_K` (cell entry first).
pub(crate) fn kkt_residuals<T: Scalar>(problem: &VIProblem<'_, '_, T>, u: &DiscreteVector<T>, responses: &[Vec<T>]) -> KktResiduals<T> {
    let mesh = problem.mesh();
    let tiny = T::min_positive_value();
    let mut scale = tiny;
    for (k, r) in responses.iter().enumerate() {
        scale = scale.max((mesh.cell(k).measure * problem.source[k]).abs());
        for v in r {
            scale = scale.max(v.abs());
        }
    }
    let u_scale = u.max_abs().max(T::one());
    // Face sums of the responses.
    let mut face_sum = vec![T::zero(); mesh.num_faces()];
    for (k, cell) in mesh.cells().iter().enumerate() {
        for (i, cf) in cell.faces.iter().enumerate() {
            face_sum[cf.face] += responses[k][i + 1];
        }
    }
    let mut out = KktResiduals::<T>::default();
    let mut multipliers = T::zero();
    for (k, r) in responses.iter().enumerate() {
        let lam = mesh.cell(k).measure * problem.source[k] - r[0];
        let psi = problem.cell_barrier(k);
        if psi.is_finite() {
            // λ ≥ 0, u ≤ ψ, λ (ψ - u) = 0.
            out.sign = out.sign.max((-lam).max(T::zero()) / scale);
            out.sign = out.sign.max((u.cells[k] - psi).max(T::zero()) / u_scale);
            out.complementarity = out.complementarity.max((lam * (psi - u.cells[k])).abs() / (scale * u_scale));
            multipliers += lam;
        } else {
            out.equilibrium = out.equilibrium.max(lam.abs() / scale);
        }
    }
    let mut boundary_flux = T::zero();
    let mut flux_abs = T::zero();
    for (s, face) in mesh.faces().iter().enumerate() {
        let r = face_sum[s];
        if face.is_boundary() {
            boundary_flux += -r;
            flux_abs += r.abs();
        }
        if problem.is_fixed_face(s) {
            continue;
        }
        let a = problem.face_barrier(s);
        if a.is_finite() {
            // Outward flux F = -r / |σ| ≥ 0, u ≤ a, F (u - a) = 0.
            out.sign = out.sign.max(r.max(T::zero()) / scale);
            out.sign = out.sign.max((u.faces[s] - a).max(T::zero()) / u_scale);
            out.complementarity = out.complementarity.max((r * (u.faces[s] - a)).abs() / (scale * u_scale));
        } else {
            out.equilibrium = out.equilibrium.max(r.abs() / scale);
        }
    }
    let load: T = mesh.cells().iter().zip(&problem.source).map(|(c, &f)| c.measure * f).sum();
    let load_abs: T = mesh.cells().iter().zip(&problem.source).map(|(c, &f)| (c.measure * f).abs()).sum();
    let denom = flux_abs.max(load_abs).max(tiny);
    out.flux_balance = (load - multipliers - boundary_flux).abs() / denom;
    out
}

/// Dispatches on the model and the operator kind.
pub fn solve<T: Scalar>(problem: &VIProblem<'_, '_, T>, options: &SolverOptions<T>) -> Result<SolveReport<T>, SolverError> {
    match problem.model {
        Model::Bulkley => solve_bulkley(problem, options),
        Model::Signorini if problem.operator.is_quasilinear() => solve_kacanov(problem, options),
        Model::Obstacle => solve_obstacle(problem, options),
        Model::Signorini => solve_newton_vi(problem, options),
    }
}
