//! Dam seepage benchmark, demo problems and refinement studies.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gdm::{diag_consistency, diag_limit_conformity, ConvexSet, DiscreteVector, GdmError, HmmDiscretisation, WeightFamily};
use crate::geometry::{Mat2, Vec2};
use crate::mesh::{
    cartesian, dam_hexagonal, dam_kershaw, regularity_report, triangular, unit_square_tags, BoundaryTag, MeshError,
    PolytopalMesh,
};
use crate::operators::{seepage_operator, HeavisideParams, OperatorError, OperatorSpec};
use crate::scalar::Scalar;
use crate::solvers::{
    assemble_fluxes, dam_problem, solve, solve_bulkley, solve_obstacle, ActiveSetState, SolveReport, SolverError,
    SolverOptions, VIProblem,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no Γ3 face is active, so there is no seepage face")]
    EmptyActiveSet,
    #[error("the report carries no active set")]
    MissingActiveSet,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Gdm(#[from] GdmError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("invalid mesh spec `{0}`")]
    MeshSpec(String),
}

/// Named generator call: `cartesian:N`, `triangular:N` (unit square, all
/// Dirichlet), `dam-hex:CELLS` or `dam-kershaw:LEVEL`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MeshSpec {
    Cartesian(usize),
    Triangular(usize),
    DamHexagonal(usize),
    DamKershaw(usize),
}

impl MeshSpec {
    pub fn build<T: Scalar>(self) -> Result<PolytopalMesh<T>, MeshError> {
        let square = || unit_square_tags((0.0, 0.0), (1.0, 1.0), [BoundaryTag::Dirichlet; 4]);
        match self {
            MeshSpec::Cartesian(n) => cartesian(n, n, (0.0, 0.0), (1.0, 1.0), square()),
            MeshSpec::Triangular(n) => triangular(n, n, (0.0, 0.0), (1.0, 1.0), square()),
            MeshSpec::DamHexagonal(n) => dam_hexagonal(n),
            MeshSpec::DamKershaw(l) => dam_kershaw(l),
        }
    }

    pub fn is_dam(self) -> bool {
        matches!(self, MeshSpec::DamHexagonal(_) | MeshSpec::DamKershaw(_))
    }
}

impl fmt::Display for MeshSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshSpec::Cartesian(n) => write!(f, "cartesian:{n}"),
            MeshSpec::Triangular(n) => write!(f, "triangular:{n}"),
            MeshSpec::DamHexagonal(n) => write!(f, "dam-hex:{n}"),
            MeshSpec::DamKershaw(l) => write!(f, "dam-kershaw:{l}"),
        }
    }
}

impl FromStr for MeshSpec {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || BenchError::MeshSpec(s.to_string());
        let (kind, n) = s.split_once(':').ok_or_else(bad)?;
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        match kind.trim() {
            "cartesian" => Ok(MeshSpec::Cartesian(n)),
            "triangular" => Ok(MeshSpec::Triangular(n)),
            "dam-hex" => Ok(MeshSpec::DamHexagonal(n)),
            "dam-kershaw" => Ok(MeshSpec::DamKershaw(n)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for MeshSpec {
    type Error = BenchError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<MeshSpec> for String {
    fn from(m: MeshSpec) -> String {
        m.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaceClass {
    /// In the active set: `u = y`, water leaves the dam.
    Constrained,
    /// Inactive: `u < y` and no flow.
    ZeroFlux,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshMetadata<T> {
    pub cells: usize,
    pub faces: usize,
    pub gamma3_faces: usize,
    pub h_mesh: T,
    pub theta: T,
}

impl<T: Scalar> MeshMetadata<T> {
    pub fn of(mesh: &PolytopalMesh<T>) -> Self {
        Self {
            cells: mesh.num_cells(),
            faces: mesh.num_faces(),
            gamma3_faces: mesh.count_tag(BoundaryTag::Gamma3),
            h_mesh: mesh.h_mesh(),
            theta: regularity_report(mesh).theta,
        }
    }
}

/// Darcy velocity `-a(x_K, u_K, ∇_D u)` (that is `-Λ(x_K, u_K) ∇_D u` for
/// quasi-linear operators).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DarcyField<T> {
    /// Per cell, one vector per diamond in the cell's face order.
    pub diamonds: Vec<Vec<Vec2<T>>>,
    /// Diamond-measure weighted cell averages.
    pub cells: Vec<Vec2<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeepageResult<T> {
    pub report: SolveReport<T>,
    /// `[y_lo, y_hi]`, or `None` when no `Γ3` face is active.
    pub seepage_interval: Option<[T; 2]>,
    /// `(face, class)` for every `Γ3` face.
    pub classification: Vec<(usize, FaceClass)>,
    pub darcy: DarcyField<T>,
    /// `Σ |σ| F_σ` over `Γ2`, with the coefficient of the final linear solve.
    pub gamma2_net_flux: T,
    pub mesh: MeshMetadata<T>,
}

impl<T: Scalar> SeepageResult<T> {
    /// Midpoint of the seepage interval.
    pub fn seepage_ordinate(&self) -> Option<T> {
        self.seepage_interval.map(|[a, b]| (a + b) / T::two())
    }
}

/// Bracket of the seepage point: the highest active face ordinate and the
/// next `Γ3` face ordinate above it (the same value when there is none).
pub fn locate_seepage_point<T: Scalar>(state: &ActiveSetState, mesh: &PolytopalMesh<T>) -> Result<[T; 2], BenchError> {
    let y = |s: usize| mesh.face(s).centre.y;
    let lo = state
        .constrained
        .iter()
        .zip(&state.active)
        .filter(|(_, &a)| a)
        .map(|(&s, _)| y(s))
        .reduce(|a, b| a.max(b))
        .ok_or(BenchError::EmptyActiveSet)?;
    let hi = mesh
        .faces_with_tag(BoundaryTag::Gamma3)
        .map(y)
        .filter(|&v| v > lo)
        .reduce(|a, b| a.min(b))
        .unwrap_or(lo);
    Ok([lo, hi])
}

pub fn darcy_velocity<T: Scalar>(disc: &HmmDiscretisation<'_, T>, u: &DiscreteVector<T>, operator: &OperatorSpec<T>) -> DarcyField<T> {
    let mesh = disc.mesh();
    let grads = disc.reconstruct_gradient(u);
    let diamonds: Vec<Vec<Vec2<T>>> = mesh
        .cells()
        .iter()
        .enumerate()
        .map(|(k, cell)| grads[k].iter().map(|&g| -operator.flux(cell.centre, u.cells[k], g)).collect())
        .collect();
    let cells = diamonds
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let lg = disc.local(k);
            let sum = v
                .iter()
                .zip(&lg.diamond_measures)
                .fold(Vec2::zero(), |acc, (&w, &m)| acc + w.scale(m));
            sum.scale(T::one() / mesh.cell(k).measure)
        })
        .collect();
    DarcyField { diamonds, cells }
}

/// `Σ |σ| F_{K,σ}` over the boundary faces carrying `tag`.
pub fn net_boundary_flux<T: Scalar>(disc: &HmmDiscretisation<'_, T>, lambda: &[Mat2<T>], u: &DiscreteVector<T>, tag: BoundaryTag) -> T {
    let mesh = disc.mesh();
    let fluxes = assemble_fluxes(disc, lambda, u);
    let mut total = T::zero();
    for (k, cell) in mesh.cells().iter().enumerate() {
        for (cf, &f) in cell.faces.iter().zip(&fluxes[k]) {
            let face = mesh.face(cf.face);
            if face.is_boundary() && face.tag == tag {
                total += face.measure * f;
            }
        }
    }
    total
}

/// Solves the dam problem on a dam-tagged mesh with the seepage operator.
pub fn run_dam_benchmark<T: Scalar>(
    mesh: &PolytopalMesh<T>,
    params: HeavisideParams<T>,
    options: &SolverOptions<T>,
) -> Result<SeepageResult<T>, BenchError> {
    let disc = HmmDiscretisation::new(mesh, T::two());
    let op = seepage_operator(params, Mat2::identity())?;
    let problem = dam_problem(&disc, op.clone())?;
    let report = solve(&problem, options)?;
    let state = report.active_set.as_ref().ok_or(BenchError::MissingActiveSet)?;
    let seepage_interval = match locate_seepage_point(state, mesh) {
        Ok(i) => Some(i),
        Err(BenchError::EmptyActiveSet) => None,
        Err(e) => return Err(e),
    };
    let classification = state
        .constrained
        .iter()
        .zip(&state.active)
        .map(|(&s, &a)| (s, if a { FaceClass::Constrained } else { FaceClass::ZeroFlux }))
        .collect();
    let frozen = report.frozen_iterate.as_ref().unwrap_or(&report.solution);
    let lambda = problem.frozen_tensors(frozen)?;
    let gamma2_net_flux = net_boundary_flux(&disc, &lambda, &report.solution, BoundaryTag::Gamma2);
    let darcy = darcy_velocity(&disc, &report.solution, &op);
    Ok(SeepageResult {
        report,
        seepage_interval,
        classification,
        darcy,
        gamma2_net_flux,
        mesh: MeshMetadata::of(mesh),
    })
}

/// Obstacle demo: `f = 4`, `h = 0` and the paraboloid
/// `ψ = 0.03 + 0.4 |x - (1/2, 1/2)|²`, which binds near `(1/2, 1/2)`.
pub fn obstacle_demo<T: Scalar>(mesh: &PolytopalMesh<T>, operator: OperatorSpec<T>, options: &SolverOptions<T>) -> Result<SolveReport<T>, BenchError> {
    let disc = HmmDiscretisation::new(mesh, operator.p);
    let half = T::lit(0.5);
    let psi = move |x: Vec2<T>| T::lit(0.03) + T::lit(0.4) * ((x.x - half).powi(2) + (x.y - half).powi(2));
    let problem = VIProblem::obstacle(&disc, operator, |_| T::lit(4.0), |_| T::zero(), psi)?;
    Ok(solve_obstacle(&problem, options)?)
}

/// Bulkley demo: `f = 1` with homogeneous data.
pub fn bulkley_demo<T: Scalar>(
    mesh: &PolytopalMesh<T>,
    operator: OperatorSpec<T>,
    yield_coefficient: T,
    options: &SolverOptions<T>,
) -> Result<SolveReport<T>, BenchError> {
    let disc = HmmDiscretisation::new(mesh, operator.p);
    let problem = VIProblem::bulkley(&disc, operator, |_| T::one(), yield_coefficient)?;
    Ok(solve_bulkley(&problem, options)?)
}

/// One row of a refinement study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub mesh_id: String,
    pub cells: usize,
    pub h_mesh: Option<f64>,
    pub theta: Option<f64>,
    /// Upper bound of `S_D` for `sin(πx) sin(πy)`.
    pub s_d: Option<f64>,
    /// Lower bound of `W_D` for `(sin(x + 2y), x y²)`.
    pub w_d: Option<f64>,
    pub outer_iterations: Option<usize>,
    pub seepage_lo: Option<f64>,
    pub seepage_hi: Option<f64>,
    pub seepage_ordinate: Option<f64>,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
}

const STUDY_PROBES: usize = 20;
const STUDY_SEED: u64 = 7;

fn study_row(spec: MeshSpec, options: &SolverOptions<f64>, params: HeavisideParams<f64>) -> StudyRow {
    let mut row = StudyRow {
        mesh_id: spec.to_string(),
        cells: 0,
        h_mesh: None,
        theta: None,
        s_d: None,
        w_d: None,
        outer_iterations: None,
        seepage_lo: None,
        seepage_hi: None,
        seepage_ordinate: None,
        status: "ok".into(),
    };
    let run = |row: &mut StudyRow| -> Result<(), BenchError> {
        let mesh = spec.build::<f64>()?;
        row.cells = mesh.num_cells();
        row.h_mesh = Some(mesh.h_mesh());
        row.theta = Some(regularity_report(&mesh).theta);
        let disc = HmmDiscretisation::new(&mesh, 2.0);
        let weights = WeightFamily::new(&mesh);
        let s = diag_consistency(
            &disc,
            |x| (PI * x.x).sin() * (PI * x.y).sin(),
            |x| Vec2::new(PI * (PI * x.x).cos() * (PI * x.y).sin(), PI * (PI * x.x).sin() * (PI * x.y).cos()),
            &ConvexSet::unconstrained(),
            &weights,
        )?;
        row.s_d = Some(s.value);
        let w = diag_limit_conformity(&disc, |x| Vec2::new((x.x + 2.0 * x.y).sin(), x.x * x.y * x.y), |x| (x.x + 2.0 * x.y).cos() + 2.0 * x.x * x.y, STUDY_PROBES, STUDY_SEED)?;
        row.w_d = Some(w.value);
        if spec.is_dam() {
            let result = run_dam_benchmark(&mesh, params, options)?;
            row.outer_iterations = Some(result.report.outer_iterations);
            if let Some([lo, hi]) = result.seepage_interval {
                row.seepage_lo = Some(lo);
                row.seepage_hi = Some(hi);
                row.seepage_ordinate = Some(0.5 * (lo + hi));
            }
        }
        Ok(())
    };
    if let Err(e) = run(&mut row) {
        row.status = format!("failed: {e}");
    }
    row
}

/// Diagnostics (and, on dam meshes, the seepage benchmark) for each mesh.
/// Rows run in parallel and keep the input order; a failing row is marked
/// in its `status`.
pub fn run_refinement_study(meshes: &[MeshSpec], params: HeavisideParams<f64>, options: &SolverOptions<f64>) -> Vec<StudyRow> {
    meshes.par_iter().map(|&m| study_row(m, options, params)).collect()
}
