//! HMM gradient discretisation of non-linear variational inequalities on
//! polytopal meshes: Signorini/seepage, obstacle and Bulkley problems, with
//! fixed-point, active-set and Newton solvers.
//!
//! Numerical code is generic over [`scalar::Scalar`] (`f32`, `f64`); the
//! aliases below fix `f64`.

pub mod bench;
pub mod gdm;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod operators;
pub mod quadrature;
pub mod scalar;
pub mod solvers;

use thiserror::Error;

pub use scalar::Scalar;

pub type Mesh = mesh::PolytopalMesh<f64>;
pub type Mesh32 = mesh::PolytopalMesh<f32>;
pub type Discretisation<'m> = gdm::HmmDiscretisation<'m, f64>;
pub type Vector = gdm::DiscreteVector<f64>;
pub type Point = geometry::Vec2<f64>;
pub type Tensor = geometry::Mat2<f64>;
pub type Operator = operators::OperatorSpec<f64>;
pub type Problem<'d, 'm> = solvers::VIProblem<'d, 'm, f64>;
pub type Options = solvers::SolverOptions<f64>;
pub type Report = solvers::SolveReport<f64>;
pub type Seepage = bench::SeepageResult<f64>;

/// Any error raised by the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] mesh::MeshError),
    #[error(transparent)]
    Gdm(#[from] gdm::GdmError),
    #[error(transparent)]
    Linalg(#[from] linalg::LinalgError),
    #[error(transparent)]
    Operator(#[from] operators::OperatorError),
    #[error(transparent)]
    Solver(#[from] solvers::SolverError),
    #[error(transparent)]
    Bench(#[from] bench::BenchError),
    #[error(transparent)]
    Io(#[from] io::IoError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
