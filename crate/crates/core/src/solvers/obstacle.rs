//! Obstacle problem: cell active set, with the fixed-point iteration for
//! quasi-linear operators and Newton otherwise.

use super::kacanov::kacanov_loop;
use super::newton::solve_newton_vi;
use super::{Barrier, Model, SolveReport, SolverError, SolverOptions, VIProblem};
use crate::scalar::Scalar;

/// Solves `u ≤ ψ` in the cells. The cell active set mirrors the face
/// algorithm: active cells sit on `ψ`, the multiplier
/// `λ_K = |K| f_K - Σ_σ |σ| F_{K,σ}(u)` must be non-negative there.
pub fn solve_obstacle<T: Scalar>(problem: &VIProblem<'_, '_, T>, options: &SolverOptions<T>) -> Result<SolveReport<T>, SolverError> {
    if problem.model != Model::Obstacle || !matches!(problem.barrier, Barrier::Cells(_)) {
        return Err(SolverError::InvalidProblem("solve_obstacle needs an obstacle problem with a cell barrier".into()));
    }
    if problem.operator.is_quasilinear() {
        kacanov_loop(problem, options, "fixed-point + cell active set (plumbing, no reference algorithm)")
    } else {
        let mut report = solve_newton_vi(problem, options)?;
        report.algorithm = "damped Newton + cell active set (plumbing, no reference algorithm)".into();
        Ok(report)
    }
}
