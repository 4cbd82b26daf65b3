//! Monotonicity (active-set) algorithm for linear variational inequalities.
//!
//! The same loop serves `Γ3` faces (Signorini) and obstacle cells: active
//! unknowns are held at the barrier, inactive ones are free, and the sets
//! are updated from the sign of the flux or multiplier.

use rayon::prelude::*;

use super::condensed::{solve_condensed, LocalSystem};
use super::{ActiveSetState, Barrier, SolverError, VIProblem};
use crate::gdm::DiscreteVector;
use crate::geometry::Mat2;
use crate::scalar::Scalar;

/// Result of one linear VI solve.
#[derive(Clone, Debug)]
pub struct LinearViOutcome<T> {
    pub solution: DiscreteVector<T>,
    /// Final sets, to warm-start the next call.
    pub state: ActiveSetState,
    /// `M_K u_K` per cell, cell entry first.
    pub responses: Vec<Vec<T>>,
}

/// Relative slack in the flux and multiplier sign tests.
pub(crate) fn sign_tolerance<T: Scalar>() -> T {
    T::lit(1e-9).max(T::lit(1e4) * T::epsilon())
}

pub(crate) fn local_matrices<T: Scalar>(problem: &VIProblem<'_, '_, T>, lambda: &[Mat2<T>]) -> Vec<Vec<T>> {
    (0..problem.mesh().num_cells())
        .into_par_iter()
        .map(|k| problem.disc.local(k).matrix(&lambda[k]))
        .collect()
}

pub(crate) fn apply_local<T: Scalar>(problem: &VIProblem<'_, '_, T>, mats: &[Vec<T>], u: &DiscreteVector<T>) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
    let mesh = problem.mesh();
    (0..mesh.num_cells())
        .map(|k| {
            let loc = u.local(mesh, k);
            let n = loc.len();
            let m = &mats[k];
            let r = (0..n).map(|a| (0..n).map(|c| m[a * n + c] * loc[c]).sum()).collect();
            let abs = (0..n).map(|a| (0..n).map(|c| (m[a * n + c] * loc[c]).abs()).sum()).collect();
            (r, abs)
        })
        .unzip()
}

/// Prescribed values for the given sets: essential data, and the barrier on
/// active unknowns.
pub(crate) fn fixed_values<T: Scalar>(problem: &VIProblem<'_, '_, T>, state: &ActiveSetState) -> (Vec<Option<T>>, Vec<Option<T>>) {
    let mesh = problem.mesh();
    let mut faces: Vec<Option<T>> = (0..mesh.num_faces())
        .map(|s| problem.is_fixed_face(s).then(|| problem.boundary.faces[s]))
        .collect();
    let mut cells = vec![None; mesh.num_cells()];
    for (&i, &active) in state.constrained.iter().zip(&state.active) {
        if !active {
            continue;
        }
        match &problem.barrier {
            Barrier::Faces(b) => faces[i] = b[i],
            Barrier::Cells(psi) => cells[i] = Some(psi[i]),
            Barrier::None => {}
        }
    }
    (cells, faces)
}

/// New sets from a solution and its local responses.
///
/// Faces: `A' = {σ ∈ A : F_σ ≥ -τ_σ} ∪ {σ ∈ B : u_σ ≥ a_σ}`, with the outward
/// flux `F_σ = -Σ_K r_{K,σ} / |σ|`. Cells: the same with the multiplier
/// `λ_K = |K| f_K - r_{K,K}` and `u_K ≥ ψ_K`.
pub(crate) fn update_sets<T: Scalar>(
    problem: &VIProblem<'_, '_, T>,
    state: &ActiveSetState,
    u: &DiscreteVector<T>,
    responses: &[Vec<T>],
    magnitudes: &[Vec<T>],
) -> Vec<bool> {
    let mesh = problem.mesh();
    let tol = sign_tolerance::<T>();
    match &problem.barrier {
        Barrier::None => Vec::new(),
        Barrier::Faces(b) => {
            let mut sum = vec![T::zero(); mesh.num_faces()];
            let mut mag = vec![T::zero(); mesh.num_faces()];
            for (k, cell) in mesh.cells().iter().enumerate() {
                for (i, cf) in cell.faces.iter().enumerate() {
                    sum[cf.face] += responses[k][i + 1];
                    mag[cf.face] += magnitudes[k][i + 1];
                }
            }
            state
                .constrained
                .iter()
                .zip(&state.active)
                .map(|(&s, &active)| {
                    if active {
                        -sum[s] >= -tol * mag[s]
                    } else {
                        u.faces[s] >= b[s].unwrap_or(T::infinity())
                    }
                })
                .collect()
        }
        Barrier::Cells(psi) => state
            .constrained
            .iter()
            .zip(&state.active)
            .map(|(&k, &active)| {
                if active {
                    let load = mesh.cell(k).measure * problem.source[k];
                    load - responses[k][0] >= -tol * (magnitudes[k][0] + load.abs())
                } else {
                    u.cells[k] >= psi[k]
                }
            })
            .collect(),
    }
}

/// Active-set loop with fixed local matrices. Counts linear solves in
/// `state.iterations`; fails once `cap + 1` solves have not settled the sets.
pub(crate) fn active_set_loop<T: Scalar>(
    problem: &VIProblem<'_, '_, T>,
    mats: &[Vec<T>],
    mut state: ActiveSetState,
    linear_tol: T,
) -> Result<LinearViOutcome<T>, SolverError> {
    let mesh = problem.mesh();
    let cell_load: Vec<T> = mesh.cells().iter().zip(&problem.source).map(|(c, &f)| c.measure * f).collect();
    let face_load = vec![T::zero(); mesh.num_faces()];
    for i in 0..=state.cap {
        let (cell_fixed, face_fixed) = fixed_values(problem, &state);
        let sys = LocalSystem {
            matrices: mats,
            cell_load: &cell_load,
            face_load: &face_load,
            cell_fixed: &cell_fixed,
            face_fixed: &face_fixed,
        };
        let u = solve_condensed(mesh, &sys, linear_tol)?;
        let (responses, magnitudes) = apply_local(problem, mats, &u);
        let next = update_sets(problem, &state, &u, &responses, &magnitudes);
        if next == state.active {
            state.iterations = i + 1;
            return Ok(LinearViOutcome {
                solution: u,
                state,
                responses,
            });
        }
        state.active = next;
    }
    Err(SolverError::IterationCapExceeded { cap: state.cap })
}

/// Solves the linear VI with the tensor frozen at `w`, starting from `state`.
pub fn solve_linear_vi<T: Scalar>(
    problem: &VIProblem<'_, '_, T>,
    w: &DiscreteVector<T>,
    state: ActiveSetState,
    linear_tol: T,
) -> Result<LinearViOutcome<T>, SolverError> {
    if !w.conforms(problem.mesh()) {
        return Err(SolverError::InvalidProblem("frozen iterate does not match the mesh".into()));
    }
    if state.active.len() != state.constrained.len() || state.constrained != problem.constrained() {
        return Err(SolverError::InvalidProblem("active-set state does not match the constrained unknowns".into()));
    }
    let lambda = problem.frozen_tensors(w)?;
    let mats = local_matrices(problem, &lambda);
    active_set_loop(problem, &mats, state, linear_tol)
}
