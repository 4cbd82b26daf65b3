//! Damped Newton method for general fluxes, inside an active-set loop.

use std::time::Instant;

use rayon::prelude::*;

use super::condensed::{solve_condensed, LocalSystem};
use super::signorini::{active_set_loop, fixed_values, local_matrices, update_sets};
use super::{kkt_residuals, ActiveSetState, Barrier, SolveReport, SolverError, SolverOptions, VIProblem};
use crate::gdm::DiscreteVector;
use crate::geometry::{Mat2, Vec2};
use crate::scalar::Scalar;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 30;

/// A flux and its `ξ`-derivative, both at `(x, s, ξ)`.
pub(crate) struct Flux<'a, T> {
    pub value: &'a (dyn Fn(Vec2<T>, T, Vec2<T>) -> Vec2<T> + Sync),
    pub jacobian: &'a (dyn Fn(Vec2<T>, T, Vec2<T>) -> Mat2<T> + Sync),
}

/// `r_K = Σ_i |D_i| B_iᵀ a(x_K, u_K, G_i)` and the sums of absolute terms.
pub(crate) fn nonlinear_responses<T: Scalar>(problem: &VIProblem<'_, '_, T>, flux: &Flux<'_, T>, u: &DiscreteVector<T>) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
    let mesh = problem.mesh();
    (0..mesh.num_cells())
        .into_par_iter()
        .map(|k| {
            let lg = problem.disc.local(k);
            let x = mesh.cell(k).centre;
            let loc = u.local(mesh, k);
            let grads = lg.apply(&loc);
            let n = loc.len();
            let mut r = vec![T::zero(); n];
            let mut abs = vec![T::zero(); n];
            for (i, g) in grads.iter().enumerate() {
                let a = (flux.value)(x, u.cells[k], *g).scale(lg.diamond_measures[i]);
                for (j, b) in lg.b[i].iter().enumerate() {
                    let t = b.dot(a);
                    r[j] += t;
                    abs[j] += t.abs();
                }
            }
            (r, abs)
        })
        .unzip()
}

/// Local Jacobians with the symmetric part of `∂a/∂ξ`, plus a small
/// diagonal floor.
fn local_jacobians<T: Scalar>(problem: &VIProblem<'_, '_, T>, flux: &Flux<'_, T>, u: &DiscreteVector<T>) -> Vec<Vec<T>> {
    let mesh = problem.mesh();
    (0..mesh.num_cells())
        .into_par_iter()
        .map(|k| {
            let lg = problem.disc.local(k);
            let x = mesh.cell(k).centre;
            let grads = lg.apply(&u.local(mesh, k));
            let mut m = lg.matrix_by_diamond(|i| {
                let j = (flux.jacobian)(x, u.cells[k], grads[i]);
                let off = T::half() * (j.m[0][1] + j.m[1][0]);
                Mat2::new(j.m[0][0], off, off, j.m[1][1])
            });
            let n = lg.num_faces() + 1;
            let norm = m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
            let tau = T::lit(1e-10) + T::lit(1e-8) * norm;
            for a in 0..n {
                m[a * n + a] += tau;
            }
            m
        })
        .collect()
}

struct Residual<T> {
    cells: Vec<T>,
    faces: Vec<T>,
    /// Largest free residual entry and its reference size.
    max: T,
    scale: T,
    norm: T,
}

fn residual<T: Scalar>(
    problem: &VIProblem<'_, '_, T>,
    flux: &Flux<'_, T>,
    u: &DiscreteVector<T>,
    cell_fixed: &[Option<T>],
    face_fixed: &[Option<T>],
) -> (Residual<T>, Vec<Vec<T>>, Vec<Vec<T>>) {
    let mesh = problem.mesh();
    let (r, abs) = nonlinear_responses(problem, flux, u);
    let mut cells = vec![T::zero(); mesh.num_cells()];
    let mut cell_abs = vec![T::zero(); mesh.num_cells()];
    let mut faces = vec![T::zero(); mesh.num_faces()];
    let mut face_abs = vec![T::zero(); mesh.num_faces()];
    for (k, cell) in mesh.cells().iter().enumerate() {
        let load = cell.measure * problem.source[k];
        cells[k] = r[k][0] - load;
        cell_abs[k] = abs[k][0] + load.abs();
        for (i, cf) in cell.faces.iter().enumerate() {
            faces[cf.face] += r[k][i + 1];
            face_abs[cf.face] += abs[k][i + 1];
        }
    }
    let mut out = Residual {
        cells,
        faces,
        max: T::zero(),
        scale: T::zero(),
        norm: T::zero(),
    };
    let mut sq = T::zero();
    for k in 0..mesh.num_cells() {
        if cell_fixed[k].is_some() {
            out.cells[k] = T::zero();
        } else {
            out.max = out.max.max(out.cells[k].abs());
            out.scale = out.scale.max(cell_abs[k]);
            sq += out.cells[k] * out.cells[k];
        }
    }
    for s in 0..mesh.num_faces() {
        if face_fixed[s].is_some() {
            out.faces[s] = T::zero();
        } else {
            out.max = out.max.max(out.faces[s].abs());
            out.scale = out.scale.max(face_abs[s]);
            sq += out.faces[s] * out.faces[s];
        }
    }
    out.norm = sq.sqrt();
    (out, r, abs)
}

/// Newton iterates for the equality system with the given prescribed
/// values. Returns the solution, its responses and the number of steps.
pub(crate) fn newton_equalities<T: Scalar>(
    problem: &VIProblem<'_, '_, T>,
    flux: &Flux<'_, T>,
    mut u: DiscreteVector<T>,
    cell_fixed: &[Option<T>],
    face_fixed: &[Option<T>],
    options: &SolverOptions<T>,
    history: &mut Vec<T>,
) -> Result<(DiscreteVector<T>, Vec<Vec<T>>, Vec<Vec<T>>, usize), SolverError> {
    let mesh = problem.mesh();
    for (k, v) in cell_fixed.iter().enumerate() {
        if let Some(v) = v {
            u.cells[k] = *v;
        }
    }
    for (s, v) in face_fixed.iter().enumerate() {
        if let Some(v) = v {
            u.faces[s] = *v;
        }
    }
    let zero_cells: Vec<Option<T>> = cell_fixed.iter().map(|v| v.map(|_| T::zero())).collect();
    let zero_faces: Vec<Option<T>> = face_fixed.iter().map(|v| v.map(|_| T::zero())).collect();
    let (mut res, mut r, mut abs) = residual(problem, flux, &u, cell_fixed, face_fixed);
    for step in 0..=options.newton_max_iter {
        history.push(res.norm);
        if !res.max.is_finite() {
            return Err(SolverError::NewtonDivergence(format!("non-finite residual at step {step}")));
        }
        if res.max <= options.newton_tol * res.scale {
            return Ok((u, r, abs, step));
        }
        if step == options.newton_max_iter {
            break;
        }
        let jac = local_jacobians(problem, flux, &u);
        let cell_rhs: Vec<T> = res.cells.iter().map(|&v| -v).collect();
        let face_rhs: Vec<T> = res.faces.iter().map(|&v| -v).collect();
        let sys = LocalSystem {
            matrices: &jac,
            cell_load: &cell_rhs,
            face_load: &face_rhs,
            cell_fixed: &zero_cells,
            face_fixed: &zero_faces,
        };
        let du = solve_condensed(mesh, &sys, options.linear_tol)?;
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial = DiscreteVector::combine(T::one(), &u, t, &du);
            let (tres, tr, tabs) = residual(problem, flux, &trial, cell_fixed, face_fixed);
            if tres.norm.is_finite() && tres.norm <= (T::one() - T::lit(ARMIJO) * t) * res.norm {
                u = trial;
                res = tres;
                r = tr;
                abs = tabs;
                accepted = true;
                break;
            }
            t = t * T::half();
        }
        if !accepted {
            // Rounding floor: accept when no descent is possible at machine scale.
            if res.max <= T::lit(1e3) * T::epsilon() * res.scale {
                return Ok((u, r, abs, step));
            }
            return Err(SolverError::NewtonDivergence(format!(
                "line search failed at step {step} (residual {:e})",
                res.norm.as_f64()
            )));
        }
    }
    Err(SolverError::NewtonDivergence(format!(
        "no convergence in {} steps (residual {:e}, scale {:e})",
        options.newton_max_iter,
        res.max.as_f64(),
        res.scale.as_f64()
    )))
}

/// Newton method inside an active-set loop, for operators that are not
/// quasi-linear. Starts from the linear problem with `Λ = I`.
pub fn solve_newton_vi<T: Scalar>(problem: &VIProblem<'_, '_, T>, options: &SolverOptions<T>) -> Result<SolveReport<T>, SolverError> {
    let start = Instant::now();
    let op = &problem.operator;
    let value = |x, s, xi| op.flux(x, s, xi);
    let jacobian = |x, s, xi| op.jacobian(x, s, xi);
    let flux = Flux {
        value: &value,
        jacobian: &jacobian,
    };
    let identity = vec![Mat2::identity(); problem.mesh().num_cells()];
    let mats = local_matrices(problem, &identity);
    let guess = active_set_loop(problem, &mats, ActiveSetState::initial(problem), options.linear_tol)?;
    let mut state = guess.state.clone();
    state.iterations = 0;
    let mut u = guess.solution;
    let mut history = Vec::new();
    let mut inner = Vec::new();
    for round in 0..=state.cap {
        let (cell_fixed, face_fixed) = fixed_values(problem, &state);
        let (next, r, abs, steps) = newton_equalities(problem, &flux, u, &cell_fixed, &face_fixed, options, &mut history)?;
        u = next;
        inner.push(steps);
        let active = update_sets(problem, &state, &u, &r, &abs);
        if active == state.active {
            state.iterations = round + 1;
            let kkt = kkt_residuals(problem, &u, &r);
            return Ok(SolveReport {
                model: problem.model,
                algorithm: "damped Newton + active set".to_string(),
                solution: u,
                converged: true,
                outer_iterations: round + 1,
                inner_iterations: inner,
                residual_history: history,
                relaxation_events: Vec::new(),
                kkt,
                active_set: (!matches!(problem.barrier, Barrier::None)).then_some(state),
                vi_probe_residual: None,
                frozen_iterate: None,
                wall_time_seconds: start.elapsed().as_secs_f64(),
            });
        }
        state.active = active;
    }
    Err(SolverError::IterationCapExceeded { cap: state.cap })
}
