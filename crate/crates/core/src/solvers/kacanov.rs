//! Fixed-point (Kačanov) iteration with optional under-relaxation.

use std::time::Instant;

use super::signorini::{active_set_loop, local_matrices};
use super::{kkt_residuals, ActiveSetState, Model, RelaxationEvent, SolveReport, SolverError, SolverOptions, VIProblem};
use crate::gdm::DiscreteVector;
use crate::scalar::Scalar;

/// Runs the fixed-point iteration from `u = 0`.
///
/// Each step solves the linear VI with `Λ` frozen at the current iterate.
/// When the last step was relaxed, the returned solution is the unrelaxed
/// linear VI solution of that step, so that it satisfies complementarity.
pub fn solve_kacanov<T: Scalar>(problem: &VIProblem<'_, '_, T>, options: &SolverOptions<T>) -> Result<SolveReport<T>, SolverError> {
    kacanov_loop(problem, options, "fixed-point + monotonicity active set")
}

pub(crate) fn kacanov_loop<T: Scalar>(problem: &VIProblem<'_, '_, T>, options: &SolverOptions<T>, algorithm: &str) -> Result<SolveReport<T>, SolverError> {
    if !problem.operator.is_quasilinear() {
        return Err(SolverError::NotQuasiLinear(problem.operator.name.clone()));
    }
    if !(options.delta > T::zero()) || options.max_outer == 0 {
        return Err(SolverError::InvalidProblem("delta must be positive and max_outer at least 1".into()));
    }
    let start = Instant::now();
    let disc = problem.disc;
    let two = T::two();
    let mut history = vec![DiscreteVector::zeros(problem.mesh())];
    let mut state = ActiveSetState::initial(problem);
    let mut inner = Vec::new();
    let mut residuals = Vec::new();
    let mut events = Vec::new();
    let mut last_ratio = T::infinity();
    for n in 0..options.max_outer {
        let u = history.last().expect("history starts with u0");
        let lambda = problem.frozen_tensors(u)?;
        let mats = local_matrices(problem, &lambda);
        if !options.warm_start {
            state = ActiveSetState::initial(problem);
        }
        let out = active_set_loop(problem, &mats, state, options.linear_tol)?;
        inner.push(out.state.iterations);
        state = out.state.clone();
        let mut next = out.solution.clone();
        if options.relaxation.enabled && history.len() >= 3 {
            let older = &history[history.len() - 3];
            let base = older.max_abs();
            let ratio = u.sub(older).max_abs();
            if ratio <= options.relaxation.trigger_tol * base {
                let f = options.relaxation.factor;
                next = DiscreteVector::combine(T::one() - f, u, f, &out.solution);
                events.push(RelaxationEvent {
                    iteration: n + 1,
                    ratio: if base > T::zero() { ratio / base } else { T::zero() },
                });
            }
        }
        let diff = next.sub(u);
        let change = disc.function_norm(&diff, two) + disc.gradient_norm(&diff, two);
        let size = disc.function_norm(u, two) + disc.gradient_norm(u, two);
        residuals.push(change);
        last_ratio = if size > T::zero() { change / size } else { T::infinity() };
        if change <= options.delta * size {
            let kkt = kkt_residuals(problem, &out.solution, &out.responses);
            return Ok(SolveReport {
                model: problem.model,
                algorithm: algorithm.to_string(),
                solution: out.solution,
                converged: true,
                outer_iterations: n + 1,
                inner_iterations: inner,
                residual_history: residuals,
                relaxation_events: events,
                kkt,
                active_set: (problem.model != Model::Bulkley).then_some(state),
                vi_probe_residual: None,
                frozen_iterate: Some(u.clone()),
                wall_time_seconds: start.elapsed().as_secs_f64(),
            });
        }
        history.push(next);
    }
    Err(SolverError::MaxOuterExceeded {
        iterations: options.max_outer,
        ratio: last_ratio.as_f64(),
    })
}
