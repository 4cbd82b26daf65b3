//! Bulkley (yield-stress) problem by regularisation and continuation.

use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::newton::{newton_equalities, nonlinear_responses, Flux};
use super::{kkt_residuals, Barrier, Model, SolveReport, SolverError, SolverOptions, VIProblem};
use crate::gdm::DiscreteVector;
use crate::geometry::{Mat2, Vec2};
use crate::scalar::Scalar;

const PROBE_SEED: u64 = 0x5eed;
const RANDOM_PROBES: usize = 8;

/// Replaces `β |ξ|` by `β (√(|ξ|² + η²) - η)` and follows
/// `η_k = η_0 10^{-k}` with Newton, each step warm-started from the last.
pub fn solve_bulkley<T: Scalar>(problem: &VIProblem<'_, '_, T>, options: &SolverOptions<T>) -> Result<SolveReport<T>, SolverError> {
    if problem.model != Model::Bulkley || !matches!(problem.barrier, Barrier::None) {
        return Err(SolverError::InvalidProblem("solve_bulkley needs a Bulkley problem without barrier".into()));
    }
    if !(options.eta0 > T::zero()) || options.eta_steps == 0 {
        return Err(SolverError::InvalidProblem("eta0 must be positive and eta_steps at least 1".into()));
    }
    let start = Instant::now();
    let mesh = problem.mesh();
    let op = &problem.operator;
    let beta = problem.yield_coefficient;
    let cell_fixed = vec![None; mesh.num_cells()];
    let face_fixed: Vec<Option<T>> = (0..mesh.num_faces())
        .map(|s| mesh.face(s).is_boundary().then_some(T::zero()))
        .collect();
    let mut u = DiscreteVector::zeros(mesh);
    let mut history = Vec::new();
    let mut inner = Vec::new();
    let mut eta = options.eta0;
    let mut responses = Vec::new();
    for _ in 0..options.eta_steps {
        let e = eta;
        let value = move |x, s, xi: Vec2<T>| {
            let r = (xi.norm_sq() + e * e).sqrt();
            op.flux(x, s, xi) + xi.scale(beta / r)
        };
        let jacobian = move |x, s, xi: Vec2<T>| {
            let r = (xi.norm_sq() + e * e).sqrt();
            let reg = Mat2::identity().scale(T::one() / r).add(&Mat2::outer(xi, xi).scale(-T::one() / (r * r * r)));
            op.jacobian(x, s, xi).add(&reg.scale(beta))
        };
        let flux = Flux {
            value: &value,
            jacobian: &jacobian,
        };
        let (next, r, _, steps) = newton_equalities(problem, &flux, u, &cell_fixed, &face_fixed, options, &mut history)?;
        u = next;
        responses = r;
        inner.push(steps);
        eta = eta * T::lit(0.1);
    }
    let kkt = kkt_residuals(problem, &u, &responses);
    let probe = vi_probe_residual(problem, &u, PROBE_SEED);
    Ok(SolveReport {
        model: Model::Bulkley,
        algorithm: "regularised Newton continuation (plumbing, no reference algorithm)".into(),
        solution: u,
        converged: true,
        outer_iterations: options.eta_steps,
        inner_iterations: inner,
        residual_history: history,
        relaxation_events: Vec::new(),
        kkt,
        active_set: None,
        vi_probe_residual: Some(probe),
        frozen_iterate: None,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Smallest scaled value of
/// `∫ a(∇u)·∇(v-u) + β ∫ (|∇v| - |∇u|) - ∫ f Π(v-u)` over the probes
/// `v = 0`, `v = 2u` and random perturbations of `u`, divided by the largest
/// term magnitude over the probes. Non-negative for the exact discrete
/// solution.
pub fn vi_probe_residual<T: Scalar>(problem: &VIProblem<'_, '_, T>, u: &DiscreteVector<T>, seed: u64) -> T {
    let mesh = problem.mesh();
    let disc = problem.disc;
    let op = &problem.operator;
    let beta = problem.yield_coefficient;
    let value = |x, s, xi| op.flux(x, s, xi);
    let jacobian = |x, s, xi| op.jacobian(x, s, xi);
    let flux = Flux {
        value: &value,
        jacobian: &jacobian,
    };
    let (r, _) = nonlinear_responses(problem, &flux, u);
    let one = T::one();
    let l1 = |v: &DiscreteVector<T>| disc.gradient_norm(v, one);
    let load = |v: &DiscreteVector<T>| -> T { mesh.cells().iter().zip(&problem.source).zip(&v.cells).map(|((c, &f), &x)| c.measure * f * x).sum() };
    let pairing = |d: &DiscreteVector<T>| -> T {
        (0..mesh.num_cells())
            .map(|k| r[k].iter().zip(d.local(mesh, k)).map(|(&a, b)| a * b).sum::<T>())
            .sum()
    };
    let grad_u = l1(u);
    let mut probes = vec![DiscreteVector::zeros(mesh), DiscreteVector::combine(T::two(), u, T::zero(), u)];
    let mut rng = StdRng::seed_from_u64(seed);
    let amp = u.max_abs().max(T::one());
    for _ in 0..RANDOM_PROBES {
        let mut v = u.clone();
        for x in v.cells.iter_mut() {
            *x += amp * T::lit(rng.gen_range(-0.5..0.5));
        }
        for (s, x) in v.faces.iter_mut().enumerate() {
            if !mesh.face(s).is_boundary() {
                *x += amp * T::lit(rng.gen_range(-0.5..0.5));
            }
        }
        probes.push(v);
    }
    let terms: Vec<(T, T)> = probes
        .iter()
        .map(|v| {
            let d = v.sub(u);
            let (a, b, c) = (pairing(&d), beta * (l1(v) - grad_u), load(&d));
            (a + b - c, a.abs() + beta * (l1(v) + grad_u) + c.abs())
        })
        .collect();
    let scale = terms.iter().fold(T::min_positive_value(), |m, t| m.max(t.1));
    terms.iter().fold(T::infinity(), |m, t| m.min(t.0 / scale))
}
