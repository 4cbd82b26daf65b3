//! Numerical estimates of the gradient-discretisation properties.
//!
//! `S_D` is bounded above by evaluating the interpolant `P^ω_D φ`; `W_D` is
//! bounded below by maximising over probe vectors (for `p = 2` the Riesz
//! representer of the functional is one of the probes, which gives the
//! supremum itself); `C_D` for `p = 2` is the square root of the largest
//! eigenvalue of the mass-plus-trace form against the gradient form.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use super::{DiscreteVector, FreeDofs, GdmError, HmmDiscretisation, WeightFamily};
use crate::geometry::{Mat2, Vec2};
use crate::linalg::{default_tolerance, solve_refined, SkylineCholesky};
use crate::mesh::PolytopalMesh;
use crate::quadrature::{segment_rule, triangle_rule};
use crate::scalar::Scalar;

/// Collapsed Gauss points per direction on diamonds; exact up to degree 8.
pub const DIAMOND_POINTS: usize = 5;

/// Discrete convex set `K_D` as a list of constraints on the unknowns.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ConvexSet<T> {
    /// `v_σ = value`.
    pub fixed_faces: Vec<(usize, T)>,
    /// `v_σ <= value`.
    pub face_upper: Vec<(usize, T)>,
    /// `v_K <= value`.
    pub cell_upper: Vec<(usize, T)>,
}

impl<T: Scalar> ConvexSet<T> {
    pub fn unconstrained() -> Self {
        Self {
            fixed_faces: Vec::new(),
            face_upper: Vec::new(),
            cell_upper: Vec::new(),
        }
    }

    /// Checks every constraint up to `tol (1 + |value|)`.
    pub fn check(&self, v: &DiscreteVector<T>, tol: T) -> Result<(), GdmError> {
        let slack = |b: T| tol * (T::one() + b.abs());
        for &(s, g) in &self.fixed_faces {
            if (v.faces[s] - g).abs() > slack(g) {
                return Err(GdmError::InadmissibleTestFunction(format!(
                    "face {s} has value {} but must equal {g}",
                    v.faces[s]
                )));
            }
        }
        for &(s, a) in &self.face_upper {
            if v.faces[s] > a + slack(a) {
                return Err(GdmError::InadmissibleTestFunction(format!(
                    "face {s} has value {} above the barrier {a}",
                    v.faces[s]
                )));
            }
        }
        for &(k, psi) in &self.cell_upper {
            if v.cells[k] > psi + slack(psi) {
                return Err(GdmError::InadmissibleTestFunction(format!(
                    "cell {k} has value {} above the obstacle {psi}",
                    v.cells[k]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsistencyEstimate<T> {
    /// Upper bound of `S_D(φ)`: sum of the two parts below.
    pub value: T,
    /// `‖Π_D P^ω_D φ - φ‖_{L^p}`.
    pub function_error: T,
    /// `‖∇_D P^ω_D φ - ∇φ‖_{L^p}`.
    pub gradient_error: T,
    /// Polynomial degree integrated exactly on each diamond.
    pub quadrature_degree: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConformityEstimate<T> {
    /// Lower bound of `W_D(ψ)`: the largest ratio found.
    pub value: T,
    /// Ratio at the Riesz representer (`p = 2` only); equals the supremum up
    /// to quadrature.
    pub riesz: Option<T>,
    /// Largest ratio among random and polynomial probes.
    pub probe_max: T,
    pub probes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoercivityEstimate<T> {
    /// `p = 2`: `sqrt(max (‖Π v‖² + ‖T v‖²) / ‖∇ v‖²)`. Otherwise a probe
    /// lower bound of `max (‖Π v‖ + ‖T v‖) / ‖∇ v‖`.
    pub value: T,
    pub iterations: usize,
    pub method: &'static str,
}

fn lp_norm<T: Scalar>(s: T, p: T) -> T {
    s.powf(T::one() / p)
}

/// Diamond triangle `(x_K, a, b)` for local face `i` of cell `k`.
fn diamond<T: Scalar>(mesh: &PolytopalMesh<T>, k: usize, i: usize) -> [Vec2<T>; 3] {
    let cell = mesh.cell(k);
    let face = mesh.face(cell.faces[i].face);
    let v = mesh.vertices();
    [cell.centre, v[face.vertices[0]], v[face.vertices[1]]]
}

/// Upper bound of `S_D(φ)` through the interpolant `P^ω_D φ`.
///
/// `set` is checked on the interpolant; a violation means `φ` was not an
/// admissible test function.
pub fn diag_consistency<T, F, G>(
    disc: &HmmDiscretisation<'_, T>,
    phi: F,
    grad_phi: G,
    set: &ConvexSet<T>,
    weights: &WeightFamily<T>,
) -> Result<ConsistencyEstimate<T>, GdmError>
where
    T: Scalar,
    F: Fn(Vec2<T>) -> T,
    G: Fn(Vec2<T>) -> Vec2<T>,
{
    let mesh = disc.mesh();
    let p = disc.p();
    let v = disc.interpolate_full(&phi, weights)?;
    set.check(&v, T::lit(1e-10))?;
    let (mut fs, mut gs) = (T::zero(), T::zero());
    for k in 0..mesh.num_cells() {
        let grads = disc.local(k).apply(&v.local(mesh, k));
        for (i, g) in grads.iter().enumerate() {
            let [a, b, c] = diamond(mesh, k, i);
            for (x, w) in triangle_rule(a, b, c, DIAMOND_POINTS) {
                fs += w * (v.cells[k] - phi(x)).abs().powf(p);
                gs += w * (*g - grad_phi(x)).norm().powf(p);
            }
        }
    }
    let (function_error, gradient_error) = (lp_norm(fs, p), lp_norm(gs, p));
    if !(function_error.is_finite() && gradient_error.is_finite()) {
        return Err(GdmError::QuadratureFailure("consistency integrals".into()));
    }
    Ok(ConsistencyEstimate {
        value: function_error + gradient_error,
        function_error,
        gradient_error,
        quadrature_degree: 2 * DIAMOND_POINTS - 2,
    })
}

/// The linear functional `v ↦ ∫ ∇_D v·ψ + Π_D v div ψ - ∫_∂Ω ψ·n T_D v`
/// over the free unknowns; fixed faces carry no value, and `ψ·n = 0` is
/// assumed on no-flow faces.
fn conformity_functional<T, F, G>(disc: &HmmDiscretisation<'_, T>, dofs: &FreeDofs, psi: &F, div_psi: &G) -> Vec<T>
where
    T: Scalar,
    F: Fn(Vec2<T>) -> Vec2<T>,
    G: Fn(Vec2<T>) -> T,
{
    let mesh = disc.mesh();
    let mut ell = vec![T::zero(); dofs.len()];
    for k in 0..mesh.num_cells() {
        let lg = disc.local(k);
        let idx = dofs.local(mesh, k);
        for (i, row) in lg.b.iter().enumerate() {
            let [a, b, c] = diamond(mesh, k, i);
            let mut q = Vec2::zero();
            let mut div = T::zero();
            for (x, w) in triangle_rule(a, b, c, DIAMOND_POINTS) {
                q += psi(x).scale(w);
                div += w * div_psi(x);
            }
            ell[k] += div;
            for (col, j) in row.iter().zip(&idx) {
                if let Some(j) = j {
                    ell[*j] += col.dot(q);
                }
            }
        }
    }
    for (s, face) in mesh.faces().iter().enumerate() {
        if let (true, Some(j)) = (face.is_boundary(), dofs.face[s]) {
            let k = face.cells.0;
            let li = mesh.local_index(k, s).expect("face of its cell");
            let n = mesh.cell(k).faces[li].normal;
            let v = mesh.vertices();
            let flux: T = segment_rule(v[face.vertices[0]], v[face.vertices[1]], 3)
                .into_iter()
                .map(|(x, w)| w * psi(x).dot(n))
                .sum();
            ell[j] -= flux;
        }
    }
    ell
}

/// Lower bound of `W_D(ψ)` over the free space `X_{D,Γ2,3}`.
///
/// Probes: `probes` seeded random vectors, the interpolants of
/// `x, y, x², xy, y², x³, y³`, and for `p = 2` the Riesz representer.
pub fn diag_limit_conformity<T, F, G>(
    disc: &HmmDiscretisation<'_, T>,
    psi: F,
    div_psi: G,
    probes: usize,
    seed: u64,
) -> Result<ConformityEstimate<T>, GdmError>
where
    T: Scalar,
    F: Fn(Vec2<T>) -> Vec2<T>,
    G: Fn(Vec2<T>) -> T,
{
    let mesh = disc.mesh();
    let p = disc.p();
    let dofs = FreeDofs::essential(mesh);
    let ell = conformity_functional(disc, &dofs, &psi, &div_psi);
    let zero = DiscreteVector::zeros(mesh);
    let ratio = |x: &[T]| -> Option<T> {
        let v = dofs.scatter(x, &zero);
        let den = disc.gradient_norm(&v, p);
        if den <= T::zero() || !den.is_finite() {
            return None;
        }
        let num: T = ell.iter().zip(x).map(|(&l, &xi)| l * xi).sum();
        Some(num.abs() / den)
    };

    let mut probe_max = T::zero();
    let mut count = 0;
    let mut rng = StdRng::seed_from_u64(seed);
    for _ in 0..probes {
        let x: Vec<T> = (0..dofs.len()).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
        if let Some(r) = ratio(&x) {
            probe_max = probe_max.max(r);
            count += 1;
        }
    }
    let monomials: [fn(Vec2<T>) -> T; 7] = [
        |q| q.x,
        |q| q.y,
        |q| q.x * q.x,
        |q| q.x * q.y,
        |q| q.y * q.y,
        |q| q.x * q.x * q.x,
        |q| q.y * q.y * q.y,
    ];
    for f in monomials {
        let v = disc.interpolate_point(f)?;
        if let Some(r) = ratio(&dofs.gather(&v)) {
            probe_max = probe_max.max(r);
            count += 1;
        }
    }

    let mut riesz = None;
    if (p - T::two()).abs() <= T::epsilon() && !dofs.is_empty() {
        let a = disc.assemble(&dofs, |_| Mat2::identity());
        let chol = SkylineCholesky::factor(&a)?;
        let z = solve_refined(&a, &chol, &ell, default_tolerance())?;
        let r = ratio(&z).unwrap_or(T::zero());
        riesz = Some(r);
        count += 1;
    }
    let value = riesz.map_or(probe_max, |r| r.max(probe_max));
    Ok(ConformityEstimate {
        value,
        riesz,
        probe_max,
        probes: count,
    })
}

/// Estimate of `C_D` over `X_{D,Γ2,3}`.
///
/// For `p = 2` the power iteration on `A⁻¹ M` (with `A` the gradient form and
/// `M` the cell mass plus boundary-face trace form) runs until the Rayleigh
/// quotient changes by at most `tol` relatively, failing after `max_iter`
/// steps. For other `p` a probe lower bound over seeded random vectors is
/// returned.
pub fn diag_coercivity<T: Scalar>(
    disc: &HmmDiscretisation<'_, T>,
    tol: T,
    max_iter: usize,
) -> Result<CoercivityEstimate<T>, GdmError> {
    let mesh = disc.mesh();
    let p = disc.p();
    let dofs = FreeDofs::essential(mesh);
    let zero = DiscreteVector::zeros(mesh);
    if (p - T::two()).abs() > T::epsilon() {
        let mut rng = StdRng::seed_from_u64(0x5eed);
        let mut best = T::zero();
        for _ in 0..max_iter.max(1) {
            let x: Vec<T> = (0..dofs.len()).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
            let v = dofs.scatter(&x, &zero);
            let den = disc.gradient_norm(&v, p);
            if den > T::zero() {
                best = best.max((disc.function_norm(&v, p) + disc.trace_norm(&v, p)) / den);
            }
        }
        return Ok(CoercivityEstimate {
            value: best,
            iterations: max_iter.max(1),
            method: "probe",
        });
    }

    let mut mass = vec![T::zero(); dofs.len()];
    for (k, c) in mesh.cells().iter().enumerate() {
        mass[k] = c.measure;
    }
    for (s, f) in mesh.faces().iter().enumerate() {
        if let (true, Some(j)) = (f.is_boundary(), dofs.face[s]) {
            mass[j] = f.measure;
        }
    }
    let a = disc.assemble(&dofs, |_| Mat2::identity());
    let chol = SkylineCholesky::factor(&a)?;
    let mut x = vec![T::one(); dofs.len()];
    let mut lambda = T::zero();
    let mut change = T::infinity();
    for it in 1..=max_iter {
        let mx: Vec<T> = x.iter().zip(&mass).map(|(&xi, &m)| xi * m).collect();
        let y = solve_refined(&a, &chol, &mx, default_tolerance())?;
        let ay = a.mul(&y);
        let num: T = y.iter().zip(&mass).map(|(&yi, &m)| m * yi * yi).sum();
        let den: T = y.iter().zip(&ay).map(|(&yi, &ai)| yi * ai).sum();
        let next = num / den;
        change = (next - lambda).abs() / next;
        lambda = next;
        let scale = crate::scalar::max_abs(&y);
        x = y.into_iter().map(|v| v / scale).collect();
        if change <= tol {
            return Ok(CoercivityEstimate {
                value: lambda.sqrt(),
                iterations: it,
                method: "rayleigh",
            });
        }
    }
    Err(GdmError::SolverDivergence {
        iterations: max_iter,
        change: change.as_f64(),
    })
}
