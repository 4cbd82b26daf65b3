//! Static condensation of cell unknowns onto face unknowns.

use crate::gdm::DiscreteVector;
use crate::linalg::{solve_spd, LinalgError, TripletBuilder};
use crate::mesh::PolytopalMesh;
use crate::scalar::Scalar;

/// A global system given cell by cell: `Σ_K P_Kᵀ M_K P_K u = load`, with
/// some cell and face unknowns prescribed.
pub struct LocalSystem<'a, T> {
    /// Row-major local matrices, cell unknown first.
    pub matrices: &'a [Vec<T>],
    pub cell_load: &'a [T],
    pub face_load: &'a [T],
    pub cell_fixed: &'a [Option<T>],
    pub face_fixed: &'a [Option<T>],
}

/// Eliminates every free cell unknown through its diagonal pivot, solves the
/// symmetric positive definite face system and recovers the cells.
pub fn solve_condensed<T: Scalar>(
    mesh: &PolytopalMesh<T>,
    sys: &LocalSystem<'_, T>,
    tol: T,
) -> Result<DiscreteVector<T>, LinalgError> {
    let mut index = vec![None; mesh.num_faces()];
    let mut nf = 0;
    for (s, fixed) in sys.face_fixed.iter().enumerate() {
        if fixed.is_none() {
            index[s] = Some(nf);
            nf += 1;
        }
    }
    let mut tb = TripletBuilder::new(nf);
    let mut rhs = vec![T::zero(); nf];
    for (s, idx) in index.iter().enumerate() {
        if let Some(i) = idx {
            rhs[*i] += sys.face_load[s];
        }
    }
    for (k, cell) in mesh.cells().iter().enumerate() {
        let m = &sys.matrices[k];
        let n = cell.faces.len() + 1;
        let piv = m[0];
        let cell_fixed = sys.cell_fixed[k];
        if cell_fixed.is_none() && !(piv > T::zero()) {
            return Err(LinalgError::NotPositiveDefinite {
                pivot: k,
                value: piv.as_f64(),
            });
        }
        let entry = |a: usize, c: usize| match cell_fixed {
            Some(_) => m[a * n + c],
            None => m[a * n + c] - m[a * n] * m[c] / piv,
        };
        for a in 1..n {
            let Some(i) = index[cell.faces[a - 1].face] else { continue };
            rhs[i] -= match cell_fixed {
                Some(psi) => m[a * n] * psi,
                None => m[a * n] * sys.cell_load[k] / piv,
            };
            for c in 1..n {
                let face_c = cell.faces[c - 1].face;
                match (index[face_c], sys.face_fixed[face_c]) {
                    (Some(j), _) if j <= i => tb.add(i, j, entry(a, c)),
                    (Some(_), _) => {}
                    (None, Some(val)) => rhs[i] -= entry(a, c) * val,
                    (None, None) => unreachable!("face is either free or fixed"),
                }
            }
        }
    }
    let faces_free = if nf > 0 {
        solve_spd(&tb.build(), &rhs, tol)?
    } else {
        Vec::new()
    };
    let mut out = DiscreteVector {
        cells: vec![T::zero(); mesh.num_cells()],
        faces: vec![T::zero(); mesh.num_faces()],
    };
    for s in 0..mesh.num_faces() {
        out.faces[s] = match (index[s], sys.face_fixed[s]) {
            (Some(i), _) => faces_free[i],
            (None, Some(v)) => v,
            (None, None) => unreachable!("face is either free or fixed"),
        };
    }
    for (k, cell) in mesh.cells().iter().enumerate() {
        out.cells[k] = match sys.cell_fixed[k] {
            Some(v) => v,
            None => {
                let m = &sys.matrices[k];
                let mut s = sys.cell_load[k];
                for (c, cf) in cell.faces.iter().enumerate() {
                    s -= m[c + 1] * out.faces[cf.face];
                }
                s / m[0]
            }
        };
    }
    Ok(out)
}
