use serde::Serialize;

use crate::mesh::PolytopalMesh;
use crate::scalar::Scalar;

/// Regularity factors of a polytopal mesh.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegularityReport<T> {
    /// `max_K (max_σ h_K / d_{K,σ} + Card(E_K))`.
    pub theta_shape: T,
    /// `max_σ (d_{K,σ}/d_{L,σ} + d_{L,σ}/d_{K,σ})` over interior faces; 2 when
    /// the mesh has no interior face.
    pub theta_neighbour: T,
    pub theta: T,
    /// `ϱ_T = max_K max_σ h_K / d_{K,σ}`.
    pub varrho: T,
    pub h_mesh: T,
}

pub fn regularity_report<T: Scalar>(mesh: &PolytopalMesh<T>) -> RegularityReport<T> {
    let mut theta_shape = T::zero();
    let mut varrho = T::zero();
    for cell in mesh.cells() {
        let ratio = cell
            .faces
            .iter()
            .fold(T::zero(), |m, cf| m.max(cell.diameter / cf.distance));
        varrho = varrho.max(ratio);
        theta_shape = theta_shape.max(ratio + T::from_usize_lossy(cell.faces.len()));
    }

    let mut theta_neighbour = T::two();
    for (s, face) in mesh.faces().iter().enumerate() {
        if let (k, Some(l)) = face.cells {
            let dk = distance(mesh, k, s);
            let dl = distance(mesh, l, s);
            theta_neighbour = theta_neighbour.max(dk / dl + dl / dk);
        }
    }

    RegularityReport {
        theta_shape,
        theta_neighbour,
        theta: theta_shape.max(theta_neighbour),
        varrho,
        h_mesh: mesh.h_mesh(),
    }
}

fn distance<T: Scalar>(mesh: &PolytopalMesh<T>, cell: usize, face: usize) -> T {
    let c = mesh.cell(cell);
    c.faces
        .iter()
        .find(|cf| cf.face == face)
        .map(|cf| cf.distance)
        .expect("face belongs to its incident cell")
}
