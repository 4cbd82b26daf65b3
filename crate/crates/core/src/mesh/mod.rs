//! Polytopal meshes: cells, faces, cell points and boundary tags.
//!
//! A mesh is built once from a vertex list and counter-clockwise cell
//! connectivity, after which every geometric quantity the discretisation
//! needs is cached: cell measures, diameters and points `x_K`, face measures,
//! centres and diameters, outward unit normals `n_{K,σ}` and orthogonal
//! distances `d_{K,σ}`. The mesh is immutable after construction.

mod generators;
mod regularity;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::scalar::Scalar;

pub use generators::{
    cartesian, dam_hexagonal, dam_kershaw, dam_kershaw_distorted, dam_tag, kershaw_level_size, triangular,
    unit_square_tags, DAM_AREA, KERSHAW_DISTORTION,
};
pub use regularity::{regularity_report, RegularityReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("cell {cell} is not strictly star-shaped with respect to its point (face {face} has d_K,sigma = {distance:e})")]
    NonStarShaped { cell: usize, face: usize, distance: f64 },
    #[error("face between vertices {a} and {b} has {count} incident cells")]
    DanglingFace { a: usize, b: usize, count: usize },
    #[error("boundary face with midpoint ({x}, {y}) matches no tag rule")]
    UntaggedBoundary { x: f64, y: f64 },
    #[error("cell {cell} is not counter-clockwise or is degenerate (signed area {area:e})")]
    Orientation { cell: usize, area: f64 },
    #[error("invalid mesh input: {0}")]
    InvalidInput(String),
}

/// Boundary part a face belongs to.
///
/// Signorini runs use `Gamma1`/`Gamma2`/`Gamma3` (Dirichlet, no-flow and
/// unilateral parts); obstacle and Bulkley runs use `Dirichlet`. `Untagged`
/// is a natural (zero-flux) boundary with no named part.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    Interior,
    Gamma1,
    Gamma2,
    Gamma3,
    Dirichlet,
    Untagged,
}

impl BoundaryTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Interior => "interior",
            BoundaryTag::Gamma1 => "gamma1",
            BoundaryTag::Gamma2 => "gamma2",
            BoundaryTag::Gamma3 => "gamma3",
            BoundaryTag::Dirichlet => "dirichlet",
            BoundaryTag::Untagged => "none",
        }
    }

    /// Faces whose value is prescribed by boundary data.
    pub fn is_essential(self) -> bool {
        matches!(self, BoundaryTag::Gamma1 | BoundaryTag::Dirichlet)
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundaryTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "interior" => BoundaryTag::Interior,
            "gamma1" => BoundaryTag::Gamma1,
            "gamma2" => BoundaryTag::Gamma2,
            "gamma3" => BoundaryTag::Gamma3,
            "dirichlet" => BoundaryTag::Dirichlet,
            "none" => BoundaryTag::Untagged,
            other => return Err(other.to_string()),
        })
    }
}

impl Serialize for BoundaryTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for BoundaryTag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse()
            .map_err(|t| serde::de::Error::custom(format!("unknown boundary tag `{t}`")))
    }
}

/// A face seen from one of its cells.
#[derive(Clone, Debug, PartialEq)]
pub struct CellFace<T> {
    pub face: usize,
    /// Unit normal outward to the cell.
    pub normal: Vec2<T>,
    /// Orthogonal distance from the cell point to the face line.
    pub distance: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell<T> {
    /// Vertex indices, counter-clockwise.
    pub vertices: Vec<usize>,
    /// Faces in the same order as the edges `(v_i, v_{i+1})`.
    pub faces: Vec<CellFace<T>>,
    pub centre: Vec2<T>,
    pub measure: T,
    pub diameter: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Face<T> {
    pub vertices: [usize; 2],
    pub measure: T,
    pub centre: Vec2<T>,
    pub diameter: T,
    /// First incident cell and, for interior faces, the second one.
    pub cells: (usize, Option<usize>),
    pub tag: BoundaryTag,
}

impl<T> Face<T> {
    pub fn is_boundary(&self) -> bool {
        self.cells.1.is_none()
    }
}

/// Geometry handed to boundary tag rules.
#[derive(Clone, Copy, Debug)]
pub struct FaceGeometry<T> {
    pub a: Vec2<T>,
    pub b: Vec2<T>,
    pub midpoint: Vec2<T>,
}

/// Unprocessed mesh description accepted by [`build_mesh`].
#[derive(Clone, Debug, PartialEq)]
pub struct RawMesh<T> {
    pub vertices: Vec<Vec2<T>>,
    /// Counter-clockwise vertex lists.
    pub cells: Vec<Vec<usize>>,
    /// Optional explicit cell points; the centre of mass is used otherwise.
    pub centres: Option<Vec<Vec2<T>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolytopalMesh<T> {
    vertices: Vec<Vec2<T>>,
    cells: Vec<Cell<T>>,
    faces: Vec<Face<T>>,
}

impl<T: Scalar> PolytopalMesh<T> {
    pub fn dimension(&self) -> usize {
        2
    }

    pub fn vertices(&self) -> &[Vec2<T>] {
        &self.vertices
    }

    pub fn cells(&self) -> &[Cell<T>] {
        &self.cells
    }

    pub fn faces(&self) -> &[Face<T>] {
        &self.faces
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn cell(&self, k: usize) -> &Cell<T> {
        &self.cells[k]
    }

    pub fn face(&self, s: usize) -> &Face<T> {
        &self.faces[s]
    }

    /// `h_M`, the largest cell diameter.
    pub fn h_mesh(&self) -> T {
        self.cells.iter().fold(T::zero(), |m, c| m.max(c.diameter))
    }

    pub fn domain_measure(&self) -> T {
        self.cells.iter().map(|c| c.measure).sum()
    }

    pub fn faces_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = usize> + '_ {
        self.faces
            .iter()
            .enumerate()
            .filter(move |(_, f)| f.tag == tag)
            .map(|(i, _)| i)
    }

    pub fn count_tag(&self, tag: BoundaryTag) -> usize {
        self.faces_with_tag(tag).count()
    }

    /// Recovers the raw description (vertices, connectivity, cell points).
    pub fn to_raw(&self) -> RawMesh<T> {
        RawMesh {
            vertices: self.vertices.clone(),
            cells: self.cells.iter().map(|c| c.vertices.clone()).collect(),
            centres: Some(self.cells.iter().map(|c| c.centre).collect()),
        }
    }

    /// Local index of `face` in the face list of cell `k`.
    pub fn local_index(&self, k: usize, face: usize) -> Option<usize> {
        self.cells[k].faces.iter().position(|cf| cf.face == face)
    }

    /// Converts every coordinate to another scalar type and rebuilds the
    /// cached geometry there.
    pub fn cast<U: Scalar>(&self) -> Result<PolytopalMesh<U>, MeshError> {
        let raw = RawMesh {
            vertices: self.vertices.iter().map(|v| v.cast()).collect(),
            cells: self.cells.iter().map(|c| c.vertices.clone()).collect(),
            centres: Some(self.cells.iter().map(|c| c.centre.cast()).collect()),
        };
        let tags: HashMap<(usize, usize), BoundaryTag> = self
            .faces
            .iter()
            .map(|f| (edge_key(f.vertices[0], f.vertices[1]), f.tag))
            .collect();
        build_mesh_with_face_tags(raw, |a, b, _| tags.get(&edge_key(a, b)).copied())
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Builds a mesh, tagging boundary faces with `tag_rule`.
pub fn build_mesh<T, F>(raw: RawMesh<T>, tag_rule: F) -> Result<PolytopalMesh<T>, MeshError>
where
    T: Scalar,
    F: Fn(&FaceGeometry<T>) -> Option<BoundaryTag>,
{
    let vertices = raw.vertices.clone();
    build_mesh_with_face_tags(raw, |a, b, mid| {
        tag_rule(&FaceGeometry {
            a: vertices[a],
            b: vertices[b],
            midpoint: mid,
        })
    })
}

/// Builds a mesh whose boundary tags are looked up by vertex pair.
pub(crate) fn build_mesh_with_face_tags<T, F>(
    raw: RawMesh<T>,
    tag_of: F,
) -> Result<PolytopalMesh<T>, MeshError>
where
    T: Scalar,
    F: Fn(usize, usize, Vec2<T>) -> Option<BoundaryTag>,
{
    let RawMesh {
        vertices,
        cells: connectivity,
        centres,
    } = raw;

    if connectivity.is_empty() {
        return Err(MeshError::InvalidInput("mesh has no cells".into()));
    }
    if let Some(c) = &centres {
        if c.len() != connectivity.len() {
            return Err(MeshError::InvalidInput(format!(
                "{} cell points for {} cells",
                c.len(),
                connectivity.len()
            )));
        }
    }
    if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
        return Err(MeshError::InvalidInput(format!("vertex {i} is not finite")));
    }

    // Faces in order of first appearance; the edge map only serves lookups.
    let mut face_index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut face_vertices: Vec<[usize; 2]> = Vec::new();
    let mut face_cells: Vec<Vec<(usize, bool)>> = Vec::new();
    let mut cell_face_ids: Vec<Vec<usize>> = Vec::with_capacity(connectivity.len());

    for (k, verts) in connectivity.iter().enumerate() {
        if verts.len() < 3 {
            return Err(MeshError::InvalidInput(format!(
                "cell {k} has {} vertices",
                verts.len()
            )));
        }
        if let Some(&v) = verts.iter().find(|&&v| v >= vertices.len()) {
            return Err(MeshError::InvalidInput(format!(
                "cell {k} references missing vertex {v}"
            )));
        }
        let mut ids = Vec::with_capacity(verts.len());
        for i in 0..verts.len() {
            let a = verts[i];
            let b = verts[(i + 1) % verts.len()];
            if a == b {
                return Err(MeshError::InvalidInput(format!(
                    "cell {k} repeats vertex {a}"
                )));
            }
            let key = edge_key(a, b);
            let id = *face_index.entry(key).or_insert_with(|| {
                face_vertices.push([a, b]);
                face_cells.push(Vec::new());
                face_vertices.len() - 1
            });
            face_cells[id].push((k, a < b));
            ids.push(id);
        }
        cell_face_ids.push(ids);
    }

    let mut faces = Vec::with_capacity(face_vertices.len());
    for (id, fv) in face_vertices.iter().enumerate() {
        let incident = &face_cells[id];
        if incident.is_empty() || incident.len() > 2 {
            return Err(MeshError::DanglingFace {
                a: fv[0],
                b: fv[1],
                count: incident.len(),
            });
        }
        if incident.len() == 2 && incident[0].1 == incident[1].1 {
            return Err(MeshError::Orientation {
                cell: incident[1].0,
                area: f64::NAN,
            });
        }
        let a = vertices[fv[0]];
        let b = vertices[fv[1]];
        let measure = (b - a).norm();
        if !(measure > T::zero()) {
            return Err(MeshError::InvalidInput(format!(
                "face between vertices {} and {} has zero length",
                fv[0], fv[1]
            )));
        }
        let centre = (a + b) * T::half();
        let cells = (incident[0].0, incident.get(1).map(|c| c.0));
        let tag = if cells.1.is_some() {
            BoundaryTag::Interior
        } else {
            match tag_of(fv[0], fv[1], centre) {
                Some(BoundaryTag::Interior) | None => {
                    return Err(MeshError::UntaggedBoundary {
                        x: centre.x.as_f64(),
                        y: centre.y.as_f64(),
                    })
                }
                Some(t) => t,
            }
        };
        faces.push(Face {
            vertices: *fv,
            measure,
            centre,
            diameter: measure,
            cells,
            tag,
        });
    }

    let mut cells = Vec::with_capacity(connectivity.len());
    for (k, verts) in connectivity.into_iter().enumerate() {
        let (measure, centroid) = polygon_area_centroid(&vertices, &verts);
        if !(measure > T::zero()) {
            return Err(MeshError::Orientation {
                cell: k,
                area: measure.as_f64(),
            });
        }
        let centre = centres.as_ref().map_or(centroid, |c| c[k]);
        let mut diameter = T::zero();
        for (i, &a) in verts.iter().enumerate() {
            for &b in &verts[i + 1..] {
                diameter = diameter.max((vertices[a] - vertices[b]).norm());
            }
        }
        let mut cell_faces = Vec::with_capacity(verts.len());
        for (i, &face) in cell_face_ids[k].iter().enumerate() {
            let a = vertices[verts[i]];
            let b = vertices[verts[(i + 1) % verts.len()]];
            let t = b - a;
            let len = t.norm();
            // Counter-clockwise traversal: the outward normal is t rotated clockwise.
            let normal = Vec2::new(t.y / len, -t.x / len);
            let distance = (faces[face].centre - centre).dot(normal);
            if !(distance > T::zero()) {
                return Err(MeshError::NonStarShaped {
                    cell: k,
                    face,
                    distance: distance.as_f64(),
                });
            }
            cell_faces.push(CellFace {
                face,
                normal,
                distance,
            });
        }
        cells.push(Cell {
            vertices: verts,
            faces: cell_faces,
            centre,
            measure,
            diameter,
        });
    }

    Ok(PolytopalMesh {
        vertices,
        cells,
        faces,
    })
}

/// Signed area and centre of mass of a simple polygon.
fn polygon_area_centroid<T: Scalar>(vertices: &[Vec2<T>], poly: &[usize]) -> (T, Vec2<T>) {
    // Shift to the first vertex to limit cancellation.
    let o = vertices[poly[0]];
    let mut area2 = T::zero();
    let mut c = Vec2::zero();
    for i in 0..poly.len() {
        let p = vertices[poly[i]] - o;
        let q = vertices[poly[(i + 1) % poly.len()]] - o;
        let w = p.cross(q);
        area2 += w;
        c += (p + q) * w;
    }
    let area = area2 * T::half();
    if area2 == T::zero() {
        return (area, o);
    }
    (area, o + c * (T::one() / (T::lit(3.0) * area2)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square(centre: Option<Vec2<f64>>) -> RawMesh<f64> {
        RawMesh {
            vertices: vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(0.0, 1.0),
            ],
            cells: vec![vec![0, 1, 2, 3]],
            centres: centre.map(|c| vec![c]),
        }
    }

    #[test]
    fn single_square_geometry() {
        let mesh = build_mesh(unit_square(None), |_| Some(BoundaryTag::Dirichlet)).unwrap();
        let cell = mesh.cell(0);
        assert_eq!(cell.measure, 1.0);
        assert_eq!(cell.centre, Vec2::new(0.5, 0.5));
        assert!((cell.diameter - 2f64.sqrt()).abs() < 1e-15);
        for cf in &cell.faces {
            assert!((cf.distance - 0.5).abs() < 1e-15);
        }
        assert_eq!(mesh.num_faces(), 4);
        assert_eq!(mesh.count_tag(BoundaryTag::Dirichlet), 4);
    }

    #[test]
    fn outside_point_is_rejected() {
        let err = build_mesh(unit_square(Some(Vec2::new(1.5, 0.5))), |_| {
            Some(BoundaryTag::Dirichlet)
        })
        .unwrap_err();
        assert!(matches!(err, MeshError::NonStarShaped { cell: 0, .. }));
    }

    #[test]
    fn untagged_boundary_is_rejected() {
        let err = build_mesh(unit_square(None), |g| {
            (g.midpoint.y > 0.0).then_some(BoundaryTag::Dirichlet)
        })
        .unwrap_err();
        assert!(matches!(err, MeshError::UntaggedBoundary { .. }));
    }

    #[test]
    fn clockwise_cell_is_rejected() {
        let mut raw = unit_square(None);
        raw.cells[0].reverse();
        let err = build_mesh(raw, |_| Some(BoundaryTag::Dirichlet)).unwrap_err();
        assert!(matches!(err, MeshError::Orientation { .. }));
    }

    #[test]
    fn face_shared_by_three_cells_is_dangling() {
        let raw = RawMesh {
            vertices: vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(0.5, 1.0),
                Vec2::new(0.5, -1.0),
                Vec2::new(0.5, 2.0),
            ],
            cells: vec![vec![0, 1, 2], vec![1, 0, 3], vec![0, 1, 4]],
            centres: None,
        };
        let err = build_mesh(raw, |_| Some(BoundaryTag::Dirichlet)).unwrap_err();
        assert!(matches!(err, MeshError::DanglingFace { count: 3, .. }));
    }

    #[test]
    fn tag_strings_round_trip() {
        for tag in [
            BoundaryTag::Interior,
            BoundaryTag::Gamma1,
            BoundaryTag::Gamma2,
            BoundaryTag::Gamma3,
            BoundaryTag::Dirichlet,
            BoundaryTag::Untagged,
        ] {
            assert_eq!(tag.as_str().parse::<BoundaryTag>().unwrap(), tag);
        }
        assert_eq!("wet".parse::<BoundaryTag>().unwrap_err(), "wet");
    }
}
