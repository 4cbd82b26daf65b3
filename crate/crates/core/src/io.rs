//! Mesh files, legacy VTK output, run artifacts and CSV tables.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gdm::DiscreteVector;
use crate::geometry::Vec2;
use crate::mesh::{build_mesh_with_face_tags, BoundaryTag, MeshError, PolytopalMesh, RawMesh};
use crate::scalar::Scalar;

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("I/O failure: {0}")]
    Failure(#[from] std::io::Error),
    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
}

fn parse_error(context: impl Into<String>, message: impl Into<String>) -> IoError {
    IoError::Parse {
        context: context.into(),
        message: message.into(),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshFile {
    dimension: usize,
    vertices: Vec<[f64; 2]>,
    cells: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    centres: Option<Vec<[f64; 2]>>,
    boundary_tags: Vec<TaggedFace>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaggedFace {
    face: [usize; 2],
    tag: String,
}

fn mesh_file<T: Scalar>(mesh: &PolytopalMesh<T>) -> MeshFile {
    let xy = |v: &Vec2<T>| [v.x.as_f64(), v.y.as_f64()];
    MeshFile {
        dimension: 2,
        vertices: mesh.vertices().iter().map(xy).collect(),
        cells: mesh.cells().iter().map(|c| c.vertices.clone()).collect(),
        centres: Some(mesh.cells().iter().map(|c| xy(&c.centre)).collect()),
        boundary_tags: mesh
            .faces()
            .iter()
            .filter(|f| f.is_boundary())
            .map(|f| TaggedFace {
                face: f.vertices,
                tag: f.tag.as_str().to_string(),
            })
            .collect(),
    }
}

/// Canonical JSON text of a mesh: vertices, counter-clockwise cells, cell
/// points and the tag of every boundary face, numbers in shortest
/// round-trip form.
pub fn mesh_to_string<T: Scalar>(mesh: &PolytopalMesh<T>) -> String {
    let mut s = serde_json::to_string_pretty(&mesh_file(mesh)).expect("mesh file serialises");
    s.push('\n');
    s
}

pub fn write_mesh<T: Scalar, W: Write>(mesh: &PolytopalMesh<T>, mut out: W) -> Result<(), IoError> {
    out.write_all(mesh_to_string(mesh).as_bytes())?;
    Ok(())
}

pub fn write_mesh_file<T: Scalar>(mesh: &PolytopalMesh<T>, path: &Path) -> Result<(), IoError> {
    write_mesh(mesh, BufWriter::new(File::create(path)?))
}

pub fn read_mesh<T: Scalar, R: Read>(mut input: R) -> Result<PolytopalMesh<T>, IoError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    mesh_from_str(&text)
}

pub fn read_mesh_file<T: Scalar>(path: &Path) -> Result<PolytopalMesh<T>, IoError> {
    read_mesh(File::open(path)?)
}

pub fn mesh_from_str<T: Scalar>(text: &str) -> Result<PolytopalMesh<T>, IoError> {
    let file: MeshFile = serde_json::from_str(text)
        .map_err(|e| parse_error(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    if file.dimension != 2 {
        return Err(parse_error("dimension", format!("only 2D meshes are supported, got {}", file.dimension)));
    }
    let point = |field: &str, i: usize, p: [f64; 2]| -> Result<Vec2<T>, IoError> {
        if p.iter().all(|c| c.is_finite()) {
            Ok(Vec2::new(T::lit(p[0]), T::lit(p[1])))
        } else {
            Err(parse_error(format!("{field}[{i}]"), "coordinate is not finite"))
        }
    };
    let vertices = file
        .vertices
        .iter()
        .enumerate()
        .map(|(i, &p)| point("vertices", i, p))
        .collect::<Result<Vec<_>, _>>()?;
    let centres = match &file.centres {
        Some(c) => Some(c.iter().enumerate().map(|(i, &p)| point("centres", i, p)).collect::<Result<Vec<_>, _>>()?),
        None => None,
    };
    let mut tags = HashMap::new();
    for (i, t) in file.boundary_tags.iter().enumerate() {
        let tag: BoundaryTag = t
            .tag
            .parse()
            .map_err(|name| parse_error(format!("boundary_tags[{i}].tag"), format!("unknown boundary tag `{name}`")))?;
        let [a, b] = t.face;
        tags.insert((a.min(b), a.max(b)), tag);
    }
    let raw = RawMesh {
        vertices,
        cells: file.cells,
        centres,
    };
    Ok(build_mesh_with_face_tags(raw, |a, b, _| tags.get(&(a.min(b), a.max(b))).copied())?)
}

/// Lowercase hex SHA-256 of the canonical mesh text.
pub fn mesh_hash<T: Scalar>(mesh: &PolytopalMesh<T>) -> String {
    hex::encode(Sha256::digest(mesh_to_string(mesh).as_bytes()))
}

/// Cell data for VTK output.
#[derive(Clone, Debug)]
pub enum CellField<'a, T> {
    Scalar(&'a str, &'a [T]),
    Vector(&'a str, &'a [Vec2<T>]),
}

impl<T> CellField<'_, T> {
    fn name(&self) -> &str {
        match self {
            CellField::Scalar(n, _) | CellField::Vector(n, _) => n,
        }
    }

    fn len(&self) -> usize {
        match self {
            CellField::Scalar(_, v) => v.len(),
            CellField::Vector(_, v) => v.len(),
        }
    }
}

/// Legacy VTK 3.0 ASCII unstructured grid of polygons with cell data.
pub fn write_vtk<T: Scalar, W: Write>(mesh: &PolytopalMesh<T>, fields: &[CellField<'_, T>], out: W) -> Result<(), IoError> {
    let nc = mesh.num_cells();
    for f in fields {
        if f.len() != nc {
            return Err(IoError::Precondition(format!("field `{}` has {} values for {nc} cells", f.name(), f.len())));
        }
        if f.name().is_empty() || f.name().chars().any(char::is_whitespace) {
            return Err(IoError::Precondition(format!("field name `{}` must be a non-empty word", f.name())));
        }
    }
    let mut w = BufWriter::new(out);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "hmm-vi")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.vertices().len())?;
    for v in mesh.vertices() {
        writeln!(w, "{} {} 0", v.x.as_f64(), v.y.as_f64())?;
    }
    let size: usize = mesh.cells().iter().map(|c| c.vertices.len() + 1).sum();
    writeln!(w, "CELLS {nc} {size}")?;
    for c in mesh.cells() {
        write!(w, "{}", c.vertices.len())?;
        for v in &c.vertices {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "CELL_TYPES {nc}")?;
    for _ in 0..nc {
        writeln!(w, "7")?;
    }
    if !fields.is_empty() {
        writeln!(w, "CELL_DATA {nc}")?;
    }
    for f in fields {
        match f {
            CellField::Scalar(name, values) => {
                writeln!(w, "SCALARS {name} double 1")?;
                writeln!(w, "LOOKUP_TABLE default")?;
                for v in values.iter() {
                    writeln!(w, "{}", v.as_f64())?;
                }
            }
            CellField::Vector(name, values) => {
                writeln!(w, "VECTORS {name} double")?;
                for v in values.iter() {
                    writeln!(w, "{} {} 0", v.x.as_f64(), v.y.as_f64())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_vtk_file<T: Scalar>(mesh: &PolytopalMesh<T>, fields: &[CellField<'_, T>], path: &Path) -> Result<(), IoError> {
    write_vtk(mesh, fields, File::create(path)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub timestamp: String,
}

/// Everything needed to reproduce a run: the configuration, the mesh
/// fingerprint, the solution and the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunArtifact {
    pub schema_version: u32,
    pub config: serde_json::Value,
    pub mesh_hash: String,
    pub solution: Option<DiscreteVector<f64>>,
    pub report: serde_json::Value,
    pub provenance: Provenance,
}

impl RunArtifact {
    /// `mesh_hash` is usually [`mesh_hash`] of the run's mesh; runs over
    /// several meshes list them separated by commas.
    pub fn new<T: Scalar>(
        config: serde_json::Value,
        mesh_hash: String,
        solution: Option<&DiscreteVector<T>>,
        report: serde_json::Value,
        timestamp: String,
    ) -> Self {
        Self {
            schema_version: ARTIFACT_SCHEMA_VERSION,
            config,
            mesh_hash,
            solution: solution.map(|s| s.cast()),
            report,
            provenance: Provenance {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                timestamp,
            },
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        let a: Self = serde_json::from_str(text)
            .map_err(|e| parse_error(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        if a.schema_version != ARTIFACT_SCHEMA_VERSION {
            return Err(parse_error("schema_version", format!("unsupported version {}", a.schema_version)));
        }
        Ok(a)
    }
}

/// CSV with a header row taken from the field names of `S`.
pub fn write_csv<S: Serialize, W: Write>(rows: &[S], out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
