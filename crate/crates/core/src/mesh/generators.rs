//! Deterministic mesh families: Cartesian and triangular grids, and the two
//! dam meshes (hexagonal-type and Kershaw-type) of the seepage benchmark.
//!
//! The dam occupies the trapezoid with vertices (0,0), (7,0), (2,5), (0,5).
//! Both dam generators work on a logical unit square and map it with
//! `y = Y(eta)`, `x = xi * (7 - y)`, where `Y` is piecewise linear with a
//! breakpoint chosen so that a vertex of the slanted side lands exactly on
//! `y = 1` (the end of the lower Dirichlet piece).

use std::collections::BTreeMap;

use crate::geometry::Vec2;
use crate::mesh::{build_mesh, BoundaryTag, FaceGeometry, MeshError, PolytopalMesh, RawMesh};
use crate::scalar::Scalar;

/// Area of the dam trapezoid.
pub const DAM_AREA: f64 = 22.5;

/// Distortion parameter of the Kershaw-type dam meshes (1 gives a
/// uniform grid, smaller values distort more).
pub const KERSHAW_DISTORTION: f64 = 0.3;

/// Cartesian `nx` x `ny` grid of `[x0, x1] x [y0, y1]`.
pub fn cartesian<T, F>(
    nx: usize,
    ny: usize,
    lower: (f64, f64),
    upper: (f64, f64),
    tag_rule: F,
) -> Result<PolytopalMesh<T>, MeshError>
where
    T: Scalar,
    F: Fn(&FaceGeometry<T>) -> Option<BoundaryTag>,
{
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidInput("grid needs at least one cell".into()));
    }
    let vertices = grid_vertices(nx, ny, lower, upper);
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    build_mesh(
        RawMesh {
            vertices,
            cells,
            centres: None,
        },
        tag_rule,
    )
}

/// Cartesian grid with every square split into two triangles, diagonals
/// alternating between neighbouring squares.
pub fn triangular<T, F>(
    nx: usize,
    ny: usize,
    lower: (f64, f64),
    upper: (f64, f64),
    tag_rule: F,
) -> Result<PolytopalMesh<T>, MeshError>
where
    T: Scalar,
    F: Fn(&FaceGeometry<T>) -> Option<BoundaryTag>,
{
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidInput("grid needs at least one cell".into()));
    }
    let vertices = grid_vertices(nx, ny, lower, upper);
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                cells.push(vec![a, b, c]);
                cells.push(vec![a, c, d]);
            } else {
                cells.push(vec![a, b, d]);
                cells.push(vec![b, c, d]);
            }
        }
    }
    build_mesh(
        RawMesh {
            vertices,
            cells,
            centres: None,
        },
        tag_rule,
    )
}

fn grid_vertices<T: Scalar>(
    nx: usize,
    ny: usize,
    lower: (f64, f64),
    upper: (f64, f64),
) -> Vec<Vec2<T>> {
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        let y = lower.1 + (upper.1 - lower.1) * j as f64 / ny as f64;
        for i in 0..=nx {
            let x = lower.0 + (upper.0 - lower.0) * i as f64 / nx as f64;
            vertices.push(Vec2::new(T::lit(x), T::lit(y)));
        }
    }
    vertices
}

/// Tag rule for an axis-aligned rectangle: tags for the left, bottom, right
/// and top sides.
pub fn unit_square_tags<T: Scalar>(
    lower: (f64, f64),
    upper: (f64, f64),
    sides: [BoundaryTag; 4],
) -> impl Fn(&FaceGeometry<T>) -> Option<BoundaryTag> {
    let tol = boundary_tolerance::<T>() * (upper.0 - lower.0).abs().max((upper.1 - lower.1).abs());
    move |g: &FaceGeometry<T>| {
        let (x, y) = (g.midpoint.x.as_f64(), g.midpoint.y.as_f64());
        if (x - lower.0).abs() <= tol {
            Some(sides[0])
        } else if (y - lower.1).abs() <= tol {
            Some(sides[1])
        } else if (x - upper.0).abs() <= tol {
            Some(sides[2])
        } else if (y - upper.1).abs() <= tol {
            Some(sides[3])
        } else {
            None
        }
    }
}

fn boundary_tolerance<T: Scalar>() -> f64 {
    (1e3 * T::epsilon().as_f64()).max(1e-9)
}

/// Boundary parts of the dam: `Γ1` on `x = 0` and on the slanted side up to
/// `y = 1`, `Γ2` on `y = 0`, `Γ3` on the top and the rest of the slanted
/// side. A slanted face belongs to `Γ1` when its midpoint ordinate is at most 1.
pub fn dam_tag<T: Scalar>(g: &FaceGeometry<T>) -> Option<BoundaryTag> {
    let tol = 7.0 * boundary_tolerance::<T>();
    let (x, y) = (g.midpoint.x.as_f64(), g.midpoint.y.as_f64());
    if x.abs() <= tol {
        Some(BoundaryTag::Gamma1)
    } else if y.abs() <= tol {
        Some(BoundaryTag::Gamma2)
    } else if (y - 5.0).abs() <= tol {
        Some(BoundaryTag::Gamma3)
    } else if (x + y - 7.0).abs() <= tol {
        if y <= 1.0 {
            Some(BoundaryTag::Gamma1)
        } else {
            Some(BoundaryTag::Gamma3)
        }
    } else {
        None
    }
}

/// Maps a logical point of the unit square onto the dam; `breakpoint` is the
/// logical ordinate sent to `y = 1`.
fn dam_map(xi: f64, eta: f64, breakpoint: f64) -> (f64, f64) {
    let y = if eta <= breakpoint {
        eta / breakpoint
    } else {
        1.0 + 4.0 * (eta - breakpoint) / (1.0 - breakpoint)
    };
    (xi * (7.0 - y), y)
}

/// Hexagonal-type mesh of the dam with `n x n` cells, `n = round(sqrt(target_cells))`
/// (at least 2).
///
/// Rows of cells are staggered by half a cell and the row interfaces are
/// zig-zagged, so interior cells are hexagons; cells along the boundary are
/// pentagons or quadrilaterals. `target_cells = 441` gives 441 cells.
pub fn dam_hexagonal<T: Scalar>(target_cells: usize) -> Result<PolytopalMesh<T>, MeshError> {
    if target_cells == 0 {
        return Err(MeshError::InvalidInput("target_cells must be at least 1".into()));
    }
    let n = ((target_cells as f64).sqrt().round() as usize).max(2);
    let nf = n as f64;
    let delta = 1.0 / (6.0 * nf);
    let split_row = ((nf / 5.0).round() as usize).clamp(1, n - 1);
    let breakpoint = split_row as f64 / nf;

    // Row boundaries in units of 1/(2n). Odd rows are shifted by half a cell,
    // alternating which end carries the wider cell.
    let row_bounds = |j: usize| -> Vec<usize> {
        if j % 2 == 0 {
            (0..=n).map(|i| 2 * i).collect()
        } else {
            let shift_left = j % 4 == 1;
            let mut b = vec![0];
            for i in 1..n {
                b.push(if shift_left { 2 * i + 1 } else { 2 * i - 1 });
            }
            b.push(2 * n);
            b
        }
    };
    let bounds: Vec<Vec<usize>> = (0..n).map(row_bounds).collect();

    // Vertices per interface k (between rows k-1 and k), keyed by x position.
    let mut vertices: Vec<Vec2<T>> = Vec::new();
    let mut interface: Vec<BTreeMap<usize, usize>> = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let below: &[usize] = if k > 0 { &bounds[k - 1] } else { &[] };
        let above: &[usize] = if k < n { &bounds[k] } else { &[] };
        let mut keys: Vec<usize> = below.iter().chain(above.iter()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        let mut map = BTreeMap::new();
        for key in keys {
            let in_below = below.contains(&key);
            let in_above = above.contains(&key);
            let shift = if k == 0 || k == n || (in_below && in_above) {
                0.0
            } else if in_below {
                -delta
            } else {
                delta
            };
            let xi = key as f64 / (2.0 * nf);
            let eta = k as f64 / nf + shift;
            let (x, y) = dam_map(xi, eta, breakpoint);
            map.insert(key, vertices.len());
            vertices.push(Vec2::new(T::lit(x), T::lit(y)));
        }
        interface.push(map);
    }

    let mut cells = Vec::with_capacity(n * n);
    for (j, row) in bounds.iter().enumerate() {
        for w in row.windows(2) {
            let (l, r) = (w[0], w[1]);
            let mut poly = Vec::new();
            poly.extend(interface[j].range(l..=r).map(|(_, &v)| v));
            poly.extend(interface[j + 1].range(l..=r).rev().map(|(_, &v)| v));
            cells.push(poly);
        }
    }

    build_mesh(
        RawMesh {
            vertices,
            cells,
            centres: None,
        },
        dam_tag,
    )
}

/// Number of cells per direction of the Kershaw-type dam mesh at `level`.
/// Level 1 is the 51 x 51 mesh (2601 cells); each level adds 17 cells per
/// direction.
pub fn kershaw_level_size(level: usize) -> usize {
    17 * (level + 2)
}

/// Kershaw-type distorted quadrilateral mesh of the dam.
///
/// The logical grid is distorted by the piecewise-linear Kershaw map (six
/// vertical layers alternating between two 1D stretchings), then mapped to
/// the dam by the shear `x = xi * (7 - y)`.
pub fn dam_kershaw<T: Scalar>(level: usize) -> Result<PolytopalMesh<T>, MeshError> {
    dam_kershaw_distorted(level, KERSHAW_DISTORTION)
}

/// [`dam_kershaw`] with the distortion `eps` in `(0, 1]`; `eps = 1` gives
/// the undistorted grid.
pub fn dam_kershaw_distorted<T: Scalar>(level: usize, eps: f64) -> Result<PolytopalMesh<T>, MeshError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(MeshError::InvalidInput(format!("Kershaw distortion {eps} must lie in (0, 1]")));
    }
    if level == 0 {
        return Err(MeshError::InvalidInput("Kershaw level starts at 1".into()));
    }
    let n = kershaw_level_size(level);
    let nf = n as f64;

    // Right-side vertex whose distorted ordinate is closest to 1/5.
    let split = (1..n)
        .min_by(|&a, &b| {
            let da = (kershaw_map(1.0, a as f64 / nf, eps) - 0.2).abs();
            let db = (kershaw_map(1.0, b as f64 / nf, eps) - 0.2).abs();
            da.total_cmp(&db)
        })
        .expect("n >= 2");
    let breakpoint = kershaw_map(1.0, split as f64 / nf, eps);

    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let xi = i as f64 / nf;
            let eta = kershaw_map(xi, j as f64 / nf, eps);
            let (x, y) = dam_map(xi, eta, breakpoint);
            vertices.push(Vec2::new(T::lit(x), T::lit(y)));
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            cells.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    build_mesh(
        RawMesh {
            vertices,
            cells,
            centres: None,
        },
        dam_tag,
    )
}

/// Kershaw distortion of the ordinate `y` at abscissa `x`, both in `[0, 1]`.
fn kershaw_map(x: f64, y: f64, eps: f64) -> f64 {
    fn step(a: f64, b: f64, t: f64) -> f64 {
        if t <= 0.0 {
            a
        } else if t >= 1.0 {
            b
        } else {
            a + (b - a) * t
        }
    }
    fn right(eps: f64, y: f64) -> f64 {
        if y <= 0.5 {
            (2.0 - eps) * y
        } else {
            1.0 + eps * (y - 1.0)
        }
    }
    fn left(eps: f64, y: f64) -> f64 {
        1.0 - right(eps, 1.0 - y)
    }

    let layer = (6.0 * x).floor() as i32;
    let lambda = (x - layer as f64 / 6.0) * 6.0;
    match layer {
        0 => left(eps, y),
        1 | 4 => step(left(eps, y), right(eps, y), lambda),
        2 => step(right(eps, y), left(eps, y), lambda / 2.0),
        3 => step(right(eps, y), left(eps, y), (1.0 + lambda) / 2.0),
        _ => right(eps, y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_invariants(mesh: &PolytopalMesh<f64>, area: f64) {
        let total = mesh.domain_measure();
        assert!((total - area).abs() <= 1e-10 * area, "area {total} vs {area}");
        for cell in mesh.cells() {
            let mut closure = Vec2::zero();
            let mut dsum = 0.0;
            for cf in &cell.faces {
                let f = mesh.face(cf.face);
                closure += cf.normal * f.measure;
                dsum += f.measure * cf.distance;
                assert!(cf.distance > 0.0);
                assert!(cell.diameter >= f.diameter - 1e-14);
            }
            assert!(closure.norm() <= 1e-12 * cell.diameter);
            assert!((dsum - 2.0 * cell.measure).abs() <= 1e-12 * dsum);
        }
        for face in mesh.faces() {
            assert_eq!(face.tag == BoundaryTag::Interior, face.cells.1.is_some());
        }
    }

    #[test]
    fn cartesian_grid_is_valid() {
        let tags = unit_square_tags((0.0, 0.0), (1.0, 1.0), [BoundaryTag::Dirichlet; 4]);
        let mesh = cartesian::<f64, _>(3, 4, (0.0, 0.0), (1.0, 1.0), tags).unwrap();
        assert_eq!(mesh.num_cells(), 12);
        assert_eq!(mesh.num_faces(), 3 * 5 + 4 * 4);
        check_invariants(&mesh, 1.0);
    }

    #[test]
    fn triangular_grid_is_valid() {
        let tags = unit_square_tags((0.0, 0.0), (2.0, 1.0), [BoundaryTag::Dirichlet; 4]);
        let mesh = triangular::<f64, _>(4, 2, (0.0, 0.0), (2.0, 1.0), tags).unwrap();
        assert_eq!(mesh.num_cells(), 16);
        check_invariants(&mesh, 2.0);
    }

    #[test]
    fn hexagonal_dam_matches_target() {
        let mesh = dam_hexagonal::<f64>(441).unwrap();
        assert_eq!(mesh.num_cells(), 441);
        check_invariants(&mesh, DAM_AREA);
        let hexagons = mesh.cells().iter().filter(|c| c.faces.len() == 6).count();
        assert!(hexagons > 300, "{hexagons} hexagons");
        let h = mesh.h_mesh();
        assert!((h - 0.69).abs() <= 0.069, "h_M = {h}");
    }

    #[test]
    fn smallest_hexagonal_dam_is_valid() {
        let mesh = dam_hexagonal::<f64>(1).unwrap();
        check_invariants(&mesh, DAM_AREA);
        assert!(mesh.count_tag(BoundaryTag::Gamma3) > 0);
        assert!(dam_hexagonal::<f64>(0).is_err());
    }

    #[test]
    fn kershaw_dam_level_one() {
        let mesh = dam_kershaw::<f64>(1).unwrap();
        assert_eq!(mesh.num_cells(), 2601);
        check_invariants(&mesh, DAM_AREA);
        let h = mesh.h_mesh();
        assert!((h - 0.69).abs() <= 0.069, "h_M = {h}");
    }

    #[test]
    fn dam_split_point_is_a_vertex() {
        for mesh in [dam_hexagonal::<f64>(441).unwrap(), dam_kershaw::<f64>(1).unwrap()] {
            let hit = mesh
                .vertices()
                .iter()
                .any(|v| (v.y - 1.0).abs() < 1e-12 && (v.x + v.y - 7.0).abs() < 1e-12);
            assert!(hit);
            // Every Γ1 face on the slant lies below y = 1, every Γ3 one above.
            for f in mesh.faces() {
                let on_slant = (f.centre.x + f.centre.y - 7.0).abs() < 1e-9;
                if on_slant {
                    let lo = mesh.vertices()[f.vertices[0]].y.min(mesh.vertices()[f.vertices[1]].y);
                    let hi = mesh.vertices()[f.vertices[0]].y.max(mesh.vertices()[f.vertices[1]].y);
                    match f.tag {
                        BoundaryTag::Gamma1 => assert!(hi <= 1.0 + 1e-12),
                        BoundaryTag::Gamma3 => assert!(lo >= 1.0 - 1e-12),
                        t => panic!("slanted face tagged {t}"),
                    }
                }
            }
        }
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(dam_hexagonal::<f64>(100).unwrap(), dam_hexagonal::<f64>(100).unwrap());
        assert_eq!(dam_kershaw::<f64>(1).unwrap(), dam_kershaw::<f64>(1).unwrap());
    }

    #[test]
    fn kershaw_map_is_continuous_and_fixes_ends() {
        for i in 0..=60 {
            let x = (i as f64 / 60.0).clamp(2e-9, 1.0 - 2e-9);
            assert!(kershaw_map(x, 0.0, 0.3).abs() < 1e-15);
            assert!((kershaw_map(x, 1.0, 0.3) - 1.0).abs() < 1e-15);
            let a = kershaw_map(x - 1e-9, 0.4, 0.3);
            let b = kershaw_map(x + 1e-9, 0.4, 0.3);
            assert!((a - b).abs() < 1e-6);
        }
    }
}
