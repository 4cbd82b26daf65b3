use super::*;
use crate::mesh::{
    build_mesh, cartesian, dam_hexagonal, dam_kershaw, regularity_report, triangular, unit_square_tags,
    RawMesh,
};
use proptest::prelude::*;

fn square(n: usize, tag: BoundaryTag) -> PolytopalMesh<f64> {
    cartesian(n, n, (0.0, 0.0), (1.0, 1.0), unit_square_tags((0.0, 0.0), (1.0, 1.0), [tag; 4])).unwrap()
}

fn local_face(mesh: &PolytopalMesh<f64>, k: usize, centre: (f64, f64)) -> usize {
    mesh.cell(k)
        .faces
        .iter()
        .position(|cf| {
            let c = mesh.face(cf.face).centre;
            (c.x - centre.0).abs() < 1e-14 && (c.y - centre.1).abs() < 1e-14
        })
        .unwrap()
}

#[test]
fn reconstructions_of_constants() {
    let mesh = square(3, BoundaryTag::Dirichlet);
    let disc = HmmDiscretisation::new(&mesh, 2.0);
    let v = DiscreteVector::constant(&mesh, 1.5);
    assert!(disc.reconstruct_function(&v).iter().all(|&x| x == 1.5));
    assert!(disc.reconstruct_trace(&v).iter().all(|&(_, x)| x == 1.5));
    assert_eq!(disc.reconstruct_trace(&v).len(), 12);
    for g in disc.reconstruct_gradient(&v).concat() {
        assert!(g.norm() < 1e-14);
    }
}

#[test]
fn single_square_trace_and_barycentre() {
    let mesh = square(1, BoundaryTag::Dirichlet);
    let disc = HmmDiscretisation::new(&mesh, 2.0);
    let mut v = DiscreteVector::zeros(&mesh);
    for (i, f) in v.faces.iter_mut().enumerate() {
        *f = i as f64 + 1.0;
    }
    let trace: Vec<f64> = disc.reconstruct_trace(&v).into_iter().map(|(_, x)| x).collect();
    assert_eq!(trace, vec![1.0, 2.0, 3.0, 4.0]);
    let w = disc.interpolate_point(|p| p.x).unwrap();
    assert_eq!(disc.reconstruct_function(&w), vec![0.5]);
}

#[test]
fn gradient_hand_evaluation() {
    // v_K = 0 and v = 1 on the left face of the unit square:
    // ∇_K v = (-1, 0), R = 1/2 on the left and right faces, 0 elsewhere,
    // and the stabilisation factor is √2 / (1/2).
    let mesh = square(1, BoundaryTag::Dirichlet);
    let disc = HmmDiscretisation::new(&mesh, 2.0);
    let mut v = DiscreteVector::zeros(&mesh);
    let left = local_face(&mesh, 0, (0.0, 0.5));
    let right = local_face(&mesh, 0, (1.0, 0.5));
    let bottom = local_face(&mesh, 0, (0.5, 0.0));
    v.faces[mesh.cell(0).faces[left].face] = 1.0;
    let g = &disc.reconstruct_gradient(&v)[0];
    let s2 = 2f64.sqrt();
    assert!((g[left].x - (-1.0 - s2)).abs() < 1e-14 && g[left].y.abs() < 1e-14);
    assert!((g[right].x - (s2 - 1.0)).abs() < 1e-14 && g[right].y.abs() < 1e-14);
    assert!((g[bottom].x + 1.0).abs() < 1e-14 && g[bottom].y.abs() < 1e-14);
    assert_eq!(disc.residual(0, &v)[left], 0.5);
}

#[test]
fn boundary_interpolant() {
    let tags = unit_square_tags((0.0, 0.0), (1.0, 1.0), [
        BoundaryTag::Gamma1,
        BoundaryTag::Gamma2,
        BoundaryTag::Gamma3,
        BoundaryTag::Gamma3,
    ]);
    let mesh = cartesian::<f64, _>(2, 2, (0.0, 0.0), (1.0, 1.0), tags).unwrap();
    let disc = HmmDiscretisation::new(&mesh, 2.0);
    let v = disc.interpolate_boundary(|_| 5.0, &[BoundaryTag::Gamma1]).unwrap();
    for (s, f) in mesh.faces().iter().enumerate() {
        let expected = if f.tag == BoundaryTag::Gamma1 { 5.0 } else { 0.0 };
        assert!((v.faces[s] - expected).abs() < 1e-14);
    }
    assert!(v.cells.iter().all(|&x| x == 0.0));
    let bad = disc.interpolate_boundary(|_| f64::NAN, &[BoundaryTag::Gamma1]);
    assert!(matches!(bad, Err(GdmError::QuadratureFailure(_))));
    // Face from (0,0) to (0.5,0) of g = x: mean 0.25.
    let w = disc.interpolate_boundary(|p| p.x, &[BoundaryTag::Gamma2]).unwrap();
    let s = mesh.faces().iter().position(|f| (f.centre.x - 0.25).abs() < 1e-14 && f.centre.y == 0.0).unwrap();
    assert!((w.faces[s] - 0.25).abs() < 1e-15);
}

#[test]
fn seminorm_hand_evaluation() {
    let mesh = square(1, BoundaryTag::Dirichlet);
    let disc = HmmDiscretisation::new(&mesh, 2.0);
    let mut v = DiscreteVector::zeros(&mesh);
    v.faces.iter_mut().for_each(|f| *f = 1.0);
    // 4 faces of |σ| = 1, d = 1/2: 4 * 1 * 0.5 * (1 / 0.5)^2 = 8.
    assert!((disc.discrete_seminorm(&v, 2.0) - 8f64.sqrt()).abs() < 1e-14);
    assert_eq!(disc.discrete_seminorm(&DiscreteVector::constant(&mesh, 3.0), 2.0), 0.0);
}

fn random_star_polygon(seed: u64) -> PolytopalMesh<f64> {
    use rand::{rngs::StdRng, Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(seed);
    let n = rng.gen_range(3..9);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    // Keep gaps below π so the origin stays strictly inside.
    for i in 0..n {
        angles[i] = (i as f64 + rng.gen_range(0.3..0.7)) * std::f64::consts::TAU / n as f64;
    }
    let vertices = angles
        .iter()
        .map(|&a| {
            let r = rng.gen_range(0.5..1.5);
            Vec2::new(r * a.cos() + 3.0, r * a.sin() - 1.0)
        })
        .collect();
    let raw = RawMesh {
        vertices,
        cells: vec![(0..n).collect()],
        centres: Some(vec![Vec2::new(3.0, -1.0)]),
    };
    build_mesh(raw, |_| Some(BoundaryTag::Dirichlet)).unwrap()
}

#[test]
fn affine_exactness_on_random_cells() {
    for seed in 0..100 {
        let mesh = random_star_polygon(seed);
        let disc = HmmDiscretisation::new(&mesh, 2.0);
        let c = Vec2::new(1.3 - seed as f64 * 0.01, -0.7);
        let v = disc.interpolate_point(|x| c.dot(x) + 2.0).unwrap();
        for g in &disc.reconstruct_gradient(&v)[0] {
            assert!((*g - c).norm() <= 1e-12 * c.norm(), "seed {seed}");
        }
        assert!(disc.residual(0, &v).iter().all(|r| r.abs() < 1e-12));
    }
}

#[test]
fn local_matrix_is_the_bilinear_form() {
    let mesh = random_star_polygon(7);
    let disc = HmmDiscretisation::new(&mesh, 2.0);
    let lam = Mat2::new(2.0, 0.3, 0.3, 1.0);
    let lg = disc.local(0);
    let m = lg.matrix(&lam);
    let n = lg.num_faces() + 1;
    let u: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
    let v: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).cos()).collect();
    let (gu, gv) = (lg.apply(&u), lg.apply(&v));
    let direct: f64 = (0..n - 1).map(|i| lg.diamond_measures[i] * lam.apply(gu[i]).dot(gv[i])).sum();
    let via: f64 = (0..n).map(|a| (0..n).map(|c| v[a] * m[a * n + c] * u[c]).sum::<f64>()).sum();
    assert!((direct - via).abs() < 1e-12 * direct.abs().max(1.0));
    for a in 0..n {
        for c in 0..n {
            assert!((m[a * n + c] - m[c * n + a]).abs() < 1e-13);
        }
    }
}

#[test]
fn stabilisation_bound_with_mesh_theta() {
    use rand::{rngs::StdRng, Rng, SeedableRng};
    let mesh = dam_hexagonal::<f64>(60).unwrap();
    let theta = regularity_report(&mesh).theta;
    let mut rng = StdRng::seed_from_u64(3);
    for p in [2.0, 3.0] {
        let disc = HmmDiscretisation::new(&mesh, p);
        for k in 0..mesh.num_cells() {
            let mu: Vec<f64> = (0..mesh.cell(k).faces.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!(disc.stabilisation_bound_holds(k, &mu, theta));
        }
        // A scaling outside [θ^{-1/p}, θ^{1/p}] breaks it.
        let wild = HmmDiscretisation::with_stabilisation(&mesh, p, |_| 2.0 * theta);
        assert!(!wild.stabilisation_bound_holds(0, &[1.0, -1.0, 0.5, 0.2, 0.0, 0.1][..mesh.cell(0).faces.len()], theta));
    }
}

#[test]
fn weights_on_generated_meshes() {
    let meshes = [
        square(5, BoundaryTag::Dirichlet),
        triangular(4, 3, (0.0, 0.0), (1.0, 1.0), unit_square_tags((0.0, 0.0), (1.0, 1.0), [BoundaryTag::Dirichlet; 4])).unwrap(),
        dam_hexagonal(441).unwrap(),
        dam_kershaw(1).unwrap(),
    ];
    for mesh in &meshes {
        let w = WeightFamily::new(mesh);
        let bound = w.varrho.powi(2);
        for (k, cell) in mesh.cells().iter().enumerate() {
            let (mass, first) = w.moments(mesh, k);
            assert!((mass - cell.measure).abs() <= 1e-10 * cell.measure);
            assert!((first.scale(1.0 / cell.measure) - cell.centre).norm() <= 1e-10 * (1.0 + cell.centre.norm()));
            assert!(w.magnitude[k] >= 0.0 && w.magnitude[k] <= bound);
            assert!(w.ball_inside(mesh, k));
            assert_eq!(w.weight(mesh, k, cell.centre), w.magnitude[k]);
        }
    }
}

#[test]
fn full_interpolant_basics() {
    let mesh = dam_hexagonal::<f64>(60).unwrap();
    let disc = HmmDiscretisation::new(&mesh, 2.0);
    let w = WeightFamily::new(&mesh);
    let v = disc.interpolate_full(|_| 4.0, &w).unwrap();
    assert!(v.cells.iter().chain(&v.faces).all(|&x| (x - 4.0).abs() < 1e-13));
    let a = disc.interpolate_full(|x| 2.0 * x.x - x.y + 1.0, &w).unwrap();
    for (k, c) in mesh.cells().iter().enumerate() {
        assert!((a.cells[k] - (2.0 * c.centre.x - c.centre.y + 1.0)).abs() < 1e-12);
    }
}

#[test]
fn interpolant_stability() {
    let mesh = dam_hexagonal::<f64>(200).unwrap();
    let theta = regularity_report(&mesh).theta;
    let disc = HmmDiscretisation::new(&mesh, 2.0);
    let w = WeightFamily::new(&mesh);
    for j in 0..10 {
        let f = j as f64 + 1.0;
        let phi = move |x: Vec2<f64>| (f * x.x).sin() * (x.y / f).cos() + 0.1 * f;
        let v = disc.interpolate_full(phi, &w).unwrap();
        let lhs = disc.function_norm(&v, 2.0);
        let mut rhs = 0.0;
        for k in 0..mesh.num_cells() {
            for i in 0..mesh.cell(k).faces.len() {
                let [a, b, c] = diagnostics_diamond(&mesh, k, i);
                rhs += crate::quadrature::triangle_rule(a, b, c, 5).iter().map(|(x, q)| q * phi(*x).powi(2)).sum::<f64>();
            }
        }
        assert!(lhs <= theta * theta * rhs.sqrt());
    }
}

fn diagnostics_diamond(mesh: &PolytopalMesh<f64>, k: usize, i: usize) -> [Vec2<f64>; 3] {
    let cell = mesh.cell(k);
    let f = mesh.face(cell.faces[i].face);
    [cell.centre, mesh.vertices()[f.vertices[0]], mesh.vertices()[f.vertices[1]]]
}

#[test]
fn gradient_bounded_by_seminorm() {
    use rand::{rngs::StdRng, Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for n in [2, 4, 8] {
        let mesh = square(n, BoundaryTag::Dirichlet);
        let disc = HmmDiscretisation::new(&mesh, 2.0);
        for _ in 0..20 {
            let mut v = DiscreteVector::zeros(&mesh);
            v.cells.iter_mut().chain(v.faces.iter_mut()).for_each(|x| *x = rng.gen_range(-1.0..1.0));
            worst = worst.max(disc.gradient_norm(&v, 2.0) / disc.discrete_seminorm(&v, 2.0));
        }
    }
    // Mesh-independent for uniform grids.
    assert!(worst.is_finite() && worst < 5.0, "{worst}");
}

#[test]
fn consistency_of_affine_gradient() {
    let mesh = square(1, BoundaryTag::Dirichlet);
    let disc = HmmDiscretisation::new(&mesh, 2.0);
    let w = WeightFamily::new(&mesh);
    let c = Vec2::new(0.4, -1.1);
    let est = diag_consistency(&disc, |x| c.dot(x), |_| c, &ConvexSet::unconstrained(), &w).unwrap();
    assert!(est.gradient_error < 1e-10);
    // The cell value is a point value, so the function part is the L² distance of
    // an affine function to its centre value: |c| / sqrt(12) on the unit square.
    assert!((est.function_error - c.norm() / 12f64.sqrt()).abs() < 1e-12);
}

#[test]
fn consistency_rejects_barrier_violation() {
    let mesh = square(2, BoundaryTag::Dirichlet);
    let disc = HmmDiscretisation::new(&mesh, 2.0);
    let w = WeightFamily::new(&mesh);
    let set = ConvexSet {
        face_upper: mesh.faces_with_tag(BoundaryTag::Dirichlet).map(|s| (s, 0.0)).collect(),
        ..ConvexSet::unconstrained()
    };
    let r = diag_consistency(&disc, |_| 1.0, |_| Vec2::zero(), &set, &w);
    assert!(matches!(r, Err(GdmError::InadmissibleTestFunction(_))));
}

#[test]
fn consistency_decays() {
    use std::f64::consts::PI;
    let mut prev = f64::INFINITY;
    for n in [4, 8, 16] {
        let mesh = square(n, BoundaryTag::Dirichlet);
        let disc = HmmDiscretisation::new(&mesh, 2.0);
        let w = WeightFamily::new(&mesh);
        let set = ConvexSet {
            fixed_faces: mesh.faces_with_tag(BoundaryTag::Dirichlet).map(|s| (s, 0.0)).collect(),
            ..ConvexSet::unconstrained()
        };
        let e = diag_consistency(
            &disc,
            |x| (PI * x.x).sin() * (PI * x.y).sin(),
            |x| Vec2::new(PI * (PI * x.x).cos() * (PI * x.y).sin(), PI * (PI * x.x).sin() * (PI * x.y).cos()),
            &set,
            &w,
        )
        .unwrap();
        assert!(e.value < 0.7 * prev);
        prev = e.value;
    }
}

#[test]
fn conformity_of_constant_field_vanishes() {
    let tags = unit_square_tags((0.0, 0.0), (1.0, 1.0), [
        BoundaryTag::Gamma1,
        BoundaryTag::Gamma3,
        BoundaryTag::Gamma3,
        BoundaryTag::Gamma3,
    ]);
    let mesh = cartesian::<f64, _>(1, 1, (0.0, 0.0), (1.0, 1.0), tags).unwrap();
    let disc = HmmDiscretisation::new(&mesh, 2.0);
    let est = diag_limit_conformity(&disc, |_| Vec2::new(0.3, -2.0), |_| 0.0, 10, 1).unwrap();
    assert!(est.value < 1e-12, "{}", est.value);
    let rand_mesh = random_star_polygon(5);
    let tags = rand_mesh.to_raw();
    let m3 = build_mesh(tags, |g| {
        Some(if g.midpoint.x < 3.0 { BoundaryTag::Gamma1 } else { BoundaryTag::Gamma3 })
    })
    .unwrap();
    let d3 = HmmDiscretisation::new(&m3, 2.0);
    let est = diag_limit_conformity(&d3, |_| Vec2::new(1.0, 1.0), |_| 0.0, 10, 1).unwrap();
    assert!(est.value < 1e-12, "{}", est.value);
}

#[test]
fn riesz_probe_dominates_random_probes() {
    let tags = unit_square_tags((0.0, 0.0), (1.0, 1.0), [
        BoundaryTag::Gamma1,
        BoundaryTag::Gamma1,
        BoundaryTag::Gamma3,
        BoundaryTag::Gamma3,
    ]);
    let mesh = cartesian::<f64, _>(4, 4, (0.0, 0.0), (1.0, 1.0), tags).unwrap();
    let disc = HmmDiscretisation::new(&mesh, 2.0);
    let est = diag_limit_conformity(&disc, |x| Vec2::new(x.y.sin(), x.x.cos()), |_| 0.0, 50, 2).unwrap();
    let r = est.riesz.unwrap();
    assert!(r >= est.probe_max && r > 0.0);
    assert!(est.probes > 50);
}

#[test]
fn coercivity_single_cell_and_refinement() {
    let tags = unit_square_tags((0.0, 0.0), (1.0, 1.0), [
        BoundaryTag::Gamma1,
        BoundaryTag::Gamma2,
        BoundaryTag::Gamma3,
        BoundaryTag::Gamma3,
    ]);
    let one = cartesian::<f64, _>(1, 1, (0.0, 0.0), (1.0, 1.0), &tags).unwrap();
    let c1 = diag_coercivity(&HmmDiscretisation::new(&one, 2.0), 1e-8, 10_000).unwrap();
    assert!(c1.value > 0.0 && c1.value.is_finite());
    let mut values = Vec::new();
    for n in [2, 4, 8, 16] {
        let mesh = cartesian::<f64, _>(n, n, (0.0, 0.0), (1.0, 1.0), &tags).unwrap();
        values.push(diag_coercivity(&HmmDiscretisation::new(&mesh, 2.0), 1e-8, 10_000).unwrap().value);
    }
    let (lo, hi) = values.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(hi < 2.0 * lo, "{values:?}");
    let probe = diag_coercivity(&HmmDiscretisation::new(&one, 3.0), 1e-8, 50).unwrap();
    assert_eq!(probe.method, "probe");
    assert!(probe.value > 0.0);
}

#[test]
fn coercivity_iteration_cap() {
    let tags = unit_square_tags((0.0, 0.0), (1.0, 1.0), [BoundaryTag::Gamma1, BoundaryTag::Gamma3, BoundaryTag::Gamma3, BoundaryTag::Gamma3]);
    let mesh = cartesian::<f64, _>(6, 6, (0.0, 0.0), (1.0, 1.0), tags).unwrap();
    let r = diag_coercivity(&HmmDiscretisation::new(&mesh, 2.0), 1e-15, 2);
    assert!(matches!(r, Err(GdmError::SolverDivergence { .. })));
}

#[test]
fn f32_instantiation() {
    let mesh = cartesian::<f32, _>(3, 3, (0.0, 0.0), (1.0, 1.0), unit_square_tags((0.0, 0.0), (1.0, 1.0), [BoundaryTag::Dirichlet; 4])).unwrap();
    let disc = HmmDiscretisation::new(&mesh, 2.0f32);
    let v = disc.interpolate_point(|x| 2.0 * x.x + x.y).unwrap();
    for g in disc.reconstruct_gradient(&v).concat() {
        assert!((g - Vec2::new(2.0, 1.0)).norm() < 1e-4);
    }
}

proptest! {
    #[test]
    fn reconstructions_are_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        use rand::{rngs::StdRng, Rng, SeedableRng};
        let mesh = random_star_polygon(seed);
        let disc = HmmDiscretisation::new(&mesh, 2.0);
        let mut rng = StdRng::seed_from_u64(seed + 1);
        let mut rand_vec = || {
            let mut v = DiscreteVector::zeros(&mesh);
            v.cells.iter_mut().chain(v.faces.iter_mut()).for_each(|x| *x = rng.gen_range(-1.0..1.0));
            v
        };
        let (x, y) = (rand_vec(), rand_vec());
        let z = DiscreteVector::combine(a, &x, b, &y);
        let (gx, gy, gz) = (disc.reconstruct_gradient(&x), disc.reconstruct_gradient(&y), disc.reconstruct_gradient(&z));
        for i in 0..gz[0].len() {
            let e = gz[0][i] - (gx[0][i].scale(a) + gy[0][i].scale(b));
            prop_assert!(e.norm() < 1e-12 * (1.0 + gz[0][i].norm()));
        }
        let f = |p: Vec2<f64>| p.x * p.x - p.y;
        let g = |p: Vec2<f64>| (p.x + p.y).sin();
        let pf = disc.interpolate_point(f).unwrap();
        let pg = disc.interpolate_point(g).unwrap();
        let pfg = disc.interpolate_point(|p| a * f(p) + b * g(p)).unwrap();
        let diff = pfg.sub(&DiscreteVector::combine(a, &pf, b, &pg)).max_abs();
        prop_assert!(diff < 1e-12 * (1.0 + pfg.max_abs()));
    }

    #[test]
    fn affine_interpolant_has_no_residual(cx in -5.0f64..5.0, cy in -5.0f64..5.0, seed in 0u64..200) {
        let mesh = random_star_polygon(seed);
        let disc = HmmDiscretisation::new(&mesh, 2.0);
        let v = disc.interpolate_point(|p| cx * p.x + cy * p.y - 1.0).unwrap();
        for r in disc.residual(0, &v) {
            prop_assert!(r.abs() < 1e-11 * (1.0 + cx.abs() + cy.abs()));
        }
    }
}
