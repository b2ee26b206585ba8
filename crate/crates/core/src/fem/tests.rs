use super::*;
use crate::mesh::{build_mesh, RoomGeometry};
use crate::sparse::{quad_form, to_dense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn room(n: usize) -> Mesh {
    build_mesh(&RoomGeometry::reference_room(), n).unwrap()
}

fn expr(s: &str) -> ScalarExpr {
    ScalarExpr::parse(s).unwrap()
}

fn min_sym_eig(a: &SpMat) -> f64 {
    let d = to_dense(a);
    let sym = faer::Mat::from_fn(d.nrows(), d.ncols(), |i, j| 0.5 * (d[(i, j)] + d[(j, i)]));
    let ev = sym.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
    ev.iter().cloned().fold(f64::INFINITY, f64::min)
}

#[test]
fn reference_p1_mass() {
    let m = p1_element_mass([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    for i in 0..3 {
        for j in 0..3 {
            let expected = if i == j { 2.0 } else { 1.0 } / 24.0;
            assert!((m[i][j] - expected).abs() < 1e-15);
        }
    }
}

#[test]
fn dof_counts_match_boundary_conventions() {
    let s = FemSpaces::new(&room(16));
    assert_eq!((s.n_v(), s.n_theta(), s.n_p()), (1958, 986, 289));
    assert_eq!(s.n_b(), 2944);
}

#[test]
fn constant_temperature_sees_only_the_inlet_robin_term() {
    let s = FemSpaces::unconstrained(&room(8));
    let f = assemble_forms(&s, &PhysicalParams::reference(), None).unwrap();
    let one = vec![1.0; s.n_theta()];
    assert!((quad_form(&f.a_theta, &one, &one) - 0.25).abs() < 1e-13);
    assert!((quad_form(&f.m_theta, &one, &one) - 1.0).abs() < 1e-13);
}

#[test]
fn zero_linearization_point_has_no_transport() {
    let s = FemSpaces::new(&room(8));
    let p = PhysicalParams::reference();
    let f0 = assemble_forms(&s, &p, None).unwrap();
    let z = (vec![0.0; s.n_v()], vec![0.0; s.n_theta()]);
    let fz = assemble_forms(&s, &p, Some((&z.0, &z.1))).unwrap();
    for m in [&fz.n_v, &fz.n_tt, &fz.n_tv] {
        assert_eq!(crate::sparse::max_abs(m), 0.0);
    }
    let w = s.interpolate_velocity(|x, y| [x * y, 1.0 - x]);
    let t = s.interpolate_temperature(|x, _| x);
    let f1 = assemble_forms(&s, &p, Some((&w, &t))).unwrap();
    assert_eq!(to_dense(&f0.a_v), to_dense(&f1.a_v));
    assert_eq!(to_dense(&f0.a_theta), to_dense(&f1.a_theta));
    assert!(crate::sparse::max_abs(&f1.n_v) > 0.0);
}

#[test]
fn dimension_mismatch_is_reported() {
    let s = FemSpaces::new(&room(8));
    let w = vec![0.0; 3];
    let t = vec![0.0; s.n_theta()];
    let err = assemble_forms(&s, &PhysicalParams::reference(), Some((&w, &t))).unwrap_err();
    assert!(matches!(err, Error::Dimension { .. }));
}

#[test]
fn buoyancy_reaches_vertical_momentum_only() {
    let s = FemSpaces::new(&room(8));
    let f = assemble_forms(&s, &PhysicalParams::reference(), None).unwrap();
    let half = s.velocity.ndofs();
    assert!(f.b0.triplet_iter().all(|t| t.row >= half));
    assert!(f.b0.compute_nnz() > 0);
}

#[test]
fn viscous_and_diffusion_forms_are_coercive() {
    let s = FemSpaces::new(&room(8));
    let f = assemble_forms(&s, &PhysicalParams::reference(), None).unwrap();
    assert!(min_sym_eig(&f.a_v) > 0.0);
    assert!(min_sym_eig(&f.a_theta) > 0.0);
    assert!(min_sym_eig(&f.m_v) > 0.0);
}

#[test]
fn transport_by_solenoidal_field_is_skew() {
    // w = (x² + y, −2xy − 1) is exactly divergence free and quadratic.
    let s = FemSpaces::unconstrained(&room(8));
    let w = s.interpolate_velocity(|x, y| [x * x + y, -2.0 * x * y - 1.0]);
    let t0 = vec![0.0; s.n_theta()];
    let f = assemble_forms(&s, &PhysicalParams::reference(), Some((&w, &t0))).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let boundary: Vec<bool> = s
        .node_coords
        .iter()
        .map(|p| p[0] < 1e-12 || p[1] < 1e-12 || p[0] > 1.0 - 1e-12 || p[1] > 1.0 - 1e-12)
        .collect();
    for _ in 0..5 {
        let theta: Vec<f64> = s
            .temperature
            .free_nodes
            .iter()
            .map(|&n| if boundary[n] { 0.0 } else { rng.gen_range(-1.0..1.0) })
            .collect();
        assert!(quad_form(&f.n_tt, &theta, &theta).abs() < 1e-10);
    }
}

#[test]
fn dirichlet_integral_converges() {
    let params = PhysicalParams {
        reynolds: 1.0,
        prandtl: 1.0,
        alpha_theta: 0.0,
        ..PhysicalParams::reference()
    };
    let exact = std::f64::consts::PI.powi(2) / 2.0;
    let errs: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| {
            let s = FemSpaces::new(&room(n));
            let f = assemble_forms(&s, &params, None).unwrap();
            let pi = std::f64::consts::PI;
            let t = s.interpolate_temperature(|x, y| (pi * x).sin() * (pi * y).sin());
            (quad_form(&f.a_theta, &t, &t) - exact).abs()
        })
        .collect();
    assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
}

#[test]
fn constant_heater_shape_integrates_to_strip_length() {
    let s = FemSpaces::unconstrained(&room(16));
    let shapes = [InputShape {
        region: "heater".into(),
        field: Field::Theta,
        shape: ScalarExpr::constant(1.0),
    }];
    let b = assemble_boundary_inputs(&s, &shapes).unwrap();
    let sum: f64 = (s.n_v()..s.n_b()).map(|i| b[(i, 0)]).sum();
    assert!((sum - 0.25).abs() < 1e-14);
}

#[test]
fn zero_shape_gives_zero_column() {
    let s = FemSpaces::new(&room(8));
    let shapes = [InputShape {
        region: "inlet".into(),
        field: Field::V1,
        shape: ScalarExpr::constant(0.0),
    }];
    let b = assemble_boundary_inputs(&s, &shapes).unwrap();
    assert!((0..s.n_b()).all(|i| b[(i, 0)] == 0.0));
}

#[test]
fn heater_bump_is_supported_on_heater_dofs() {
    let s = FemSpaces::new(&room(16));
    let shapes = [InputShape {
        region: "heater".into(),
        field: Field::Theta,
        shape: expr("exp(-0.00001/((3/8-x)*(5/8-x))^2)"),
    }];
    let b = assemble_boundary_inputs(&s, &shapes).unwrap();
    let mut allowed = vec![false; s.n_b()];
    for e in s.mesh.edges_with_tag(BoundaryTag::Heater) {
        for n in s.edge_nodes[e] {
            if let Some(i) = s.state_dof(Field::Theta, n) {
                allowed[i] = true;
            }
        }
    }
    let mut nonzero = 0;
    for i in 0..s.n_b() {
        if b[(i, 0)] != 0.0 {
            assert!(allowed[i]);
            nonzero += 1;
        }
    }
    assert!(nonzero > 0);
}

#[test]
fn velocity_input_on_heater_is_rejected() {
    let s = FemSpaces::new(&room(8));
    let shapes = [InputShape {
        region: "heater".into(),
        field: Field::V1,
        shape: ScalarExpr::constant(1.0),
    }];
    assert!(matches!(
        assemble_boundary_inputs(&s, &shapes),
        Err(Error::ShapeSupport { .. })
    ));
}

#[test]
fn edge_rule_resolves_bump_shapes() {
    let s = FemSpaces::new(&room(16));
    let shapes: Vec<InputShape> = [
        ("inlet", Field::V1, "exp(-0.00004/((5/8-y)*(7/8-y))^2)"),
        ("inlet", Field::Theta, "exp(-0.00002/((5/8-y)*(7/8-y))^2)"),
        ("heater", Field::Theta, "exp(-0.00001/((3/8-x)*(5/8-x))^2)"),
        ("inlet", Field::V2, "exp(-0.0003/((5/8-y)*(7/8-y))^2)"),
    ]
    .into_iter()
    .map(|(r, f, e)| InputShape {
        region: r.into(),
        field: f,
        shape: expr(e),
    })
    .collect();
    let b3 = assemble_boundary_inputs_with_rule(&s, &shapes, &LineRule::gauss3()).unwrap();
    let b = assemble_boundary_inputs(&s, &shapes).unwrap();
    let fine = assemble_boundary_inputs_with_rule(&s, &shapes, &LineRule::gauss5().composite(64)).unwrap();
    for j in 0..shapes.len() {
        let col_norm = (0..s.n_b()).map(|i| fine[(i, j)].powi(2)).sum::<f64>().sqrt();
        let rel = |m: &Mat<f64>| {
            (0..s.n_b()).map(|i| (m[(i, j)] - fine[(i, j)]).powi(2)).sum::<f64>().sqrt() / col_norm
        };
        assert!(rel(&b) < 1e-5, "shape {j}: {}", rel(&b));
        assert!(rel(&b3) < 5e-2);
    }
}

fn obs(region: &str, field: Field) -> ObservationSpec {
    ObservationSpec {
        region: region.into(),
        field,
        weight: None,
    }
}

#[test]
fn observations_average_constants() {
    let s = FemSpaces::new(&room(16));
    let c = assemble_observations(&s, &[obs("omega_theta", Field::Theta), obs("omega_v", Field::V1)]).unwrap();
    let mut x = vec![0.0; s.n_b()];
    x[..s.n_v()].copy_from_slice(&s.interpolate_velocity(|_, _| [1.0, 0.0]));
    x[s.n_v()..].copy_from_slice(&s.interpolate_temperature(|_, _| 2.5));
    let y: Vec<f64> = (0..2).map(|r| (0..s.n_b()).map(|i| c[(r, i)] * x[i]).sum()).collect();
    assert!((y[0] - 2.5).abs() < 1e-13);
    assert!((y[1] - 1.0).abs() < 1e-13);
}

#[test]
fn outlet_average_of_height() {
    let s = FemSpaces::unconstrained(&room(16));
    let c = assemble_observations(&s, &[obs("outlet", Field::Theta)]).unwrap();
    let t = s.interpolate_temperature(|_, y| y);
    let y: f64 = (0..s.n_theta()).map(|i| c[(0, s.n_v() + i)] * t[i]).sum();
    assert!((y - 5.0 / 16.0).abs() < 1e-14);
}

#[test]
fn observation_rows_are_bounded_functionals() {
    let s = FemSpaces::new(&room(8));
    let f = assemble_forms(&s, &PhysicalParams::reference(), None).unwrap();
    let c = assemble_observations(
        &s,
        &[obs("omega_theta", Field::Theta), obs("outlet", Field::Theta), obs("omega_v", Field::V1)],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let x: Vec<f64> = (0..s.n_b()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (v, t) = x.split_at(s.n_v());
        let h1 = quad_form(&f.m_v, v, v)
            + quad_form(&f.m_theta, t, t)
            + 100.0 * quad_form(&f.a_v, v, v)
            + 70.0 * quad_form(&f.a_theta, t, t);
        for r in 0..3 {
            let y: f64 = (0..s.n_b()).map(|i| c[(r, i)] * x[i]).sum();
            worst = worst.max(y.abs() / h1.sqrt());
        }
    }
    // Trace constant on the outlet plus region-measure normalization.
    assert!(worst.is_finite() && worst < 20.0, "{worst}");
}

#[test]
fn empty_observation_region_is_an_error() {
    let mut g = RoomGeometry::reference_room();
    g.regions.push((
        "sliver".into(),
        Region::Domain {
            rect: crate::mesh::Rect::new(0.5, 0.5, 0.25, 0.5),
        },
    ));
    let s = FemSpaces::new(&build_mesh(&g, 8).unwrap());
    assert!(matches!(
        assemble_observations(&s, &[obs("sliver", Field::Theta)]),
        Err(Error::EmptyRegion(_))
    ));
}
