use std::sync::OnceLock;

use faer::{c64, Mat};
use roomreg::cascade::{couple_cascade, eliminate_pressure, ActuatorSensor, DiscretePlant, PressureTreatment};
use roomreg::linalg::SysMat;
use roomreg::pipeline::Pipeline;
use roomreg::scenario::RoomScenario;
use roomreg::Error;

struct Coarse {
    saddle: DiscretePlant,
    _dir: tempfile::TempDir,
}

/// Linearized room at h = 1/8, pressure retained.
fn coarse() -> &'static Coarse {
    static C: OnceLock<Coarse> = OnceLock::new();
    C.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let s = RoomScenario::paper_room().with_overrides(Some(8), None, None).unwrap();
        let p = Pipeline::new(s, dir.path()).unwrap();
        let st = p.steady_at(8).unwrap();
        Coarse {
            saddle: p.plant(&st).unwrap(),
            _dir: dir,
        }
    })
}

fn penalty(eps: f64) -> DiscretePlant {
    eliminate_pressure(&coarse().saddle, PressureTreatment::Penalty { epsilon: eps }).unwrap()
}

fn max_abs(m: &Mat<f64>) -> f64 {
    m.col_iter().flat_map(|c| c.iter().copied()).fold(0.0, |a, x| a.max(x.abs()))
}

fn rel_diff(a: &Mat<c64>, b: &Mat<c64>) -> f64 {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            num = num.max((a[(i, j)] - b[(i, j)]).norm());
            den = den.max(b[(i, j)].norm());
        }
    }
    num / den
}

fn cmul(a: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
    a * b
}

fn probe_points() -> Vec<c64> {
    (0..10).map(|k| c64::new(1.0, -3.0 + 0.75 * k as f64)).collect()
}

fn acts() -> ActuatorSensor {
    RoomScenario::paper_room().actuator_sensor().unwrap()
}

#[test]
fn cascade_has_the_expected_block_structure() {
    let plant = penalty(1e-5);
    let cas = couple_cascade(&plant, &acts()).unwrap();
    let l = cas.layout;
    assert_eq!(l.plant, plant.n_states);
    assert_eq!(l.plant_aux, plant.n_aux);
    assert_eq!((l.actuator, l.sensor), (3, 3));
    assert_eq!(cas.dim(), plant.dim() + 6);
    assert_eq!((cas.inputs(), cas.outputs()), (3, 3));

    let (oa, os) = (l.actuator_offset(), l.sensor_offset());
    let aa = cas.block((oa, 3), (oa, 3));
    assert_eq!(aa, acts().a_a);
    assert_eq!(max_abs(&cas.block((oa, 3), (0, l.plant_len()))), 0.0);
    assert_eq!(max_abs(&cas.block((os, 3), (oa, 3))), 0.0);
    // B enters through the actuator only, C reads the sensor only.
    for i in 0..cas.dim() {
        for j in 0..3 {
            if !(oa..oa + 3).contains(&i) {
                assert_eq!(cas.b[(i, j)], 0.0);
            }
            if !(os..os + 3).contains(&i) {
                assert_eq!(cas.c[(j, i)], 0.0);
            }
        }
    }
    assert_eq!(max_abs(&cas.dd), 0.0);
    // With A_a = A_s = −I and B_a = C_a = B_s = C_s = I the coupling blocks
    // are the plant's own input and output maps.
    let np = l.plant_len();
    assert_eq!(cas.block((0, np), (oa, 3)), plant.b);
    let SysMat::Sparse(a) = &cas.a else { panic!() };
    let mut c_block = Mat::<f64>::zeros(3, np);
    for t in a.triplet_iter() {
        if (os..os + 3).contains(&t.row) && t.col < np {
            c_block[(t.row - os, t.col)] += *t.val;
        }
    }
    assert_eq!(c_block, plant.c);
    assert_eq!(cas.boundary_map.as_ref().submatrix(0, oa, 3, 3).to_owned(), acts().c_a);
}

#[test]
fn cascade_transfer_factorizes() {
    let plant = penalty(1e-5);
    let a = acts();
    let cas = couple_cascade(&plant, &a).unwrap();
    for s in probe_points() {
        let p = cas.transfer(s).unwrap();
        let f = cmul(&cmul(&a.sensor_transfer(s).unwrap(), &plant.transfer(s).unwrap()), &a.actuator_transfer(s).unwrap());
        let r = rel_diff(&p, &f);
        assert!(r <= 1e-8, "s = {s:?}: {r:e}");
    }
}

#[test]
fn nullspace_model_matches_saddle_transfer() {
    let saddle = &coarse().saddle;
    let ns = eliminate_pressure(saddle, PressureTreatment::Nullspace).unwrap();
    assert_eq!(ns.n_aux, 0);
    let SysMat::Dense(e) = &ns.e else { panic!("projected mass should be dense") };
    let n = e.nrows();
    assert!(max_abs(&(e - Mat::<f64>::identity(n, n))) < 1e-12);
    for s in [c64::new(1.0, 0.0), c64::new(0.5, 2.0), c64::new(2.0, -1.0)] {
        let r = rel_diff(&ns.transfer(s).unwrap(), &saddle.transfer(s).unwrap());
        assert!(r < 1e-8, "{r:e}");
    }
}

#[test]
fn penalty_transfer_approaches_saddle() {
    let saddle = &coarse().saddle;
    let s = c64::new(1.0, 0.5);
    let exact = saddle.transfer(s).unwrap();
    let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&eps| rel_diff(&penalty(eps).transfer(s).unwrap(), &exact))
        .collect();
    assert!(errs[1] < 0.2 * errs[0] && errs[2] < 0.2 * errs[1], "{errs:?}");
}

#[test]
fn penalty_pressure_is_consistent() {
    let plant = penalty(1e-5);
    let sp = coarse().saddle.fem_mass.nrows();
    let x: Vec<f64> = (0..sp).map(|i| ((i * 37 % 101) as f64 / 50.0 - 1.0) * 0.1).collect();
    let full = plant.state_from_fields(&x).unwrap();
    assert_eq!(full.len(), plant.dim());
    let SysMat::Sparse(a) = &plant.a else { panic!() };
    let ax = roomreg::sparse::spmv(a, &full);
    let scale = ax[..plant.n_states].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let alg = ax[plant.n_states..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(alg <= 1e-8 * scale.max(1.0), "{alg:e}");
    assert_eq!(plant.fields_from_state(&full), x);
}

#[test]
fn nullspace_round_trip_on_solenoidal_fields() {
    let saddle = &coarse().saddle;
    let ns = eliminate_pressure(saddle, PressureTreatment::Nullspace).unwrap();
    let xi: Vec<f64> = (0..ns.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
    let fields = ns.fields_from_state(&xi);
    let back = ns.state_from_fields(&fields).unwrap();
    let err = xi.iter().zip(&back).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err < 1e-9, "{err:e}");
}

#[test]
fn pressure_cannot_be_eliminated_twice() {
    let p = penalty(1e-3);
    assert!(matches!(eliminate_pressure(&p, PressureTreatment::Nullspace), Err(Error::Invariant(_))));
    assert!(eliminate_pressure(&coarse().saddle, PressureTreatment::Penalty { epsilon: 0.0 }).is_err());
}

#[test]
fn empty_actuator_block_is_rejected() {
    let plant = DiscretePlant::from_dense(
        Mat::identity(2, 2),
        -Mat::<f64>::identity(2, 2),
        Mat::identity(2, 2),
        Mat::zeros(2, 0),
        Mat::identity(2, 2),
    );
    let mut a = ActuatorSensor::first_order(2, 2);
    a.a_a = Mat::zeros(0, 0);
    a.b_a = Mat::zeros(0, 2);
    a.c_a = Mat::zeros(2, 0);
    assert!(matches!(couple_cascade(&plant, &a), Err(Error::Invariant(_))));
    let mut b = ActuatorSensor::first_order(3, 2);
    b.c_a = Mat::identity(3, 3);
    assert!(matches!(couple_cascade(&plant, &b), Err(Error::Dimension { .. })));
}

#[test]
fn dense_and_sparse_coupling_agree() {
    let plant = DiscretePlant::from_dense(
        Mat::identity(2, 2),
        Mat::from_fn(2, 2, |i, j| [[0.1, 1.0], [-1.0, 0.1]][i][j]),
        Mat::from_fn(2, 1, |i, _| [0.0, 1.0][i]),
        Mat::zeros(2, 0),
        Mat::from_fn(1, 2, |_, j| [1.0, 0.0][j]),
    );
    let cas = couple_cascade(&plant, &ActuatorSensor::first_order(1, 1)).unwrap();
    assert_eq!(cas.dim(), 4);
    let s = c64::new(1.0, 1.0);
    // (1/(s+1))² · C(sI − A)⁻¹B
    let pb = plant.transfer(s).unwrap()[(0, 0)];
    let expect = pb / ((s + 1.0) * (s + 1.0));
    assert!((cas.transfer(s).unwrap()[(0, 0)] - expect).norm() < 1e-14);
}

#[test]
fn export_writes_manifest() {
    let plant = penalty(1e-5);
    let cas = couple_cascade(&plant, &acts()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    cas.export(dir.path()).unwrap();
    let man = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(man.starts_with(&format!("dim {}\n", cas.dim())));
    assert!(man.contains("inputs 3\noutputs 3\ndisturbances 1\n"));
    assert!(man.contains(&format!("actuator {} 3", cas.layout.actuator_offset())));
    for f in ["E.mtx", "A.mtx", "B.mtx", "C.mtx", "Bd.mtx"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn penalty_and_nullspace_spectra_agree() {
    use roomreg::analysis::{unstable_spectrum, EigenOptions};
    let opts = EigenOptions::default();
    let pen = penalty(1e-5);
    let ns = eliminate_pressure(&coarse().saddle, PressureTreatment::Nullspace).unwrap();
    let a = unstable_spectrum(&pen.e, &pen.a, 0.5, &opts).unwrap();
    let b = unstable_spectrum(&ns.e, &ns.a, 0.5, &opts).unwrap();
    assert_eq!(a.eigenvalues.len(), b.eigenvalues.len(), "{:?} vs {:?}", a.eigenvalues, b.eigenvalues);
    assert!(a.residuals.iter().all(|&r| r < 1e-8));
    for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
        assert!((x - y).norm() < 1e-3 * (1.0 + y.norm()), "{x:?} vs {y:?}");
    }
}

#[test]
fn solenoidal_velocity_sees_no_penalty_pressure() {
    let ns = eliminate_pressure(&coarse().saddle, PressureTreatment::Nullspace).unwrap();
    let xi: Vec<f64> = (0..ns.dim()).map(|i| (i as f64 * 0.11).cos()).collect();
    let fields = ns.fields_from_state(&xi);
    for eps in [1e-2, 1e-5, 1e-8] {
        let plant = penalty(eps);
        let x = plant.state_from_fields(&fields).unwrap();
        // p = −(1/ε) M_p⁻¹ D v, so ε p is the divergence left after round-off.
        let p = x[plant.n_states..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(eps * p < 1e-11, "ε = {eps}: {:e}", eps * p);
    }
}

/// Leading eigenvalues, sorted by real part, of a dense pencil.
fn leading(plant: &DiscretePlant, k: usize) -> Vec<c64> {
    use roomreg::analysis::{unstable_spectrum, EigenOptions};
    let r = unstable_spectrum(&plant.e, &plant.a, 5.0, &EigenOptions::default()).unwrap();
    r.eigenvalues.into_iter().take(k).collect()
}

#[test]
fn nullspace_and_penalty_leading_eigenvalues_agree() {
    let ns = eliminate_pressure(&coarse().saddle, PressureTreatment::Nullspace).unwrap();
    let a = leading(&ns, 10);
    let b = leading(&penalty(1e-5), 10);
    assert_eq!(a.len(), 10);
    for (x, y) in a.iter().zip(&b) {
        let rel = (x - y).norm() / x.norm();
        assert!(rel < 1e-3, "{x:?} vs {y:?}: {rel:e}");
    }
}

#[test]
fn penalty_eigenvalues_converge_monotonically() {
    let l: Vec<Vec<c64>> = [1e-3, 1e-4, 1e-5].iter().map(|&e| leading(&penalty(e), 6)).collect();
    for k in 0..6 {
        let d1 = (l[0][k] - l[1][k]).norm();
        let d2 = (l[1][k] - l[2][k]).norm();
        assert!(d2 < d1, "eigenvalue {k}: {d1:e} then {d2:e}");
    }
}

#[test]
fn penalty_stokes_flow_stays_nearly_solenoidal() {
    use roomreg::cascade::linearize;
    use roomreg::fem::{assemble_forms, FemSpaces};
    use roomreg::linalg::SparseLu;
    use roomreg::mesh::build_mesh;
    use roomreg::sim::{integrate, ClosedLoopSystem, ExogenousSignals, IntegrationOptions, SignalChannel, SignalTerm};
    use roomreg::sparse::{spmv, TripletBuilder};
    use roomreg::steady::SteadyState;

    // Zero steady state: Stokes + diffusion + buoyancy, driven by a constant
    // inlet disturbance that is not divergence free on its own.
    let s = RoomScenario::paper_room();
    let spaces = FemSpaces::new(&build_mesh(&s.room(), 16).unwrap());
    let saddle = linearize(&spaces, &s.physics, &SteadyState::zero(&spaces), &[], &s.disturbances, &[]).unwrap();
    let plant = eliminate_pressure(&saddle, PressureTreatment::Penalty { epsilon: 1e-5 }).unwrap();
    let n = plant.dim();
    let (SysMat::Sparse(e), SysMat::Sparse(a)) = (&plant.e, &plant.a) else { panic!() };
    let mut b = TripletBuilder::new(n, 2);
    b.add_dense(plant.bd.as_ref(), 0, 0, 1.0);
    let cl = ClosedLoopSystem {
        e: e.clone(),
        a: a.clone(),
        b: b.build(),
        c: TripletBuilder::new(1, n).build(),
        d: Mat::from_fn(1, 2, |_, j| if j == 1 { -1.0 } else { 0.0 }),
        control_map: TripletBuilder::new(0, n).build(),
        boundary_map: TripletBuilder::new(0, n).build(),
        n_cascade: n,
        n_controller: 0,
        n_disturbances: 1,
    };
    let signals = ExogenousSignals {
        reference: vec![SignalChannel::default()],
        disturbance: vec![SignalChannel {
            terms: vec![SignalTerm {
                frequency: 0.0,
                cos: vec![1.0],
                sin: vec![],
            }],
        }],
    };
    let opts = IntegrationOptions {
        t_end: 2.0,
        dt: 0.01,
        snapshots: vec![0.5, 1.0, 2.0],
    };
    let traj = integrate(&cl, &signals, &vec![0.0; n], &opts).unwrap();
    let forms = assemble_forms(&spaces, &s.physics, None).unwrap();
    let mp = SparseLu::factor(&forms.m_p).unwrap();
    let nv = spaces.n_v();
    for (t, x) in &traj.snapshots {
        let dv = spmv(&forms.div, &x[..nv]);
        let l2 = dv.iter().zip(mp.solve(&dv).unwrap()).map(|(a, b)| a * b).sum::<f64>().sqrt();
        let speed = roomreg::sparse::quad_form(&forms.m_v, &x[..nv], &x[..nv]).sqrt();
        assert!(speed > 1e-3, "t = {t}: flow should be non-trivial");
        assert!(l2 < 1e-3, "t = {t}: ‖Dv‖ = {l2:e}");
    }
}
