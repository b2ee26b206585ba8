use faer::Mat;
use roomreg::cascade::{couple_cascade, ActuatorSensor, DiscretePlant};
use roomreg::sim::*;
use roomreg::sparse::TripletBuilder;
use roomreg::synthesis::{ControllerRealization, SignalSpec};

fn term(frequency: f64, cos: &[f64], sin: &[f64]) -> SignalTerm {
    SignalTerm {
        frequency,
        cos: cos.to_vec(),
        sin: sin.to_vec(),
    }
}

fn room_signals() -> ExogenousSignals {
    let ch = |terms: Vec<SignalTerm>| SignalChannel { terms };
    ExogenousSignals {
        reference: vec![
            ch(vec![term(0.0, &[-1.0], &[]), term(1.0, &[], &[1.0]), term(2.0, &[0.3], &[])]),
            ch(vec![term(0.5, &[0.5], &[])]),
            ch(vec![term(0.0, &[1.0], &[]), term(2.0, &[], &[0.5])]),
        ],
        disturbance: vec![ch(vec![term(0.5, &[], &[2.0])])],
    }
}

#[test]
fn reference_signals_evaluate_in_closed_form() {
    let s = room_signals();
    let (r, d) = evaluate_signals(&s, 0.0);
    assert!((r[0] + 0.7).abs() < 1e-15);
    assert_eq!(r[1], 0.5);
    assert_eq!(r[2], 1.0);
    assert_eq!(d[0], 0.0);
    let (_, d) = evaluate_signals(&s, std::f64::consts::PI);
    assert!((d[0] - 2.0).abs() < 1e-15);
    let t = 3.7;
    let (r, _) = evaluate_signals(&s, t);
    assert!((r[0] - (-1.0 + t.sin() + 0.3 * (2.0 * t).cos())).abs() < 1e-14);
}

#[test]
fn zero_signal_is_zero() {
    let s = ExogenousSignals {
        reference: vec![SignalChannel { terms: vec![term(1.0, &[0.0], &[0.0])] }],
        disturbance: vec![],
    };
    for t in [0.0, 1.0, 17.3] {
        assert_eq!(evaluate_signals(&s, t).0, vec![0.0]);
    }
}

#[test]
fn signals_must_match_the_internal_model() {
    let spec = SignalSpec::new(vec![0.0, 0.5, 1.0, 2.0]);
    assert!(room_signals().validate(&spec).is_ok());
    let mut bad = room_signals();
    bad.reference[0].terms.push(term(3.0, &[1.0], &[]));
    assert!(bad.validate(&spec).is_err());
    let mut ramp = room_signals();
    ramp.reference[0].terms.push(term(0.0, &[0.0, 1.0], &[]));
    assert!(ramp.validate(&spec).is_err());
}

#[test]
fn disturbance_scaling_leaves_reference_alone() {
    let s = room_signals().with_disturbance_scale(2.0);
    let (r, d) = evaluate_signals(&s, 1.0);
    assert_eq!(r, evaluate_signals(&room_signals(), 1.0).0);
    assert!((d[0] - 4.0 * 0.5f64.sin()).abs() < 1e-15);
}

fn scalar_loop(a: f64) -> ClosedLoopSystem {
    let one = |v: f64| {
        let mut b = TripletBuilder::new(1, 1);
        b.push(0, 0, v);
        b.build()
    };
    ClosedLoopSystem {
        e: one(1.0),
        a: one(a),
        b: TripletBuilder::new(1, 1).build(),
        c: one(1.0),
        d: Mat::from_fn(1, 1, |_, _| -1.0),
        control_map: TripletBuilder::new(0, 1).build(),
        boundary_map: TripletBuilder::new(0, 1).build(),
        n_cascade: 1,
        n_controller: 0,
        n_disturbances: 0,
    }
}

fn silent(p: usize) -> ExogenousSignals {
    ExogenousSignals {
        reference: vec![SignalChannel::default(); p],
        disturbance: vec![],
    }
}

#[test]
fn trapezoidal_scalar_decay_is_second_order_accurate() {
    let cl = scalar_loop(-1.0);
    let opts = IntegrationOptions {
        t_end: 10.0,
        dt: 1e-3,
        snapshots: vec![],
    };
    let traj = integrate(&cl, &silent(1), &[1.0], &opts).unwrap();
    assert_eq!(traj.t.len(), 10_001);
    assert_eq!(traj.method, "trapezoidal");
    let err = traj.t.iter().zip(&traj.y).map(|(t, y)| (y[0] - (-t).exp()).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
    assert!(traj.t.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn zero_state_and_signals_give_zero_trajectory() {
    let plant = DiscretePlant::from_dense(
        Mat::identity(2, 2),
        Mat::from_fn(2, 2, |i, j| [[0.1, 1.0], [-1.0, -0.3]][i][j]),
        Mat::from_fn(2, 1, |i, _| [0.0, 1.0][i]),
        Mat::from_fn(2, 1, |i, _| [1.0, 0.0][i]),
        Mat::from_fn(1, 2, |_, j| [1.0, 0.0][j]),
    );
    let cas = couple_cascade(&plant, &ActuatorSensor::first_order(1, 1)).unwrap();
    let ctrl = trivial_controller(1, 1, 2);
    let cl = assemble_closed_loop(&cas, &ctrl).unwrap();
    let sig = ExogenousSignals {
        reference: vec![SignalChannel::default()],
        disturbance: vec![SignalChannel::default()],
    };
    let opts = IntegrationOptions {
        t_end: 5.0,
        dt: 0.01,
        snapshots: vec![5.0],
    };
    let traj = integrate(&cl, &sig, &vec![0.0; cl.dim()], &opts).unwrap();
    assert!(traj.e.iter().chain(&traj.u).chain(&traj.u_b).all(|r| r.iter().all(|&v| v == 0.0)));
    assert_eq!(traj.snapshots.len(), 1);
    assert!(traj.snapshots[0].1.iter().all(|&v| v == 0.0));
}

fn trivial_controller(p: usize, m: usize, nz: usize) -> ControllerRealization {
    ControllerRealization {
        g1: Mat::from_fn(nz, nz, |i, j| if i == j { -1.0 } else { 0.0 }),
        g2: Mat::zeros(nz, p),
        k: Mat::zeros(m, nz),
        dim_zim: nz,
        order: 0,
        frequencies: vec![0.0],
        hankel: vec![],
        error_bound: 0.0,
    }
}

#[test]
fn trivial_controller_gives_block_diagonal_loop() {
    let plant = DiscretePlant::from_dense(
        Mat::identity(1, 1),
        Mat::from_fn(1, 1, |_, _| -2.0),
        Mat::from_fn(1, 1, |_, _| 1.0),
        Mat::zeros(1, 0),
        Mat::from_fn(1, 1, |_, _| 1.0),
    );
    let cas = couple_cascade(&plant, &ActuatorSensor::first_order(1, 1)).unwrap();
    let cl = assemble_closed_loop(&cas, &trivial_controller(1, 1, 2)).unwrap();
    let a = roomreg::sparse::to_dense(&cl.a);
    let n = cl.n_cascade;
    for i in 0..cl.dim() {
        for j in 0..cl.dim() {
            if (i < n) != (j < n) {
                assert_eq!(a[(i, j)], 0.0);
            }
        }
    }
    let eig = roomreg::linalg::eigenvalues(a.as_ref()).unwrap();
    assert!(eig.iter().all(|l| l.re < 0.0));
}

#[test]
fn output_ignores_controller_state() {
    let plant = DiscretePlant::from_dense(
        Mat::identity(1, 1),
        Mat::from_fn(1, 1, |_, _| -2.0),
        Mat::from_fn(1, 1, |_, _| 1.0),
        Mat::zeros(1, 0),
        Mat::from_fn(1, 1, |_, _| 1.0),
    );
    let cas = couple_cascade(&plant, &ActuatorSensor::first_order(1, 1)).unwrap();
    let cl = assemble_closed_loop(&cas, &trivial_controller(1, 1, 3)).unwrap();
    let mut x = vec![0.0; cl.dim()];
    for v in &mut x[cl.n_cascade..] {
        *v = 7.0;
    }
    assert_eq!(roomreg::sparse::spmv(&cl.c, &x), vec![0.0]);
}

#[test]
fn mismatched_controller_is_rejected() {
    let plant = DiscretePlant::from_dense(
        Mat::identity(1, 1),
        Mat::from_fn(1, 1, |_, _| -2.0),
        Mat::from_fn(1, 1, |_, _| 1.0),
        Mat::zeros(1, 0),
        Mat::from_fn(1, 1, |_, _| 1.0),
    );
    let cas = couple_cascade(&plant, &ActuatorSensor::first_order(1, 1)).unwrap();
    assert!(assemble_closed_loop(&cas, &trivial_controller(2, 1, 2)).is_err());
}

#[test]
fn algebraic_auxiliary_stays_consistent() {
    // ẋ = −x + p, 0 = x − p  ⇒  x stays constant and p tracks it exactly.
    let mut e = TripletBuilder::new(2, 2);
    e.push(0, 0, 1.0);
    let mut a = TripletBuilder::new(2, 2);
    a.push(0, 0, -1.0);
    a.push(0, 1, 1.0);
    a.push(1, 0, 1.0);
    a.push(1, 1, -1.0);
    let mut c = TripletBuilder::new(1, 2);
    c.push(0, 1, 1.0);
    let cl = ClosedLoopSystem {
        e: e.build(),
        a: a.build(),
        b: TripletBuilder::new(2, 1).build(),
        c: c.build(),
        d: Mat::from_fn(1, 1, |_, _| -1.0),
        control_map: TripletBuilder::new(0, 2).build(),
        boundary_map: TripletBuilder::new(0, 2).build(),
        n_cascade: 2,
        n_controller: 0,
        n_disturbances: 0,
    };
    let opts = IntegrationOptions {
        t_end: 1.0,
        dt: 0.1,
        snapshots: vec![],
    };
    // Inconsistent initial pressure is repaired after the first step.
    let traj = integrate(&cl, &silent(1), &[1.0, 5.0], &opts).unwrap();
    for y in &traj.y[1..] {
        assert!((y[0] - traj.y[1][0]).abs() < 1e-12);
    }
}

fn synthetic(e: impl Fn(f64) -> f64) -> ClosedLoopTrajectory {
    let t: Vec<f64> = (0..=100).map(|k| k as f64 * 0.01).collect();
    let errs: Vec<Vec<f64>> = t.iter().map(|&s| vec![e(s)]).collect();
    ClosedLoopTrajectory {
        y: errs.clone(),
        y_ref: vec![vec![0.0]; t.len()],
        u: vec![vec![]; t.len()],
        u_b: vec![vec![]; t.len()],
        e: errs,
        t,
        ..Default::default()
    }
}

#[test]
fn metrics_of_zero_error_vanish() {
    let m = error_metrics(&synthetic(|_| 0.0), [0.0, 1.0]).unwrap();
    assert_eq!(m.sup, vec![0.0]);
    assert_eq!(m.rms, vec![0.0]);
}

#[test]
fn sup_of_decaying_exponential_is_one() {
    let traj = synthetic(|t| (-t).exp());
    let m = error_metrics(&traj, [0.0, 1.0]).unwrap();
    assert_eq!(m.sup, vec![1.0]);
    let rate = error_decay_rate(&traj, [0.0, 1.0]).unwrap();
    assert!((rate + 1.0).abs() < 1e-12);
}

#[test]
fn empty_window_is_an_error() {
    assert!(error_metrics(&synthetic(|_| 1.0), [2.0, 3.0]).is_err());
}

#[test]
fn trajectory_csv_has_expected_columns() {
    let cl = scalar_loop(-1.0);
    let opts = IntegrationOptions {
        t_end: 0.02,
        dt: 0.01,
        snapshots: vec![],
    };
    let traj = integrate(&cl, &silent(1), &[1.0], &opts).unwrap();
    let csv = traj.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,y_1,y_ref_1,e_1");
    assert_eq!(lines.count(), 3);
}
