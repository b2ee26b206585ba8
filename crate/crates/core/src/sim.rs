//! Reference and disturbance signals, the closed loop of cascade and
//! controller, and its trapezoidal time integration.
//!
//! The closed-loop state is `x_e = (x, z)` and the exogenous input is
//! `w = (u_d, y_ref)`:
//!
//! ```text
//! E_e ẋ_e = [[A, B K], [𝒢₂ C, 𝒢₁]] x_e + [[B_d, 0], [𝒢₂ D_d, −𝒢₂]] w
//! e       = [C, 0] x_e + [D_d, −I] w
//! ```

use std::fmt::Write as _;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::cascade::CascadeSystem;
use crate::error::{Error, Result};
use crate::linalg::SparseLu;
use crate::sparse::{spmv_acc, SpMat, TripletBuilder};
use crate::synthesis::{ControllerRealization, SignalSpec};

/// `cos` and `sin` polynomial coefficients (ascending powers of `t`) at one
/// frequency. At frequency zero only `cos` matters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalTerm {
    pub frequency: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cos: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sin: Vec<f64>,
}

impl SignalTerm {
    fn eval(&self, t: f64) -> f64 {
        let poly = |c: &[f64]| c.iter().rev().fold(0.0, |acc, &a| acc * t + a);
        let wt = self.frequency * t;
        poly(&self.cos) * wt.cos() + poly(&self.sin) * wt.sin()
    }
}

/// One scalar signal as a sum of terms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalChannel {
    pub terms: Vec<SignalTerm>,
}

impl SignalChannel {
    pub fn eval(&self, t: f64) -> f64 {
        self.terms.iter().map(|term| term.eval(t)).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExogenousSignals {
    pub reference: Vec<SignalChannel>,
    #[serde(default)]
    pub disturbance: Vec<SignalChannel>,
}

impl ExogenousSignals {
    /// Every term must sit on a modeled frequency with a polynomial degree
    /// the internal model can reproduce.
    pub fn validate(&self, spec: &SignalSpec) -> Result<()> {
        let channels = self.reference.iter().map(|c| ("reference", c)).chain(self.disturbance.iter().map(|c| ("disturbance", c)));
        for (i, (kind, ch)) in channels.enumerate() {
            for term in &ch.terms {
                let k = spec
                    .frequencies
                    .iter()
                    .position(|&w| (w - term.frequency).abs() <= 1e-12 * w.abs().max(1.0))
                    .ok_or_else(|| {
                        Error::Invariant(format!(
                            "{kind} signal {i} uses frequency {} outside the internal model {:?}",
                            term.frequency, spec.frequencies
                        ))
                    })?;
                let order = spec.order(k);
                if term.cos.len() > order || term.sin.len() > order {
                    return Err(Error::Invariant(format!(
                        "{kind} signal {i}: polynomial degree at ω = {} exceeds {}",
                        term.frequency,
                        order - 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Same signals with every disturbance coefficient multiplied by `factor`.
    pub fn with_disturbance_scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for term in out.disturbance.iter_mut().flat_map(|c| c.terms.iter_mut()) {
            term.cos.iter_mut().chain(term.sin.iter_mut()).for_each(|c| *c *= factor);
        }
        out
    }
}

/// `(y_ref(t), u_d(t))`
pub fn evaluate_signals(signals: &ExogenousSignals, t: f64) -> (Vec<f64>, Vec<f64>) {
    (
        signals.reference.iter().map(|c| c.eval(t)).collect(),
        signals.disturbance.iter().map(|c| c.eval(t)).collect(),
    )
}

#[derive(Clone, Debug)]
pub struct ClosedLoopSystem {
    pub e: SpMat,
    pub a: SpMat,
    /// Columns ordered `(u_d, y_ref)`.
    pub b: SpMat,
    pub c: SpMat,
    pub d: Mat<f64>,
    /// Control `u = K z` and boundary input `u_b = C_a x_a` as state maps.
    pub control_map: SpMat,
    pub boundary_map: SpMat,
    pub n_cascade: usize,
    pub n_controller: usize,
    pub n_disturbances: usize,
}

impl ClosedLoopSystem {
    pub fn dim(&self) -> usize {
        self.n_cascade + self.n_controller
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
}

pub fn assemble_closed_loop(sys: &CascadeSystem, ctrl: &ControllerRealization) -> Result<ClosedLoopSystem> {
    let (n, nz) = (sys.dim(), ctrl.dim());
    let (m, p, md) = (sys.inputs(), sys.outputs(), sys.bd.ncols());
    if ctrl.inputs() != p {
        return Err(Error::dim("controller inputs vs cascade outputs", p, ctrl.inputs()));
    }
    if ctrl.outputs() != m {
        return Err(Error::dim("controller outputs vs cascade inputs", m, ctrl.outputs()));
    }
    let ne = n + nz;
    let bk = &sys.b * &ctrl.k;
    let g2c = &ctrl.g2 * &sys.c;

    let mut e = TripletBuilder::new(ne, ne);
    e.add_sparse(&sys.e.to_sparse(), 0, 0, 1.0);
    for i in n..ne {
        e.push(i, i, 1.0);
    }
    let mut a = TripletBuilder::new(ne, ne);
    a.add_sparse(&sys.a.to_sparse(), 0, 0, 1.0);
    a.add_dense(bk.as_ref(), 0, n, 1.0);
    a.add_dense(g2c.as_ref(), n, 0, 1.0);
    a.add_dense(ctrl.g1.as_ref(), n, n, 1.0);

    let mut b = TripletBuilder::new(ne, md + p);
    b.add_dense(sys.bd.as_ref(), 0, 0, 1.0);
    b.add_dense((&ctrl.g2 * &sys.dd).as_ref(), n, 0, 1.0);
    b.add_dense(ctrl.g2.as_ref(), n, md, -1.0);

    let mut c = TripletBuilder::new(p, ne);
    c.add_dense(sys.c.as_ref(), 0, 0, 1.0);
    let mut d = Mat::zeros(p, md + p);
    d.as_mut().submatrix_mut(0, 0, p, md).copy_from(&sys.dd);
    for i in 0..p {
        d[(i, md + i)] = -1.0;
    }
    let mut control_map = TripletBuilder::new(m, ne);
    control_map.add_dense(ctrl.k.as_ref(), 0, n, 1.0);
    let mut boundary_map = TripletBuilder::new(sys.boundary_map.nrows(), ne);
    boundary_map.add_dense(sys.boundary_map.as_ref(), 0, 0, 1.0);

    Ok(ClosedLoopSystem {
        e: e.build(),
        a: a.build(),
        b: b.build(),
        c: c.build(),
        d,
        control_map: control_map.build(),
        boundary_map: boundary_map.build(),
        n_cascade: n,
        n_controller: nz,
        n_disturbances: md,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Times at which the full state is kept (nearest grid point).
    #[serde(default)]
    pub snapshots: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct ClosedLoopTrajectory {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub y_ref: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub u_b: Vec<Vec<f64>>,
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub method: String,
    pub dt: f64,
}

impl ClosedLoopTrajectory {
    pub fn outputs(&self) -> usize {
        self.y.first().map_or(0, Vec::len)
    }

    /// Columns `t, y_i, y_ref_i, e_i, u_j, u_b_j`.
    pub fn to_csv(&self) -> String {
        let (p, m, mb) = (
            self.outputs(),
            self.u.first().map_or(0, Vec::len),
            self.u_b.first().map_or(0, Vec::len),
        );
        let mut header = vec!["t".to_string()];
        for (name, k) in [("y", p), ("y_ref", p), ("e", p), ("u", m), ("u_b", mb)] {
            header.extend((1..=k).map(|i| format!("{name}_{i}")));
        }
        let mut out = header.join(",");
        out.push('\n');
        for k in 0..self.t.len() {
            let _ = write!(out, "{:.6e}", self.t[k]);
            for row in [&self.y[k], &self.y_ref[k], &self.e[k], &self.u[k], &self.u_b[k]] {
                for v in row {
                    let _ = write!(out, ",{v:.10e}");
                }
            }
            out.push('\n');
        }
        out
    }

    /// Largest `|y_ref,i|` over the whole grid, per channel.
    pub fn reference_sup(&self) -> Vec<f64> {
        (0..self.outputs())
            .map(|i| self.y_ref.iter().map(|r| r[i].abs()).fold(0.0, f64::max))
            .collect()
    }
}

fn write_outputs(cl: &ClosedLoopSystem, x: &[f64], w: &[f64], traj: &mut ClosedLoopTrajectory, t: f64, y_ref: &[f64]) {
    let p = cl.outputs();
    let mut e = vec![0.0; p];
    spmv_acc(&cl.c, x, 1.0, &mut e);
    for (i, ei) in e.iter_mut().enumerate() {
        for (j, wj) in w.iter().enumerate() {
            *ei += cl.d[(i, j)] * wj;
        }
    }
    let y: Vec<f64> = e.iter().zip(y_ref).map(|(ei, r)| ei + r).collect();
    let mut u = vec![0.0; cl.control_map.nrows()];
    spmv_acc(&cl.control_map, x, 1.0, &mut u);
    let mut ub = vec![0.0; cl.boundary_map.nrows()];
    spmv_acc(&cl.boundary_map, x, 1.0, &mut ub);
    traj.t.push(t);
    traj.y.push(y);
    traj.y_ref.push(y_ref.to_vec());
    traj.e.push(e);
    traj.u.push(u);
    traj.u_b.push(ub);
}

/// Rows of `E` without entries belong to algebraic equations.
fn algebraic_rows(e: &SpMat) -> Vec<bool> {
    let mut has = vec![false; e.nrows()];
    for t in e.triplet_iter() {
        if *t.val != 0.0 {
            has[t.row] = true;
        }
    }
    has.into_iter().map(|h| !h).collect()
}

/// Trapezoidal rule on the differential rows; algebraic rows are enforced
/// at the new time level so auxiliary variables never ring. One sparse LU
/// serves every step.
pub fn integrate(
    cl: &ClosedLoopSystem,
    signals: &ExogenousSignals,
    x0: &[f64],
    opts: &IntegrationOptions,
) -> Result<ClosedLoopTrajectory> {
    let ne = cl.dim();
    if x0.len() != ne {
        return Err(Error::dim("initial closed-loop state", ne, x0.len()));
    }
    if !(opts.dt > 0.0) || !(opts.t_end >= 0.0) {
        return Err(Error::Invariant(format!("time step {} and horizon {} must be positive", opts.dt, opts.t_end)));
    }
    if signals.reference.len() != cl.outputs() {
        return Err(Error::dim("reference channels", cl.outputs(), signals.reference.len()));
    }
    if signals.disturbance.len() != cl.n_disturbances {
        return Err(Error::dim("disturbance channels", cl.n_disturbances, signals.disturbance.len()));
    }
    let dt = opts.dt;
    let h = 0.5 * dt;
    let alg = algebraic_rows(&cl.e);

    let mut lhs = TripletBuilder::new(ne, ne);
    let mut rhs_x = TripletBuilder::new(ne, ne);
    for t in cl.e.triplet_iter() {
        lhs.push(t.row, t.col, *t.val);
        rhs_x.push(t.row, t.col, *t.val);
    }
    for t in cl.a.triplet_iter() {
        if alg[t.row] {
            lhs.push(t.row, t.col, -*t.val);
        } else {
            lhs.push(t.row, t.col, -h * *t.val);
            rhs_x.push(t.row, t.col, h * *t.val);
        }
    }
    let mut b_old = TripletBuilder::new(ne, cl.b.ncols());
    let mut b_new = TripletBuilder::new(ne, cl.b.ncols());
    for t in cl.b.triplet_iter() {
        if alg[t.row] {
            b_new.push(t.row, t.col, *t.val);
        } else {
            b_old.push(t.row, t.col, h * *t.val);
            b_new.push(t.row, t.col, h * *t.val);
        }
    }
    let (lhs, rhs_x, b_old, b_new) = (lhs.build(), rhs_x.build(), b_old.build(), b_new.build());
    let lu = SparseLu::factor(&lhs).map_err(|e| Error::TimeStep {
        step: 0,
        reason: e.to_string(),
    })?;

    let w_at = |t: f64| {
        let (r, d) = evaluate_signals(signals, t);
        let mut w = d;
        w.extend_from_slice(&r);
        (w, r)
    };
    let steps = (opts.t_end / dt).round() as usize;
    let mut snaps: Vec<(usize, f64)> = opts
        .snapshots
        .iter()
        .map(|&ts| (((ts / dt).round() as usize).min(steps), ts))
        .collect();
    snaps.sort_by(|a, b| a.0.cmp(&b.0));

    let mut traj = ClosedLoopTrajectory {
        method: "trapezoidal".into(),
        dt,
        ..Default::default()
    };
    let mut x = x0.to_vec();
    let (mut w, r) = w_at(0.0);
    write_outputs(cl, &x, &w, &mut traj, 0.0, &r);
    let mut snap_iter = snaps.into_iter().peekable();
    let mut keep = |k: usize, x: &[f64], traj: &mut ClosedLoopTrajectory| {
        while let Some(&(ks, ts)) = snap_iter.peek() {
            if ks != k {
                break;
            }
            traj.snapshots.push((ts, x.to_vec()));
            snap_iter.next();
        }
    };
    keep(0, &x, &mut traj);
    for k in 1..=steps {
        let t = k as f64 * dt;
        let (w_new, r_new) = w_at(t);
        let mut rhs = vec![0.0; ne];
        spmv_acc(&rhs_x, &x, 1.0, &mut rhs);
        spmv_acc(&b_old, &w, 1.0, &mut rhs);
        spmv_acc(&b_new, &w_new, 1.0, &mut rhs);
        x = lu.solve(&rhs).map_err(|e| Error::TimeStep {
            step: k,
            reason: e.to_string(),
        })?;
        w = w_new;
        write_outputs(cl, &x, &w, &mut traj, t, &r_new);
        keep(k, &x, &mut traj);
    }
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub window: [f64; 2],
    pub sup: Vec<f64>,
    pub rms: Vec<f64>,
}

pub fn error_metrics(traj: &ClosedLoopTrajectory, window: [f64; 2]) -> Result<ErrorMetrics> {
    let idx: Vec<usize> = (0..traj.t.len())
        .filter(|&k| traj.t[k] >= window[0] - 1e-12 && traj.t[k] <= window[1] + 1e-12)
        .collect();
    if idx.is_empty() {
        return Err(Error::EmptyWindow(window[0], window[1]));
    }
    let p = traj.outputs();
    let sup = (0..p).map(|i| idx.iter().map(|&k| traj.e[k][i].abs()).fold(0.0, f64::max)).collect();
    let rms = (0..p)
        .map(|i| (idx.iter().map(|&k| traj.e[k][i].powi(2)).sum::<f64>() / idx.len() as f64).sqrt())
        .collect();
    Ok(ErrorMetrics { window, sup, rms })
}

/// Least-squares slope of `log ‖e(t)‖` over a window: the rate of the
/// fitted exponential envelope.
pub fn error_decay_rate(traj: &ClosedLoopTrajectory, window: [f64; 2]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = (0..traj.t.len())
        .filter(|&k| traj.t[k] >= window[0] - 1e-12 && traj.t[k] <= window[1] + 1e-12)
        .map(|k| (traj.t[k], traj.e[k].iter().map(|v| v * v).sum::<f64>().sqrt()))
        .filter(|&(_, n)| n > 0.0)
        .map(|(t, n)| (t, n.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::EmptyWindow(window[0], window[1]));
    }
    let k = pts.len() as f64;
    let (mt, ml) = (pts.iter().map(|p| p.0).sum::<f64>() / k, pts.iter().map(|p| p.1).sum::<f64>() / k);
    let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Ok(cov / var)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn term(frequency: f64, cos: &[f64], sin: &[f64]) -> SignalTerm {
        SignalTerm {
            frequency,
            cos: cos.to_vec(),
            sin: sin.to_vec(),
        }
    }

    #[test]
    fn polynomial_coefficients_are_ascending() {
        let t = term(0.0, &[1.0, 2.0, 3.0], &[]);
        assert_eq!(t.eval(2.0), 1.0 + 4.0 + 12.0);
    }

    #[test]
    fn algebraic_rows_are_detected() {
        let mut e = TripletBuilder::new(3, 3);
        e.push(0, 0, 1.0);
        e.push(2, 1, 0.5);
        assert_eq!(algebraic_rows(&e.build()), vec![false, true, false]);
    }
}
