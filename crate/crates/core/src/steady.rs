//! Steady Boussinesq flow by Newton's method on the full velocity/pressure/
//! temperature saddle-point system.
//!
//! Unknowns are ordered `[w; q; T]`. The residual is
//!
//! ```text
//! R_w = A_v w + c(w) − Dᵀq − B₀T − F_w
//! R_q = −D w
//! R_T = A_θ T + (w·∇)T − F_T
//! ```
//!
//! with the natural stress-free condition on the outlet fixing the pressure level.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ScalarExpr;
use crate::fem::{assemble_forms, volume_load, FemSpaces, Field, FormMatrices, PhysicalParams};
use crate::linalg::{norm2, SparseLu};
use crate::sparse::{spmv, spmv_acc, spmv_t, TripletBuilder};

/// Body force and heat source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForcingFields {
    pub velocity: [ScalarExpr; 2],
    pub temperature: ScalarExpr,
}

impl ForcingFields {
    pub fn zero() -> Self {
        ForcingFields {
            velocity: [ScalarExpr::constant(0.0), ScalarExpr::constant(0.0)],
            temperature: ScalarExpr::constant(0.0),
        }
    }

    /// Load vectors `(F_w, F_T)`.
    pub fn loads(&self, spaces: &FemSpaces) -> (Vec<f64>, Vec<f64>) {
        let mut fw = volume_load(spaces, Field::V1, &self.velocity[0]);
        let f2 = volume_load(spaces, Field::V2, &self.velocity[1]);
        for (a, b) in fw.iter_mut().zip(f2) {
            *a += b;
        }
        (fw, volume_load(spaces, Field::Theta, &self.temperature))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteadyState {
    pub w: Vec<f64>,
    pub q: Vec<f64>,
    pub t: Vec<f64>,
    pub residual_norm: f64,
    /// Residual 2-norm before each Newton update and after the last one.
    pub history: Vec<f64>,
}

impl SteadyState {
    pub fn zero(spaces: &FemSpaces) -> Self {
        SteadyState {
            w: vec![0.0; spaces.n_v()],
            q: vec![0.0; spaces.n_p()],
            t: vec![0.0; spaces.n_theta()],
            residual_norm: 0.0,
            history: vec![],
        }
    }

    pub fn iterations(&self) -> usize {
        self.history.len().saturating_sub(1)
    }

    fn pack(&self) -> Vec<f64> {
        [self.w.as_slice(), &self.q, &self.t].concat()
    }

    /// `‖D w‖₂`, the algebraic divergence residual.
    pub fn divergence_norm(&self, forms: &FormMatrices) -> f64 {
        norm2(&spmv(&forms.div, &self.w))
    }

    /// CSV with a `# mesh <hash>` header and `field,index,value` rows.
    pub fn to_csv(&self, mesh_hash: &str) -> String {
        let mut out = format!("# mesh {mesh_hash}\n# residual {:e}\nfield,index,value\n", self.residual_norm);
        for (name, v) in [("w", &self.w), ("q", &self.q), ("t", &self.t)] {
            for (i, x) in v.iter().enumerate() {
                let _ = writeln!(out, "{name},{i},{x:e}");
            }
        }
        out
    }

    pub fn save_csv(&self, path: &Path, spaces: &FemSpaces) -> Result<()> {
        std::fs::write(path, self.to_csv(&spaces.mesh.content_hash()))?;
        Ok(())
    }

    /// Loads a state written by [`SteadyState::save_csv`]; the mesh hash and
    /// every block length must match `spaces`.
    pub fn load_csv(path: &Path, spaces: &FemSpaces) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let bad = |reason: String| Error::Artifact {
            path: path.display().to_string(),
            reason,
        };
        let mut lines = text.lines();
        let hash = lines
            .next()
            .and_then(|l| l.strip_prefix("# mesh "))
            .ok_or_else(|| bad("missing mesh header".into()))?;
        if hash != spaces.mesh.content_hash() {
            return Err(bad("mesh hash differs from the current mesh".into()));
        }
        let residual_norm = lines
            .next()
            .and_then(|l| l.strip_prefix("# residual "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing residual header".into()))?;
        lines.next();
        let mut s = SteadyState::zero(spaces);
        s.residual_norm = residual_norm;
        let mut seen = [0usize; 3];
        for line in lines.filter(|l| !l.is_empty()) {
            let mut it = line.split(',');
            let (Some(f), Some(i), Some(v)) = (it.next(), it.next(), it.next()) else {
                return Err(bad(format!("malformed row `{line}`")));
            };
            let i: usize = i.parse().map_err(|_| bad(format!("bad index in `{line}`")))?;
            let v: f64 = v.parse().map_err(|_| bad(format!("bad value in `{line}`")))?;
            let (k, target) = match f {
                "w" => (0, &mut s.w),
                "q" => (1, &mut s.q),
                "t" => (2, &mut s.t),
                _ => return Err(bad(format!("unknown field `{f}`"))),
            };
            *target.get_mut(i).ok_or_else(|| bad(format!("index {i} out of range for `{f}`")))? = v;
            seen[k] += 1;
        }
        if seen != [spaces.n_v(), spaces.n_p(), spaces.n_theta()] {
            return Err(bad(format!("block sizes {seen:?} do not match the spaces")));
        }
        Ok(s)
    }
}

/// Newton stopping rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 25 }
    }
}

struct Problem<'a> {
    spaces: &'a FemSpaces,
    params: &'a PhysicalParams,
    fw: Vec<f64>,
    ft: Vec<f64>,
}

impl Problem<'_> {
    fn sizes(&self) -> (usize, usize, usize) {
        (self.spaces.n_v(), self.spaces.n_p(), self.spaces.n_theta())
    }

    fn forms(&self, w: &[f64], t: &[f64]) -> Result<FormMatrices> {
        assemble_forms(self.spaces, self.params, Some((w, t)))
    }

    fn residual(&self, f: &FormMatrices, w: &[f64], q: &[f64], t: &[f64]) -> Vec<f64> {
        let (nv, np, nt) = self.sizes();
        let mut r = vec![0.0; nv + np + nt];
        let (rw, rest) = r.split_at_mut(nv);
        let (rq, rt) = rest.split_at_mut(np);
        spmv_acc(&f.a_v, w, 1.0, rw);
        // n_v(w) w = 2 (w·∇)w
        spmv_acc(&f.n_v, w, 0.5, rw);
        let dq = spmv_t(&f.div, q);
        spmv_acc(&f.b0, t, -1.0, rw);
        for i in 0..nv {
            rw[i] -= dq[i] + self.fw[i];
        }
        spmv_acc(&f.div, w, -1.0, rq);
        spmv_acc(&f.a_theta, t, 1.0, rt);
        spmv_acc(&f.n_tt, t, 1.0, rt);
        for i in 0..nt {
            rt[i] -= self.ft[i];
        }
        r
    }

    fn jacobian(&self, f: &FormMatrices) -> crate::sparse::SpMat {
        let (nv, np, nt) = self.sizes();
        let n = nv + np + nt;
        let nnz = f.a_v.compute_nnz() + f.n_v.compute_nnz() + 2 * f.div.compute_nnz() + f.b0.compute_nnz();
        let mut j = TripletBuilder::with_capacity(n, n, 2 * nnz);
        j.add_sparse(&f.a_v, 0, 0, 1.0);
        j.add_sparse(&f.n_v, 0, 0, 1.0);
        for t in f.div.triplet_iter() {
            j.push(t.col, nv + t.row, -*t.val);
            j.push(nv + t.row, t.col, -*t.val);
        }
        j.add_sparse(&f.b0, 0, nv + np, -1.0);
        j.add_sparse(&f.n_tv, nv + np, 0, 1.0);
        j.add_sparse(&f.a_theta, nv + np, nv + np, 1.0);
        j.add_sparse(&f.n_tt, nv + np, nv + np, 1.0);
        j.build()
    }
}

/// Residual of the steady weak form at `state` (layout `[w; q; T]`).
pub fn nonlinear_residual(
    spaces: &FemSpaces,
    params: &PhysicalParams,
    forcing: &ForcingFields,
    state: &SteadyState,
) -> Result<Vec<f64>> {
    if state.q.len() != spaces.n_p() {
        return Err(Error::dim("pressure field", spaces.n_p(), state.q.len()));
    }
    let (fw, ft) = forcing.loads(spaces);
    let p = Problem { spaces, params, fw, ft };
    let f = p.forms(&state.w, &state.t)?;
    Ok(p.residual(&f, &state.w, &state.q, &state.t))
}

/// Plain Newton iteration with the exact Jacobian.
pub fn newton_solve(
    spaces: &FemSpaces,
    params: &PhysicalParams,
    forcing: &ForcingFields,
    initial: Option<&SteadyState>,
    opts: NewtonOptions,
) -> Result<SteadyState> {
    if !(opts.tol > 0.0) {
        return Err(Error::Invariant("Newton tolerance must be positive".into()));
    }
    let (fw, ft) = forcing.loads(spaces);
    let p = Problem { spaces, params, fw, ft };
    let (nv, np, nt) = p.sizes();
    let mut x = match initial {
        Some(s) => {
            spaces.check_point(&s.w, &s.t)?;
            if s.q.len() != np {
                return Err(Error::dim("pressure field", np, s.q.len()));
            }
            s.pack()
        }
        None => vec![0.0; nv + np + nt],
    };
    let mut history = Vec::new();
    for step in 0..=opts.max_iter {
        let (w, rest) = x.split_at(nv);
        let (q, t) = rest.split_at(np);
        let f = p.forms(w, t)?;
        let r = p.residual(&f, w, q, t);
        let rn = norm2(&r);
        history.push(rn);
        log::debug!("newton step {step}: residual {rn:.3e}");
        if rn < opts.tol {
            return Ok(SteadyState {
                w: w.to_vec(),
                q: q.to_vec(),
                t: t.to_vec(),
                residual_norm: rn,
                history,
            });
        }
        if !rn.is_finite() || step == opts.max_iter {
            break;
        }
        let lu = SparseLu::factor(&p.jacobian(&f)).map_err(|_| Error::SingularJacobian { step: step + 1 })?;
        let dx = lu.solve(&r).map_err(|_| Error::SingularJacobian { step: step + 1 })?;
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi -= di;
        }
    }
    Err(Error::Divergence {
        iterations: history.len() - 1,
        history,
    })
}

/// Result of the two-stage continuation: the intermediate state from the
/// initial-guess forcing and the target state started from it.
#[derive(Clone, Debug)]
pub struct Continuation {
    pub initial: SteadyState,
    pub target: SteadyState,
}

impl Continuation {
    pub fn total_iterations(&self) -> usize {
        self.initial.iterations() + self.target.iterations()
    }
}

/// Solves with `initial_forcing` from zero, then with `forcing` from that
/// solution. `opts.max_iter` bounds the combined iteration count.
pub fn solve_continuation(
    spaces: &FemSpaces,
    params: &PhysicalParams,
    initial_forcing: &ForcingFields,
    forcing: &ForcingFields,
    opts: NewtonOptions,
) -> Result<Continuation> {
    let initial = newton_solve(spaces, params, initial_forcing, None, opts)?;
    let rest = NewtonOptions {
        max_iter: opts.max_iter.saturating_sub(initial.iterations()),
        ..opts
    };
    let target = newton_solve(spaces, params, forcing, Some(&initial), rest)?;
    Ok(Continuation { initial, target })
}
