//! Internal-model controller synthesis: the internal model, the two shifted
//! Riccati equations, balanced truncation of the observer and the final
//! controller realization.
//!
//! Riccati equations are solved densely by the matrix sign function of the
//! Hamiltonian, followed by Newton–Kleinman correction steps. Lyapunov
//! equations use the sign-function iteration as well.

use std::fmt::Write as _;
use std::path::Path;

use faer::linalg::solvers::{DenseSolveCore, SolveLstsq};
use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inverse, spectral_abscissa, symmetrize};

/// Frequencies and polynomial orders of the exogenous signals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    /// Strictly increasing, non-negative; a leading 0 is the constant mode.
    pub frequencies: Vec<f64>,
    /// `n_k ≥ 1` per frequency; `n_k − 1` is the highest polynomial degree.
    #[serde(default)]
    pub orders: Vec<usize>,
}

impl SignalSpec {
    pub fn new(frequencies: Vec<f64>) -> Self {
        let orders = vec![1; frequencies.len()];
        SignalSpec { frequencies, orders }
    }

    pub fn order(&self, k: usize) -> usize {
        self.orders.get(k).copied().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequencies.is_empty() {
            return Err(Error::Invariant("at least one signal frequency is required".into()));
        }
        if self.frequencies.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Invariant("signal frequencies must be finite and non-negative".into()));
        }
        if self.frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invariant("signal frequencies must be strictly increasing".into()));
        }
        if !self.orders.is_empty() && self.orders.len() != self.frequencies.len() {
            return Err(Error::Invariant("one polynomial order per frequency is required".into()));
        }
        if self.orders.iter().any(|&n| n == 0) {
            return Err(Error::Invariant("polynomial orders must be at least 1".into()));
        }
        Ok(())
    }

    /// `p·n_0 + Σ 2p·n_k`
    pub fn internal_model_dim(&self, p: usize) -> usize {
        self.frequencies
            .iter()
            .enumerate()
            .map(|(k, &w)| if w == 0.0 { p * self.order(k) } else { 2 * p * self.order(k) })
            .sum()
    }
}

#[derive(Clone, Debug)]
pub struct InternalModel {
    pub g1: Mat<f64>,
    pub g2: Mat<f64>,
    pub spec: SignalSpec,
    pub outputs: usize,
}

impl InternalModel {
    pub fn dim(&self) -> usize {
        self.g1.nrows()
    }
}

/// Block-diagonal `G1` with Jordan chains per frequency and the matching
/// injection `G2` into the last block of each chain.
pub fn build_internal_model(spec: &SignalSpec, p: usize) -> Result<InternalModel> {
    spec.validate()?;
    if p == 0 {
        return Err(Error::Invariant("the internal model needs at least one output".into()));
    }
    let n = spec.internal_model_dim(p);
    let mut g1 = Mat::zeros(n, n);
    let mut g2 = Mat::zeros(n, p);
    let mut off = 0;
    for (k, &w) in spec.frequencies.iter().enumerate() {
        let nk = spec.order(k);
        let bs = if w == 0.0 { p } else { 2 * p };
        for l in 0..nk {
            let o = off + l * bs;
            if w != 0.0 {
                for i in 0..p {
                    g1[(o + i, o + p + i)] = w;
                    g1[(o + p + i, o + i)] = -w;
                }
            }
            if l + 1 < nk {
                for i in 0..bs {
                    g1[(o + i, o + bs + i)] = 1.0;
                }
            }
        }
        let last = off + (nk - 1) * bs;
        for i in 0..p {
            g2[(last + i, i)] = 1.0;
        }
        off += nk * bs;
    }
    Ok(InternalModel {
        g1,
        g2,
        spec: spec.clone(),
        outputs: p,
    })
}

/// Stabilizing solution of `ÃᵀX + XÃ − X B R⁻¹ Bᵀ X + Q = 0` with
/// `Ã = A + αI`.
#[derive(Clone, Debug)]
pub struct CareSolution {
    pub x: Mat<f64>,
    /// `‖residual‖_F / ‖X‖_F`
    pub residual: f64,
    pub sign_iterations: usize,
    pub newton_steps: usize,
    /// Spectral abscissa of `Ã − B R⁻¹ Bᵀ X`.
    pub closed_loop_abscissa: f64,
}

fn lu_log_det_scale(lu: &faer::linalg::solvers::PartialPivLu<f64>) -> f64 {
    let u = lu.U();
    let n = u.nrows();
    let s: f64 = (0..n).map(|i| u[(i, i)].abs().ln()).sum();
    (-s / n as f64).exp()
}

/// Stops at a tight tolerance, or once the quadratic phase has stalled at
/// rounding level.
fn converged(diff: f64, size: f64, prev: &mut f64) -> bool {
    let stalled = diff <= 1e-8 * size && diff >= 0.5 * *prev;
    *prev = diff;
    diff <= 1e-13 * size || stalled
}

/// Newton iteration for `sign(Z)` with determinant scaling.
fn matrix_sign(mut z: Mat<f64>, what: &str) -> Result<(Mat<f64>, usize)> {
    let n = z.nrows();
    let mut prev = f64::INFINITY;
    for it in 1..=100 {
        let lu = z.partial_piv_lu();
        let zi = lu.inverse();
        if !zi.col_iter().all(|c| c.iter().all(|v| v.is_finite())) {
            return Err(Error::Riccati {
                equation: what.into(),
                reason: "matrix sign iteration hit a singular iterate (eigenvalues on the imaginary axis)".into(),
            });
        }
        // Scaling stops once the iteration is close to converged.
        let c = if it <= 8 { lu_log_det_scale(&lu) } else { 1.0 };
        let next = Mat::from_fn(n, n, |i, j| 0.5 * (z[(i, j)] * c + zi[(i, j)] / c));
        let diff = (&next - &z).norm_l1();
        let size = next.norm_l1();
        z = next;
        if it > 2 && converged(diff, size, &mut prev) {
            return Ok((z, it));
        }
    }
    Err(Error::Riccati {
        equation: what.into(),
        reason: "matrix sign iteration did not converge in 100 steps".into(),
    })
}

fn care_residual(a: MatRef<'_, f64>, g: MatRef<'_, f64>, q: MatRef<'_, f64>, x: MatRef<'_, f64>) -> Mat<f64> {
    let ax = a.transpose() * x;
    let r = &ax + ax.transpose() - x * g * x + q;
    symmetrize(r.as_ref())
}

/// Solves `AᵀX + XA + W = 0` for stable `A` (sign-function iteration).
pub fn solve_lyapunov_transposed(a: MatRef<'_, f64>, w: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = a.nrows();
    if a.ncols() != n || w.nrows() != n || w.ncols() != n {
        return Err(Error::dim("Lyapunov equation", n, w.nrows()));
    }
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let mut ak = a.to_owned();
    let mut wk = w.to_owned();
    let mut prev = f64::INFINITY;
    for it in 1..=100 {
        let lu = ak.partial_piv_lu();
        let ai = lu.inverse();
        if !ai.col_iter().all(|c| c.iter().all(|v| v.is_finite())) {
            return Err(Error::Lyapunov("singular iterate: A has eigenvalues on the imaginary axis".into()));
        }
        let c = if it <= 8 { lu_log_det_scale(&lu) } else { 1.0 };
        let aw = ai.transpose() * &wk * &ai;
        let next_w = Mat::from_fn(n, n, |i, j| 0.5 * (wk[(i, j)] * c + aw[(i, j)] / c));
        let next_a = Mat::from_fn(n, n, |i, j| 0.5 * (ak[(i, j)] * c + ai[(i, j)] / c));
        let diff = (&next_a - &ak).norm_l1();
        let size = next_a.norm_l1();
        ak = next_a;
        wk = symmetrize(next_w.as_ref());
        if it > 2 && converged(diff, size, &mut prev) {
            // sign(A) = −I for stable A; anything else means A was not stable.
            let dev = (&ak + Mat::<f64>::identity(n, n)).norm_l1();
            if dev > 1e-6 * n as f64 {
                return Err(Error::Lyapunov("A is not stable (sign(A) ≠ −I)".into()));
            }
            return Ok(Mat::from_fn(n, n, |i, j| 0.5 * wk[(i, j)]));
        }
    }
    Err(Error::Lyapunov("sign iteration did not converge in 100 steps".into()))
}

/// Solves `AX + XAᵀ + W = 0` for stable `A`.
pub fn solve_lyapunov(a: MatRef<'_, f64>, w: MatRef<'_, f64>) -> Result<Mat<f64>> {
    solve_lyapunov_transposed(a.transpose(), w)
}

/// Continuous algebraic Riccati equation, control form, optional mass `E`
/// (`AᵀXE + EᵀXA − EᵀXBR⁻¹BᵀXE + Q = 0` with `A ← A + αE`).
pub fn solve_care(
    a: MatRef<'_, f64>,
    e: Option<MatRef<'_, f64>>,
    b: MatRef<'_, f64>,
    q: MatRef<'_, f64>,
    r: MatRef<'_, f64>,
    alpha: f64,
    what: &str,
) -> Result<CareSolution> {
    let n = a.nrows();
    let m = b.ncols();
    let fail = |reason: String| Error::Riccati {
        equation: what.into(),
        reason,
    };
    if a.ncols() != n || b.nrows() != n || q.nrows() != n || q.ncols() != n || r.nrows() != m || r.ncols() != m {
        return Err(fail("inconsistent dimensions".into()));
    }
    if r.llt(faer::Side::Lower).is_err() {
        return Err(fail("R is not symmetric positive definite".into()));
    }
    if !(alpha >= 0.0) {
        return Err(fail("shift α must be non-negative".into()));
    }
    // Reduce to E = I: Ã = E⁻¹A, B̃ = E⁻¹B, and X = E⁻ᵀ Y E⁻¹.
    let (mut at, bt, einv) = match e {
        Some(e) => {
            let ei = inverse(e);
            (&ei * a, &ei * b, Some(ei))
        }
        None => (a.to_owned(), b.to_owned(), None),
    };
    for i in 0..n {
        at[(i, i)] += alpha;
    }
    let g = symmetrize((&bt * crate::linalg::solve(r, bt.transpose()).as_ref()).as_ref());
    let qs = symmetrize(q);

    let ham = crate::linalg::block(
        &[n, n],
        &[n, n],
        &[
            &[Some(at.as_ref()), Some((-&g).as_ref())],
            &[Some((-&qs).as_ref()), Some((-at.transpose().to_owned()).as_ref())],
        ],
    );
    let (w, sign_iterations) = matrix_sign(ham, what)?;
    // (W + I)[I; X] = 0  ⇒  [W12; W22 + I] X = −[W11 + I; W21]
    let mut lhs = Mat::zeros(2 * n, n);
    let mut rhs = Mat::zeros(2 * n, n);
    for i in 0..n {
        for j in 0..n {
            lhs[(i, j)] = w[(i, n + j)];
            lhs[(n + i, j)] = w[(n + i, n + j)] + if i == j { 1.0 } else { 0.0 };
            rhs[(i, j)] = -(w[(i, j)] + if i == j { 1.0 } else { 0.0 });
            rhs[(n + i, j)] = -w[(n + i, j)];
        }
    }
    let qr = lhs.qr();
    let mut y = symmetrize(qr.solve_lstsq(rhs).as_ref());
    if !y.col_iter().all(|c| c.iter().all(|v| v.is_finite())) {
        return Err(fail("stable invariant subspace has no graph form; check stabilizability/detectability".into()));
    }

    // Newton–Kleinman correction.
    let mut newton_steps = 0;
    let mut res = care_residual(at.as_ref(), g.as_ref(), qs.as_ref(), y.as_ref());
    let rel = |res: &Mat<f64>, y: &Mat<f64>| res.norm_l2() / y.norm_l2().max(1e-300);
    while rel(&res, &y) > 1e-12 && newton_steps < 4 {
        let ak = &at - &g * &y;
        let dy = solve_lyapunov_transposed(ak.as_ref(), res.as_ref()).map_err(|e| fail(format!("Newton correction: {e}")))?;
        let cand = symmetrize((&y + &dy).as_ref());
        let cres = care_residual(at.as_ref(), g.as_ref(), qs.as_ref(), cand.as_ref());
        newton_steps += 1;
        if cres.norm_l2() >= res.norm_l2() {
            break;
        }
        y = cand;
        res = cres;
    }
    let closed = &at - &g * &y;
    let closed_loop_abscissa = spectral_abscissa(closed.as_ref())?;
    if closed_loop_abscissa >= 0.0 {
        return Err(fail(format!(
            "no stabilizing solution (closed-loop abscissa {closed_loop_abscissa:.3e}); check stabilizability/detectability"
        )));
    }
    let residual = if y.norm_l2() == 0.0 {
        res.norm_l2()
    } else {
        res.norm_l2() / y.norm_l2()
    };
    let x = match einv {
        Some(ei) => symmetrize((ei.transpose() * &y * &ei).as_ref()),
        None => y,
    };
    Ok(CareSolution {
        x,
        residual,
        sign_iterations,
        newton_steps,
        closed_loop_abscissa,
    })
}

/// Design weights of the two Riccati equations and the reduction order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisParams {
    pub alpha1: f64,
    pub alpha2: f64,
    /// `R_1` (p×p); identity when omitted.
    #[serde(default)]
    pub r1: Option<Vec<Vec<f64>>>,
    /// `R_2` (m×m); identity when omitted.
    #[serde(default)]
    pub r2: Option<Vec<Vec<f64>>>,
    /// Scale of `Q_0 = q0·I` on the internal model.
    #[serde(default = "one")]
    pub q0: f64,
    /// Reduced observer order `r`.
    pub order: usize,
}

fn one() -> f64 {
    1.0
}

impl SynthesisParams {
    fn weight(w: &Option<Vec<Vec<f64>>>, n: usize, name: &str) -> Result<Mat<f64>> {
        match w {
            None => Ok(Mat::identity(n, n)),
            Some(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Schema {
                        path: format!("synthesis.{name}"),
                        reason: format!("expected a {n}×{n} matrix"),
                    });
                }
                Ok(Mat::from_fn(n, n, |i, j| rows[i][j]))
            }
        }
    }

    pub fn r1_matrix(&self, p: usize) -> Result<Mat<f64>> {
        Self::weight(&self.r1, p, "r1")
    }

    pub fn r2_matrix(&self, m: usize) -> Result<Mat<f64>> {
        Self::weight(&self.r2, m, "r2")
    }
}

/// Dense design model `ẋ = A x + B u`, `y = C x` in coordinates where the
/// state inner product is the Euclidean one.
#[derive(Clone, Debug)]
pub struct DesignModel {
    pub a: Mat<f64>,
    pub b: Mat<f64>,
    pub c: Mat<f64>,
}

#[derive(Clone, Debug)]
pub struct Gains {
    pub l: Mat<f64>,
    pub k1: Mat<f64>,
    pub k2: Mat<f64>,
    pub observer: CareSolution,
    pub control: CareSolution,
    /// Abscissa of `A + L C`.
    pub observer_abscissa: f64,
    /// Abscissa of `A_c + B_c K`.
    pub control_abscissa: f64,
}

/// `A_c = [[G1, G2 C], [0, A]]`, `B_c = [0; B]`.
pub fn augmented_system(model: &DesignModel, im: &InternalModel) -> (Mat<f64>, Mat<f64>) {
    let (n, m, q) = (model.a.nrows(), model.b.ncols(), im.dim());
    let g2c = &im.g2 * &model.c;
    let ac = crate::linalg::block(
        &[q, n],
        &[q, n],
        &[&[Some(im.g1.as_ref()), Some(g2c.as_ref())], &[None, Some(model.a.as_ref())]],
    );
    let mut bc = Mat::zeros(q + n, m);
    bc.as_mut().submatrix_mut(q, 0, n, m).copy_from(&model.b);
    (ac, bc)
}

/// Observer gain from the filter Riccati equation and state feedback from
/// the augmented control Riccati equation.
pub fn compute_gains(model: &DesignModel, im: &InternalModel, params: &SynthesisParams) -> Result<Gains> {
    let (n, m, p) = (model.a.nrows(), model.b.ncols(), model.c.nrows());
    if model.b.nrows() != n || model.c.ncols() != n {
        return Err(Error::dim("design model", n, model.b.nrows()));
    }
    if im.outputs != p {
        return Err(Error::dim("internal model outputs", p, im.outputs));
    }
    let r1 = params.r1_matrix(p)?;
    let r2 = params.r2_matrix(m)?;

    // Filter equation in dual form: (Aᵀ, Cᵀ), Q1 Q1ᵀ = I.
    let observer = solve_care(
        model.a.transpose(),
        None,
        model.c.transpose(),
        Mat::<f64>::identity(n, n).as_ref(),
        r1.as_ref(),
        params.alpha1,
        "observer",
    )?;
    let l = -(&observer.x * model.c.transpose() * inverse(r1.as_ref()));

    let (ac, bc) = augmented_system(model, im);
    let q = im.dim();
    let mut qc = Mat::<f64>::identity(q + n, q + n);
    for i in 0..q {
        qc[(i, i)] = params.q0 * params.q0;
    }
    let control = solve_care(ac.as_ref(), None, bc.as_ref(), qc.as_ref(), r2.as_ref(), params.alpha2, "control")?;
    let k = -(crate::linalg::solve(r2.as_ref(), bc.transpose()) * &control.x);
    let k1 = k.as_ref().submatrix(0, 0, m, q).to_owned();
    let k2 = k.as_ref().submatrix(0, q, m, n).to_owned();

    // spec(A + LC) = spec((A + LC)ᵀ) and the Riccati solver reports the shifted abscissa.
    let observer_abscissa = observer.closed_loop_abscissa - params.alpha1;
    let control_abscissa = control.closed_loop_abscissa - params.alpha2;
    Ok(Gains {
        l,
        k1,
        k2,
        observer,
        control,
        observer_abscissa,
        control_abscissa,
    })
}

#[derive(Clone, Debug)]
pub struct BalancedTruncation {
    pub a: Mat<f64>,
    pub b: Mat<f64>,
    pub c: Mat<f64>,
    /// Hankel singular values, descending.
    pub hankel: Vec<f64>,
    /// Order actually kept (may exceed the request to keep tied values together).
    pub order: usize,
    /// `2 Σ_{i>r} σ_i`
    pub error_bound: f64,
}

/// Symmetric square-root factor `S` with `P ≈ S Sᵀ`.
fn sqrt_factor(p: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = p.nrows();
    let eig = symmetrize(p)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::Lyapunov("Gramian eigendecomposition failed".into()))?;
    let s = eig.S().column_vector();
    let smax = (0..n).map(|i| s[i].abs()).fold(0.0, f64::max);
    if (0..n).any(|i| s[i] < -1e-8 * smax) {
        return Err(Error::Lyapunov("Gramian is indefinite: the system is not stable".into()));
    }
    let u = eig.U();
    Ok(Mat::from_fn(n, n, |i, j| u[(i, j)] * s[j].max(0.0).sqrt()))
}

/// Square-root balanced truncation of a stable system `(A, B, C)`.
pub fn balanced_truncate(a: MatRef<'_, f64>, b: MatRef<'_, f64>, c: MatRef<'_, f64>, r: usize) -> Result<BalancedTruncation> {
    let n = a.nrows();
    if r > n {
        return Err(Error::Invariant(format!("reduction order {r} exceeds system order {n}")));
    }
    if b.nrows() != n || c.ncols() != n {
        return Err(Error::dim("balanced truncation", n, b.nrows()));
    }
    let bb = b * b.transpose();
    let cc = c.transpose() * c;
    let p = solve_lyapunov(a, bb.as_ref())?;
    let q = solve_lyapunov_transposed(a, cc.as_ref())?;
    let sp = sqrt_factor(p.as_ref())?;
    let sq = sqrt_factor(q.as_ref())?;
    let prod = sq.transpose() * &sp;
    let svd = prod.svd().map_err(|_| Error::Lyapunov("SVD of the Gramian factors failed".into()))?;
    let hankel: Vec<f64> = (0..n).map(|i| svd.S().column_vector()[i]).collect();
    let mut order = r;
    while order > 0 && order < n && hankel[order] >= (1.0 - 1e-10) * hankel[order - 1] && hankel[order] > 0.0 {
        order += 1;
    }
    if order != r {
        log::warn!("balanced truncation kept order {order} instead of {r} to avoid splitting equal Hankel values");
    }
    let error_bound = 2.0 * hankel[order..].iter().sum::<f64>();
    let scale: Vec<f64> = (0..order)
        .map(|i| {
            if hankel[i] > 0.0 {
                Ok(1.0 / hankel[i].sqrt())
            } else {
                Err(Error::Lyapunov(format!("zero Hankel singular value inside the kept order {order}")))
            }
        })
        .collect::<Result<_>>()?;
    let spv = &sp * svd.V().subcols(0, order);
    let squ = &sq * svd.U().subcols(0, order);
    let t = Mat::from_fn(n, order, |i, j| spv[(i, j)] * scale[j]);
    let w = Mat::from_fn(n, order, |i, j| squ[(i, j)] * scale[j]);
    Ok(BalancedTruncation {
        a: w.transpose() * a * &t,
        b: w.transpose() * b,
        c: c * &t,
        hankel,
        order,
        error_bound,
    })
}

/// Observer-based controller `ż = 𝒢1 z + 𝒢2 e`, `u = K z`.
#[derive(Clone, Debug)]
pub struct ControllerRealization {
    pub g1: Mat<f64>,
    pub g2: Mat<f64>,
    pub k: Mat<f64>,
    pub dim_zim: usize,
    pub order: usize,
    pub frequencies: Vec<f64>,
    pub hankel: Vec<f64>,
    pub error_bound: f64,
}

impl ControllerRealization {
    pub fn dim(&self) -> usize {
        self.g1.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.g2.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.k.nrows()
    }

    /// Matrix Market blocks plus `manifest.txt`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        crate::io::write_dense_mtx(&dir.join("G1.mtx"), self.g1.as_ref())?;
        crate::io::write_dense_mtx(&dir.join("G2.mtx"), self.g2.as_ref())?;
        crate::io::write_dense_mtx(&dir.join("K.mtx"), self.k.as_ref())?;
        let mut man = String::new();
        let _ = writeln!(man, "dim_z {}", self.dim());
        let _ = writeln!(man, "dim_zim {}", self.dim_zim);
        let _ = writeln!(man, "order {}", self.order);
        let _ = writeln!(man, "inputs {}", self.inputs());
        let _ = writeln!(man, "outputs {}", self.outputs());
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(man, "frequencies {}", list(&self.frequencies));
        let _ = writeln!(man, "error_bound {:e}", self.error_bound);
        let _ = writeln!(man, "hankel {}", list(&self.hankel));
        std::fs::write(dir.join("manifest.txt"), man)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let man_path = dir.join("manifest.txt");
        if !man_path.exists() {
            return Err(Error::MissingArtifact("controller".into()));
        }
        let text = std::fs::read_to_string(&man_path)?;
        let bad = |reason: &str| Error::Artifact {
            path: man_path.display().to_string(),
            reason: reason.into(),
        };
        let field = |key: &str| -> Result<&str> {
            text.lines()
                .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ').or(if r.is_empty() { Some("") } else { None })))
                .ok_or_else(|| bad(&format!("missing `{key}`")))
        };
        let num = |key: &str| -> Result<usize> { field(key)?.trim().parse().map_err(|_| bad(&format!("bad `{key}`"))) };
        let list = |key: &str| -> Result<Vec<f64>> {
            field(key)?
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| bad(&format!("bad `{key}`"))))
                .collect()
        };
        let g1 = crate::io::read_dense_mtx(&dir.join("G1.mtx"))?;
        let g2 = crate::io::read_dense_mtx(&dir.join("G2.mtx"))?;
        let k = crate::io::read_dense_mtx(&dir.join("K.mtx"))?;
        let ctrl = ControllerRealization {
            dim_zim: num("dim_zim")?,
            order: num("order")?,
            frequencies: list("frequencies")?,
            error_bound: field("error_bound")?.trim().parse().map_err(|_| bad("bad `error_bound`"))?,
            hankel: list("hankel")?,
            g1,
            g2,
            k,
        };
        if ctrl.dim() != num("dim_z")? || ctrl.g2.nrows() != ctrl.dim() || ctrl.k.ncols() != ctrl.dim() {
            return Err(bad("block dimensions disagree with the manifest"));
        }
        Ok(ctrl)
    }
}

/// Observer system `(A + LC, [B, L], K2)` that step III reduces.
pub fn observer_system(model: &DesignModel, gains: &Gains) -> (Mat<f64>, Mat<f64>, Mat<f64>) {
    let al = &model.a + &gains.l * &model.c;
    let (n, m, p) = (model.a.nrows(), model.b.ncols(), model.c.nrows());
    let mut bl = Mat::zeros(n, m + p);
    bl.as_mut().submatrix_mut(0, 0, n, m).copy_from(&model.b);
    bl.as_mut().submatrix_mut(0, m, n, p).copy_from(&gains.l);
    (al, bl, gains.k2.clone())
}

/// `𝒢1 = [[G1, 0], [B_r K1, A_r + B_r K2_r]]`, `𝒢2 = [G2; −L_r]`, `K = [K1, K2_r]`.
pub fn assemble_controller(im: &InternalModel, k1: MatRef<'_, f64>, red: &BalancedTruncation) -> Result<ControllerRealization> {
    let q = im.dim();
    let p = im.outputs;
    let r = red.order;
    let m = k1.nrows();
    if k1.ncols() != q {
        return Err(Error::dim("K1 columns", q, k1.ncols()));
    }
    if red.b.ncols() != m + p || red.c.nrows() != m {
        return Err(Error::dim("reduced observer inputs", m + p, red.b.ncols()));
    }
    let br = red.b.as_ref().submatrix(0, 0, r, m);
    let lr = red.b.as_ref().submatrix(0, m, r, p);
    let brk1 = br * k1;
    let inner = &red.a + br * &red.c;
    let g1 = crate::linalg::block(
        &[q, r],
        &[q, r],
        &[&[Some(im.g1.as_ref()), None], &[Some(brk1.as_ref()), Some(inner.as_ref())]],
    );
    let neg_l = -lr.to_owned();
    let g2 = crate::linalg::block(&[q, r], &[p], &[&[Some(im.g2.as_ref())], &[Some(neg_l.as_ref())]]);
    let k = crate::linalg::block(&[m], &[q, r], &[&[Some(k1), Some(red.c.as_ref())]]);
    Ok(ControllerRealization {
        g1,
        g2,
        k,
        dim_zim: q,
        order: r,
        frequencies: im.spec.frequencies.clone(),
        hankel: red.hankel.clone(),
        error_bound: red.error_bound,
    })
}

/// `A_e = [[A, B K], [𝒢2 C, 𝒢1]]` for a dense design model.
pub fn design_closed_loop(model: &DesignModel, ctrl: &ControllerRealization) -> Mat<f64> {
    let (n, z) = (model.a.nrows(), ctrl.dim());
    let bk = &model.b * &ctrl.k;
    let g2c = &ctrl.g2 * &model.c;
    crate::linalg::block(
        &[n, z],
        &[n, z],
        &[&[Some(model.a.as_ref()), Some(bk.as_ref())], &[Some(g2c.as_ref()), Some(ctrl.g1.as_ref())]],
    )
}

/// Largest singular value of `C (sI − A)⁻¹ B` over a frequency grid for the
/// difference of two stable systems, via eigendecompositions.
pub fn hinf_grid_error(
    full: (MatRef<'_, f64>, MatRef<'_, f64>, MatRef<'_, f64>),
    reduced: (MatRef<'_, f64>, MatRef<'_, f64>, MatRef<'_, f64>),
    grid: &[f64],
) -> Result<f64> {
    let modal = |a: MatRef<'_, f64>, b: MatRef<'_, f64>, c: MatRef<'_, f64>| -> Result<(Vec<c64>, Mat<c64>, Mat<c64>)> {
        let eig = a.eigen().map_err(|_| Error::Eigen { residuals: vec![] })?;
        let v = eig.U().to_owned();
        let vinv = v.partial_piv_lu().inverse();
        let lam: Vec<c64> = (0..a.nrows()).map(|i| eig.S()[i]).collect();
        Ok((lam, crate::linalg::to_complex(c) * &v, vinv * crate::linalg::to_complex(b)))
    };
    let f = modal(full.0, full.1, full.2)?;
    let r = modal(reduced.0, reduced.1, reduced.2)?;
    let eval = |(lam, cv, vb): &(Vec<c64>, Mat<c64>, Mat<c64>), s: c64| {
        Mat::from_fn(cv.nrows(), vb.ncols(), |i, j| {
            lam.iter()
                .enumerate()
                .map(|(k, l)| cv[(i, k)] * vb[(k, j)] / (s - l))
                .sum::<c64>()
        })
    };
    let mut worst: f64 = 0.0;
    for &w in grid {
        let s = c64::new(0.0, w);
        let d = eval(&f, s) - eval(&r, s);
        let sv = d.singular_values().map_err(|_| Error::Eigen { residuals: vec![] })?;
        worst = worst.max(sv.first().copied().unwrap_or(0.0));
    }
    Ok(worst)
}
