//! Unstable spectra, Hautus tests and the cascade assumption checks.
//!
//! Eigenvalues of the pencil `(A, E)` near the imaginary axis are found by
//! shift-invert Arnoldi on `(A − σE)⁻¹E`, then refined one by one with
//! inverse iteration at the Ritz value. Small systems use a dense
//! eigensolver instead.

use std::fmt::Write as _;
use std::ops::Range;

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::cascade::{ActuatorSensor, DiscretePlant};
use crate::error::{Error, Result};
use crate::linalg::{to_complex, ShiftedFactor, SysMat};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EigenOptions {
    /// Shifts in the closed upper half-plane; conjugates are implied.
    pub shifts: Vec<[f64; 2]>,
    pub krylov_dim: usize,
    /// Below this size a dense eigensolver is used.
    pub dense_limit: usize,
    /// Certified bound on `‖Ax − λEx‖ / ‖x‖`.
    pub residual_tol: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            shifts: vec![[0.0, 0.0], [0.0, 0.5], [0.0, 1.0]],
            krylov_dim: 80,
            dense_limit: 2000,
            residual_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpectralReport {
    pub eigenvalues: Vec<c64>,
    /// Unit 2-norm eigenvectors, one per eigenvalue.
    pub vectors: Vec<Vec<c64>>,
    pub residuals: Vec<f64>,
    pub margin: f64,
    pub method: String,
    /// Counts per named state block, filled by [`SpectralReport::classify`].
    pub block_counts: Vec<(String, usize)>,
}

impl SpectralReport {
    /// Number of eigenvalues with positive real part.
    pub fn unstable_count(&self) -> usize {
        self.eigenvalues.iter().filter(|l| l.re > 0.0).count()
    }

    /// Attributes each eigenvalue to the block holding most of its eigenvector.
    pub fn classify(&mut self, blocks: &[(String, Range<usize>)]) {
        let mut counts = vec![0; blocks.len()];
        for v in &self.vectors {
            let weight = |r: &Range<usize>| v[r.clone()].iter().map(|z| z.norm_sqr()).sum::<f64>();
            if let Some((k, _)) = blocks
                .iter()
                .enumerate()
                .map(|(k, (_, r))| (k, weight(r)))
                .max_by(|a, b| a.1.total_cmp(&b.1))
            {
                counts[k] += 1;
            }
        }
        self.block_counts = blocks.iter().map(|(n, _)| n.clone()).zip(counts).collect();
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,re,im,residual\n");
        for (i, (l, r)) in self.eigenvalues.iter().zip(&self.residuals).enumerate() {
            let _ = writeln!(out, "{i},{:e},{:e},{:e}", l.re, l.im, r);
        }
        out
    }
}

/// Deterministic start vector.
fn start_vector(n: usize, seed: usize) -> Mat<c64> {
    Mat::from_fn(n, 1, |i, _| {
        let t = (i * 7 + seed * 13 + 1) as f64;
        c64::new((t * 0.618_034).sin(), (t * 1.324_718).cos())
    })
}

fn col_norm(x: MatRef<'_, c64>) -> f64 {
    x.norm_l2()
}

fn cmul(a: &SysMat, x: MatRef<'_, c64>) -> Mat<c64> {
    let n = x.nrows();
    let re = Mat::from_fn(n, x.ncols(), |i, j| x[(i, j)].re);
    let im = Mat::from_fn(n, x.ncols(), |i, j| x[(i, j)].im);
    let (ar, ai) = (a.mul_mat(re.as_ref()), a.mul_mat(im.as_ref()));
    Mat::from_fn(a.nrows(), x.ncols(), |i, j| c64::new(ar[(i, j)], ai[(i, j)]))
}

/// `‖A x − λ E x‖ / ‖x‖`
pub fn eigen_residual(a: &SysMat, e: &SysMat, lambda: c64, x: &[c64]) -> f64 {
    let xm = Mat::from_fn(x.len(), 1, |i, _| x[i]);
    let r = cmul(a, xm.as_ref()) - cmul(e, xm.as_ref()) * faer::Scale(lambda);
    col_norm(r.as_ref()) / col_norm(xm.as_ref())
}

/// Arnoldi factorization `op V_k = V_{k+1} H` with double Gram–Schmidt.
fn arnoldi(op: &dyn Fn(MatRef<'_, c64>) -> Result<Mat<c64>>, v0: Mat<c64>, m: usize) -> Result<(Mat<c64>, Mat<c64>)> {
    let n = v0.nrows();
    let m = m.min(n);
    let mut v = Mat::<c64>::zeros(n, m + 1);
    let mut h = Mat::<c64>::zeros(m + 1, m);
    let nv = col_norm(v0.as_ref());
    v.as_mut().col_mut(0).copy_from(v0.col(0) * faer::Scale(c64::new(1.0 / nv, 0.0)));
    let mut k = m;
    for j in 0..m {
        let mut w = op(v.as_ref().subcols(j, 1))?;
        for _ in 0..2 {
            let basis = v.as_ref().subcols(0, j + 1);
            let coef = basis.adjoint() * &w;
            w -= basis * &coef;
            for i in 0..=j {
                h[(i, j)] += coef[(i, 0)];
            }
        }
        let beta = col_norm(w.as_ref());
        h[(j + 1, j)] = c64::new(beta, 0.0);
        if beta < 1e-14 * h.as_ref().submatrix(0, j, j + 1, 1).norm_l2().max(1e-300) {
            k = j + 1;
            break;
        }
        v.as_mut().col_mut(j + 1).copy_from(w.col(0) * faer::Scale(c64::new(1.0 / beta, 0.0)));
    }
    Ok((
        v.as_ref().subcols(0, k + 1).to_owned(),
        h.as_ref().submatrix(0, 0, k + 1, k).to_owned(),
    ))
}

/// Inverse iteration at a fixed shift; returns the refined eigenpair.
fn refine(a: &SysMat, e: &SysMat, lambda: c64, x0: Mat<c64>, tol: f64) -> Result<(c64, Vec<c64>, f64)> {
    let f = ShiftedFactor::new(a, e, lambda)?;
    let mut x = x0;
    let mut lam = lambda;
    let mut res = f64::INFINITY;
    for _ in 0..6 {
        let ex = cmul(e, x.as_ref());
        let y = f.solve(ex.as_ref())?;
        let ny = col_norm(y.as_ref());
        x = y * faer::Scale(c64::new(1.0 / ny, 0.0));
        let ax = cmul(a, x.as_ref());
        let ex = cmul(e, x.as_ref());
        let num = (x.adjoint() * &ax)[(0, 0)];
        let den = (x.adjoint() * &ex)[(0, 0)];
        if den.norm() > 0.0 {
            lam = num / den;
        }
        res = col_norm((ax - ex * faer::Scale(lam)).as_ref());
        if res <= tol {
            break;
        }
    }
    Ok((lam, x.col(0).iter().copied().collect(), res))
}

/// Eliminates states whose row and column of `E` vanish (`A₂₂` regular):
/// `(A₁₁ − A₁₂A₂₂⁻¹A₂₁, E₁₁)` has exactly the finite spectrum of the pencil.
/// A dense QZ-free solver cannot separate the infinite eigenvalues of such
/// pencils reliably; they scatter to |λ| ~ 1e8 once feedback blocks are added.
fn algebraic_reduction(ad: &Mat<f64>, ed: &Mat<f64>) -> Option<(Vec<usize>, Vec<usize>, Mat<f64>, Mat<f64>, Mat<f64>)> {
    let n = ad.nrows();
    let (alg, keep): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&i| (0..n).all(|j| ed[(i, j)] == 0.0 && ed[(j, i)] == 0.0));
    if alg.is_empty() || keep.is_empty() {
        return None;
    }
    let sub = |r: &[usize], c: &[usize], m: &Mat<f64>| Mat::from_fn(r.len(), c.len(), |i, j| m[(r[i], c[j])]);
    let a22 = sub(&alg, &alg, ad);
    let x = crate::linalg::solve(a22.as_ref(), sub(&alg, &keep, ad).as_ref());
    if !x.col_iter().all(|c| c.iter().all(|v| v.is_finite())) {
        return None;
    }
    let reduced = sub(&keep, &keep, ad) - sub(&keep, &alg, ad) * &x;
    let mass = sub(&keep, &keep, ed);
    Some((keep, alg, reduced, mass, x))
}

fn dense_spectrum(a: &SysMat, e: &SysMat, margin: f64, tol: f64) -> Result<SpectralReport> {
    let n = a.nrows();
    let (ad, ed) = (a.to_dense(), e.to_dense());
    if let Some((keep, alg, ar, er, x)) = algebraic_reduction(&ad, &ed) {
        let inner = dense_spectrum(&SysMat::Dense(ar), &SysMat::Dense(er), margin, f64::INFINITY)?;
        let mut report = SpectralReport {
            eigenvalues: vec![],
            vectors: vec![],
            residuals: vec![],
            margin,
            method: format!("dense eigensolver, n = {n}, {} algebraic states eliminated", alg.len()),
            block_counts: vec![],
        };
        let xc = to_complex(x.as_ref());
        let mut bad = Vec::new();
        for (l, v1) in inner.eigenvalues.into_iter().zip(inner.vectors) {
            let v1m = Mat::from_fn(v1.len(), 1, |i, _| v1[i]);
            let v2 = &xc * &v1m;
            let mut v = vec![c64::new(0.0, 0.0); n];
            for (i, &k) in keep.iter().enumerate() {
                v[k] = v1[i];
            }
            for (i, &k) in alg.iter().enumerate() {
                v[k] = -v2[(i, 0)];
            }
            let nv = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            v.iter_mut().for_each(|z| *z /= nv);
            let r = eigen_residual(a, e, l, &v);
            if r > tol {
                bad.push(r);
            }
            report.eigenvalues.push(l);
            report.vectors.push(v);
            report.residuals.push(r);
        }
        if !bad.is_empty() {
            return Err(Error::Eigen { residuals: bad });
        }
        sort_report(&mut report);
        return Ok(report);
    }
    let identity_mass = (0..n).all(|i| (0..n).all(|j| ed[(i, j)] == if i == j { 1.0 } else { 0.0 }));
    let mut pairs: Vec<(c64, Vec<c64>)> = Vec::new();
    if identity_mass {
        let eig = ad.eigen().map_err(|_| Error::Eigen { residuals: vec![] })?;
        for j in 0..n {
            let l = eig.S()[j];
            if l.re > -margin {
                pairs.push((l, eig.U().col(j).iter().copied().collect()));
            }
        }
    } else {
        // λ = σ + 1/μ for eigenpairs of T = (A − σE)⁻¹E; μ = 0 is an infinite eigenvalue.
        let mut done = false;
        for sigma in [-0.731_f64, 0.419, -2.113] {
            let m = Mat::from_fn(n, n, |i, j| ad[(i, j)] - sigma * ed[(i, j)]);
            let t = crate::linalg::solve(m.as_ref(), ed.as_ref());
            if !t.col_iter().all(|c| c.iter().all(|v| v.is_finite())) {
                continue;
            }
            let eig = t.eigen().map_err(|_| Error::Eigen { residuals: vec![] })?;
            let mu_max = (0..n).map(|j| eig.S()[j].norm()).fold(0.0, f64::max);
            // The n − rank E smallest |μ| belong to infinite eigenvalues. In
            // floating point they scatter to |μ| ~ 1e-10 rather than zero, so
            // a magnitude threshold alone lets them through as huge λ.
            let sv = ed.singular_values().map_err(|_| Error::Eigen { residuals: vec![] })?;
            let rank = sv.iter().filter(|&&v| v > 1e-12 * sv[0].max(1e-300)).count();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| eig.S()[i].norm().total_cmp(&eig.S()[j].norm()));
            let mut infinite = vec![false; n];
            for &j in &order[..n - rank] {
                infinite[j] = true;
            }
            for j in 0..n {
                let mu = eig.S()[j];
                if infinite[j] || mu.norm() <= 1e-12 * mu_max.max(1e-300) {
                    continue;
                }
                let l = c64::new(sigma, 0.0) + c64::new(1.0, 0.0) / mu;
                if l.re > -margin {
                    pairs.push((l, eig.U().col(j).iter().copied().collect()));
                }
            }
            done = true;
            break;
        }
        if !done {
            return Err(Error::Solve("no regular real shift found for the dense pencil".into()));
        }
    }
    let mut report = SpectralReport {
        eigenvalues: vec![],
        vectors: vec![],
        residuals: vec![],
        margin,
        method: format!("dense eigensolver, n = {n}"),
        block_counts: vec![],
    };
    let mut bad = Vec::new();
    for (l, mut x) in pairs {
        let nx = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        x.iter_mut().for_each(|z| *z /= nx);
        let r = eigen_residual(a, e, l, &x);
        if r > tol {
            bad.push(r);
        }
        report.eigenvalues.push(l);
        report.vectors.push(x);
        report.residuals.push(r);
    }
    if !bad.is_empty() {
        return Err(Error::Eigen { residuals: bad });
    }
    sort_report(&mut report);
    Ok(report)
}

fn sort_report(r: &mut SpectralReport) {
    let mut idx: Vec<usize> = (0..r.eigenvalues.len()).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (r.eigenvalues[i], r.eigenvalues[j]);
        b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im))
    });
    r.eigenvalues = idx.iter().map(|&i| r.eigenvalues[i]).collect();
    r.vectors = idx.iter().map(|&i| r.vectors[i].clone()).collect();
    r.residuals = idx.iter().map(|&i| r.residuals[i]).collect();
}

/// All computed generalized eigenvalues with `Re λ > −margin`.
///
/// Large pencils are searched around the configured shifts; the report's
/// `method` records, per shift, the radius within which the Krylov space
/// resolved the spectrum.
pub fn unstable_spectrum(e: &SysMat, a: &SysMat, margin: f64, opts: &EigenOptions) -> Result<SpectralReport> {
    if !(margin >= 0.0) {
        return Err(Error::Invariant("spectral margin must be non-negative".into()));
    }
    let n = a.nrows();
    if e.nrows() != n || a.ncols() != n || e.ncols() != n {
        return Err(Error::dim("pencil (A, E)", n, e.nrows()));
    }
    if n == 0 {
        return Ok(SpectralReport {
            eigenvalues: vec![],
            vectors: vec![],
            residuals: vec![],
            margin,
            method: "empty".into(),
            block_counts: vec![],
        });
    }
    if n <= opts.dense_limit {
        return dense_spectrum(a, e, margin, opts.residual_tol);
    }
    let mut found: Vec<(c64, Vec<c64>, f64)> = Vec::new();
    let mut failures = Vec::new();
    let mut method = format!("shift-invert Arnoldi, n = {n}, k = {}", opts.krylov_dim);
    for (si, s) in opts.shifts.iter().enumerate() {
        let sigma = c64::new(s[0], s[1]);
        let f = ShiftedFactor::new(a, e, sigma)?;
        let op = |x: MatRef<'_, c64>| f.solve(cmul(e, x).as_ref());
        // Start inside the range of the operator so infinite modes are filtered.
        let v0 = op(start_vector(n, si).as_ref())?;
        let (v, h) = arnoldi(&op, v0, opts.krylov_dim)?;
        let k = h.ncols();
        let hk = h.as_ref().submatrix(0, 0, k, k).to_owned();
        let beta = if h.nrows() > k { h[(k, k - 1)].norm() } else { 0.0 };
        let eig = hk.eigen().map_err(|_| Error::Eigen { residuals: vec![] })?;
        let mu_max = (0..k).map(|j| eig.S()[j].norm()).fold(0.0, f64::max);
        // Distance from σ to the nearest Ritz value that has not converged.
        let mut radius = f64::INFINITY;
        for j in 0..k {
            let mu = eig.S()[j];
            if mu.norm() <= 1e-10 * mu_max {
                continue;
            }
            let y = eig.U().col(j);
            let est = beta * y[k - 1].norm() / y.norm_l2();
            let converged = est <= 1e-6 * mu.norm();
            if !converged {
                radius = radius.min(1.0 / mu.norm());
            }
            let l = sigma + c64::new(1.0, 0.0) / mu;
            if l.re <= -margin - 0.1 || l.im < -1e-12 || !converged {
                continue;
            }
            if found.iter().any(|(m, _, _)| (m - l).norm() <= 1e-6 * (1.0 + l.norm())) {
                continue;
            }
            let x0 = v.as_ref().subcols(0, k) * y.as_mat();
            let (lam, x, res) = refine(a, e, l, x0, opts.residual_tol)?;
            if lam.re <= -margin {
                continue;
            }
            if found.iter().any(|(m, _, _)| (m - lam).norm() <= 1e-8 * (1.0 + lam.norm())) {
                continue;
            }
            if res > opts.residual_tol {
                failures.push(res);
            }
            found.push((lam, x, res));
        }
        let _ = write!(method, "; σ = {}{:+}i radius {:.3}", sigma.re, sigma.im, radius);
    }
    if !failures.is_empty() {
        return Err(Error::Eigen { residuals: failures });
    }
    let mut report = SpectralReport {
        eigenvalues: vec![],
        vectors: vec![],
        residuals: vec![],
        margin,
        method,
        block_counts: vec![],
    };
    for (l, x, r) in found {
        if l.im.abs() > 1e-10 * (1.0 + l.norm()) {
            report.eigenvalues.push(l.conj());
            report.vectors.push(x.iter().map(|z| z.conj()).collect());
            report.residuals.push(r);
        }
        report.eigenvalues.push(l);
        report.vectors.push(x);
        report.residuals.push(r);
    }
    sort_report(&mut report);
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PbhSide {
    /// `N(λE − A) ∩ N(C) = {0}`, tested with `M = C`.
    Detectability,
    /// The dual test on left eigenvectors, with `M = B`.
    Stabilizability,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HautusVerdict {
    pub eigenvalue: [f64; 2],
    /// Dimension of the computed eigenspace.
    pub multiplicity: usize,
    pub sigma_min: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Orthonormal basis of `N(A − λE)` (right) or of the left null space,
/// returned conjugated so that `wᴴ(A − λE) = 0` for every column `w`.
pub fn eigenspace(a: &SysMat, e: &SysMat, lambda: c64, side: PbhSide) -> Result<Mat<c64>> {
    let n = a.nrows();
    let scale = a.frobenius() + lambda.norm() * e.frobenius();
    let kernel_tol = 1e-7 * scale.max(1e-300);
    if n <= 400 {
        let (ad, ed) = (to_complex(a.to_dense().as_ref()), to_complex(e.to_dense().as_ref()));
        let mut k = ad - ed * faer::Scale(lambda);
        if side == PbhSide::Stabilizability {
            k = k.adjoint().to_owned();
        }
        let svd = k.svd().map_err(|_| Error::Eigen { residuals: vec![] })?;
        let s = svd.S().column_vector();
        let cols: Vec<usize> = (0..n).filter(|&i| s[i].re <= kernel_tol).collect();
        return Ok(Mat::from_fn(n, cols.len(), |i, j| svd.V()[(i, cols[j])]));
    }
    // Block inverse iteration at λ, then a Rayleigh–Ritz selection of the
    // directions that A − λE annihilates.
    let f = ShiftedFactor::new(a, e, lambda)?;
    let q = 4.min(n);
    let mut x = Mat::from_fn(n, q, |i, j| start_vector(n, 31 + j)[(i, 0)]);
    for _ in 0..3 {
        x = match side {
            PbhSide::Detectability => f.solve(x.as_ref())?,
            PbhSide::Stabilizability => f.solve_transpose(x.as_ref())?,
        };
        x = x.qr().compute_thin_Q();
    }
    let kx = match side {
        PbhSide::Detectability => cmul(a, x.as_ref()) - cmul(e, x.as_ref()) * faer::Scale(lambda),
        PbhSide::Stabilizability => {
            let at = SysMat::Sparse(crate::sparse::transpose(&a.to_sparse()));
            let et = SysMat::Sparse(crate::sparse::transpose(&e.to_sparse()));
            cmul(&at, x.as_ref()) - cmul(&et, x.as_ref()) * faer::Scale(lambda)
        }
    };
    let svd = kx.svd().map_err(|_| Error::Eigen { residuals: vec![] })?;
    let s = svd.S().column_vector();
    let cols: Vec<usize> = (0..q).filter(|&i| s[i].re <= kernel_tol).collect();
    let basis = &x * Mat::from_fn(q, cols.len(), |i, j| svd.V()[(i, cols[j])]);
    Ok(match side {
        PbhSide::Detectability => basis,
        // (A − λE)ᵀ z = 0  ⇔  w = z̄ satisfies wᴴ(A − λE) = 0.
        PbhSide::Stabilizability => Mat::from_fn(n, basis.ncols(), |i, j| basis[(i, j)].conj()),
    })
}

/// Smallest gain of a `rows × k` matrix acting on `ℂᵏ`.
fn min_gain(g: MatRef<'_, c64>) -> Result<f64> {
    let k = g.ncols();
    if k == 0 {
        return Ok(f64::INFINITY);
    }
    if k > g.nrows() {
        return Ok(0.0);
    }
    let s = g.singular_values().map_err(|_| Error::Eigen { residuals: vec![] })?;
    Ok(s[k - 1])
}

/// PBH test at each candidate eigenvalue. `m` is `C` (p×n) for
/// detectability and `B` (n×m) for stabilizability.
pub fn hautus_check(
    a: &SysMat,
    e: &SysMat,
    m: MatRef<'_, f64>,
    side: PbhSide,
    candidates: &[c64],
) -> Result<Vec<HautusVerdict>> {
    let n = a.nrows();
    let (mn, m_norm) = match side {
        PbhSide::Detectability => (m.ncols(), spectral_norm(m)?),
        PbhSide::Stabilizability => (m.nrows(), spectral_norm(m)?),
    };
    if mn != n {
        return Err(Error::dim("Hautus test matrix", n, mn));
    }
    let threshold = 1e-8 * m_norm;
    let mc = to_complex(m);
    candidates
        .iter()
        .map(|&l| {
            let v = eigenspace(a, e, l, side)?;
            let g = match side {
                PbhSide::Detectability => &mc * &v,
                // wᴴ B = 0 for all w in span V  ⇔  Bᵀ V̄ = 0
                PbhSide::Stabilizability => mc.transpose() * Mat::from_fn(n, v.ncols(), |i, j| v[(i, j)].conj()),
            };
            let sigma = min_gain(g.as_ref())?;
            if v.ncols() == 0 {
                log::warn!("λ = {l} has no computed eigenspace; treating it as regular");
            }
            Ok(HautusVerdict {
                eigenvalue: [l.re, l.im],
                multiplicity: v.ncols(),
                sigma_min: sigma,
                threshold,
                pass: sigma > threshold,
            })
        })
        .collect()
}

fn spectral_norm(m: MatRef<'_, f64>) -> Result<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0.0);
    }
    let s = m.singular_values().map_err(|_| Error::Eigen { residuals: vec![] })?;
    Ok(s[0])
}

/// One σ_min-type finding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    pub item: String,
    pub point: [f64; 2],
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub plant_unstable: Vec<[f64; 2]>,
    pub actuator_unstable: Vec<[f64; 2]>,
    pub sensor_unstable: Vec<[f64; 2]>,
    pub items: Vec<CheckItem>,
    pub method: String,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|i| i.pass)
    }

    pub fn failures(&self) -> Vec<&CheckItem> {
        self.items.iter().filter(|i| !i.pass).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("item,re,im,value,threshold,pass\n");
        for i in &self.items {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{}",
                i.item, i.point[0], i.point[1], i.value, i.threshold, i.pass
            );
        }
        out
    }
}

fn dense_tf(a: &Mat<f64>, b: &Mat<f64>, c: &Mat<f64>, s: c64) -> Result<Mat<c64>> {
    let n = a.nrows();
    crate::linalg::transfer_function(
        &SysMat::Dense(Mat::identity(n, n)),
        &SysMat::Dense(a.clone()),
        b.as_ref(),
        c.as_ref(),
        s,
    )
}

/// Numerical checks of the disjointness, detectability, stabilizability and
/// transmission-zero conditions of the cascade. Findings never abort: a
/// resolvent that cannot be evaluated is reported as a failed item.
pub fn cascade_assumption_check(
    plant: &DiscretePlant,
    acts: &ActuatorSensor,
    frequencies: &[f64],
    opts: &EigenOptions,
) -> Result<AssumptionReport> {
    acts.validate()?;
    let mut rep = AssumptionReport::default();
    let spec = unstable_spectrum(&plant.e, &plant.a, 0.0, opts)?;
    rep.method = spec.method.clone();
    let closed_rhp = |a: &Mat<f64>| -> Result<Vec<c64>> {
        Ok(crate::linalg::eigenvalues(a.as_ref())?.into_iter().filter(|l| l.re >= -1e-12).collect())
    };
    let lb = spec.eigenvalues.clone();
    let la = closed_rhp(&acts.a_a)?;
    let ls = closed_rhp(&acts.a_s)?;
    let pt = |l: &c64| [l.re, l.im];
    rep.plant_unstable = lb.iter().map(pt).collect();
    rep.actuator_unstable = la.iter().map(pt).collect();
    rep.sensor_unstable = ls.iter().map(pt).collect();

    // (i) pairwise disjoint unstable spectra.
    let sep = 1e-8;
    for (name, x, y) in [("disjoint b/a", &lb, &la), ("disjoint b/s", &lb, &ls), ("disjoint a/s", &la, &ls)] {
        let gap = x
            .iter()
            .flat_map(|p| y.iter().map(move |q| (p - q).norm()))
            .fold(f64::INFINITY, f64::min);
        rep.items.push(CheckItem {
            item: name.into(),
            point: [0.0, 0.0],
            value: gap,
            threshold: sep,
            pass: gap > sep,
        });
    }

    let dense = |m: &Mat<f64>| SysMat::Dense(m.clone());
    let eye = |n: usize| SysMat::Dense(Mat::identity(n, n));
    let push = |rep: &mut AssumptionReport, item: &str, l: c64, value: f64, threshold: f64| {
        rep.items.push(CheckItem {
            item: item.into(),
            point: [l.re, l.im],
            value,
            threshold,
            pass: value > threshold,
        });
    };

    // (ii) sensor detectability, actuator stabilizability.
    let ns = acts.a_s.nrows();
    let na = acts.a_a.nrows();
    for v in hautus_check(&dense(&acts.a_s), &eye(ns), acts.c_s.as_ref(), PbhSide::Detectability, &ls)? {
        push(&mut rep, "det (A_s,C_s)", c64::new(v.eigenvalue[0], v.eigenvalue[1]), v.sigma_min, v.threshold);
    }
    for v in hautus_check(&dense(&acts.a_a), &eye(na), acts.b_a.as_ref(), PbhSide::Stabilizability, &la)? {
        push(&mut rep, "stab (A_a,B_a)", c64::new(v.eigenvalue[0], v.eigenvalue[1]), v.sigma_min, v.threshold);
    }

    let cb = to_complex(plant.c.as_ref());
    let bb = to_complex(plant.b.as_ref());
    let ca = to_complex(acts.c_a.as_ref());
    let bs = to_complex(acts.b_s.as_ref());
    let thr = |g: &Mat<c64>| 1e-8 * g.norm_l2().max(1e-300);

    // (iii) plant eigenvalues seen through the sensor / driven through the actuator.
    for &l in &lb {
        match dense_tf(&acts.a_s, &acts.b_s, &acts.c_s, l) {
            Ok(ps) => {
                let v = eigenspace(&plant.a, &plant.e, l, PbhSide::Detectability)?;
                let g = &ps * &cb * &v;
                push(&mut rep, "det P_s C_b", l, min_gain(g.as_ref())?, thr(&(&ps * &cb)));
            }
            Err(_) => push(&mut rep, "det P_s C_b", l, 0.0, 0.0),
        }
        match dense_tf(&acts.a_a, &acts.b_a, &acts.c_a, l) {
            Ok(pa) => {
                let w = eigenspace(&plant.a, &plant.e, l, PbhSide::Stabilizability)?;
                // wᴴ B_b P_a(λ) for w in the left eigenspace.
                let g = w.adjoint() * &bb * &pa;
                push(&mut rep, "stab B_b P_a", l, min_gain(g.adjoint().to_owned().as_ref())?, thr(&(&bb * &pa)));
            }
            Err(_) => push(&mut rep, "stab B_b P_a", l, 0.0, 0.0),
        }
    }

    // (iv) actuator / sensor eigenvalues through the whole chain.
    for &l in &la {
        let chain = plant
            .transfer(l)
            .and_then(|pb| Ok((pb, dense_tf(&acts.a_s, &acts.b_s, &acts.c_s, l)?)));
        match chain {
            Ok((pb, ps)) => {
                let v = eigenspace(&dense(&acts.a_a), &eye(na), l, PbhSide::Detectability)?;
                let g = &ps * &pb * &ca * &v;
                push(&mut rep, "det P_s P_b C_a", l, min_gain(g.as_ref())?, thr(&(&ps * &pb * &ca)));
            }
            Err(_) => push(&mut rep, "det P_s P_b C_a", l, 0.0, 0.0),
        }
    }
    for &l in &ls {
        let chain = plant
            .transfer(l)
            .and_then(|pb| Ok((pb, dense_tf(&acts.a_a, &acts.b_a, &acts.c_a, l)?)));
        match chain {
            Ok((pb, pa)) => {
                let w = eigenspace(&dense(&acts.a_s), &eye(ns), l, PbhSide::Stabilizability)?;
                let g = w.adjoint() * &bs * &pb * &pa;
                push(&mut rep, "stab B_s P_b P_a", l, min_gain(g.adjoint().to_owned().as_ref())?, thr(&(&bs * &pb * &pa)));
            }
            Err(_) => push(&mut rep, "stab B_s P_b P_a", l, 0.0, 0.0),
        }
    }

    // Transmission zeros: the cascade transfer matrix must be onto at iω_k.
    for &w in frequencies {
        let s = c64::new(0.0, w);
        let p = plant.transfer(s).and_then(|pb| {
            let pa = dense_tf(&acts.a_a, &acts.b_a, &acts.c_a, s)?;
            let ps = dense_tf(&acts.a_s, &acts.b_s, &acts.c_s, s)?;
            Ok(&ps * &pb * &pa)
        });
        match p {
            Ok(p) => {
                let sv = p.singular_values().map_err(|_| Error::Eigen { residuals: vec![] })?;
                let rows = p.nrows();
                let value = if rows > sv.len() { 0.0 } else { sv[rows - 1] };
                push(&mut rep, "onto P(iω)", s, value, 1e-8 * sv.first().copied().unwrap_or(0.0));
            }
            Err(_) => push(&mut rep, "onto P(iω)", s, 0.0, 0.0),
        }
    }
    Ok(rep)
}
