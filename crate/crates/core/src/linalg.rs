//! Factorizations and dense kernels shared by the solver stages.

use faer::linalg::solvers::{DenseSolveCore, PartialPivLu, Solve};
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};
use crate::sparse::SpMat;

/// Sparse LU with partial pivoting for real or complex matrices.
pub struct SparseLu<T: faer::traits::ComplexField> {
    lu: Lu<usize, T>,
    n: usize,
}

impl SparseLu<f64> {
    pub fn factor(a: &SpMat) -> Result<Self> {
        let lu = a.sp_lu().map_err(|e| Error::Solve(format!("sparse LU: {e:?}")))?;
        Ok(SparseLu { lu, n: a.nrows() })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(x.as_mut());
        finite(x.col(0).iter().copied().collect())
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_transpose_in_place(x.as_mut());
        finite(x.col(0).iter().copied().collect())
    }

    pub fn solve_mat(&self, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
        let mut x = b.to_owned();
        self.lu.solve_in_place(x.as_mut());
        if x.col_iter().all(|c| c.iter().all(|v| v.is_finite())) {
            Ok(x)
        } else {
            Err(Error::Solve("non-finite solution (singular factor)".into()))
        }
    }
}

impl SparseLu<c64> {
    /// Factors `A − σE`.
    pub fn factor_shifted(a: &SpMat, e: &SpMat, sigma: c64) -> Result<Self> {
        let mut trips: Vec<Triplet<usize, usize, c64>> =
            a.triplet_iter().map(|t| Triplet::new(t.row, t.col, c64::new(*t.val, 0.0))).collect();
        trips.extend(e.triplet_iter().map(|t| Triplet::new(t.row, t.col, -sigma * *t.val)));
        let m = SparseColMat::<usize, c64>::try_new_from_triplets(a.nrows(), a.ncols(), &trips)
            .map_err(|e| Error::Solve(format!("{e:?}")))?;
        let lu = m.sp_lu().map_err(|e| Error::Solve(format!("complex sparse LU: {e:?}")))?;
        Ok(SparseLu { lu, n: a.nrows() })
    }

    pub fn solve_mat(&self, b: MatRef<'_, c64>) -> Result<Mat<c64>> {
        let mut x = b.to_owned();
        self.lu.solve_in_place(x.as_mut());
        if x.col_iter().all(|c| c.iter().all(|v| v.re.is_finite() && v.im.is_finite())) {
            Ok(x)
        } else {
            Err(Error::Solve("non-finite solution (singular shifted factor)".into()))
        }
    }

    pub fn solve_transpose_mat(&self, b: MatRef<'_, c64>) -> Result<Mat<c64>> {
        let mut x = b.to_owned();
        self.lu.solve_transpose_in_place(x.as_mut());
        Ok(x)
    }
}

/// System matrix kept sparse (finite-element blocks) or dense (projected
/// or reduced models).
#[derive(Clone, Debug)]
pub enum SysMat {
    Sparse(SpMat),
    Dense(Mat<f64>),
}

impl SysMat {
    pub fn nrows(&self) -> usize {
        match self {
            SysMat::Sparse(m) => m.nrows(),
            SysMat::Dense(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            SysMat::Sparse(m) => m.ncols(),
            SysMat::Dense(m) => m.ncols(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, SysMat::Sparse(_))
    }

    pub fn to_dense(&self) -> Mat<f64> {
        match self {
            SysMat::Sparse(m) => crate::sparse::to_dense(m),
            SysMat::Dense(m) => m.clone(),
        }
    }

    /// Sparse view; dense matrices are converted entry by entry.
    pub fn to_sparse(&self) -> SpMat {
        match self {
            SysMat::Sparse(m) => m.clone(),
            SysMat::Dense(m) => {
                let mut b = crate::sparse::TripletBuilder::new(m.nrows(), m.ncols());
                b.add_dense(m.as_ref(), 0, 0, 1.0);
                b.build()
            }
        }
    }

    /// `y += alpha · M x`
    pub fn mul_acc(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        match self {
            SysMat::Sparse(m) => crate::sparse::spmv_acc(m, x, alpha, y),
            SysMat::Dense(m) => {
                for j in 0..m.ncols() {
                    let xj = alpha * x[j];
                    if xj != 0.0 {
                        for (yi, mij) in y.iter_mut().zip(m.col(j).iter()) {
                            *yi += mij * xj;
                        }
                    }
                }
            }
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows()];
        self.mul_acc(x, 1.0, &mut y);
        y
    }

    /// `M X` for a dense block of columns.
    pub fn mul_mat(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        match self {
            SysMat::Sparse(m) => crate::sparse::sp_dense(m, x),
            SysMat::Dense(m) => m * x,
        }
    }

    pub fn frobenius(&self) -> f64 {
        match self {
            SysMat::Sparse(m) => m.triplet_iter().map(|t| t.val * t.val).sum::<f64>().sqrt(),
            SysMat::Dense(m) => m.norm_l2(),
        }
    }
}

/// Factorization of `A − σE` for repeated complex solves.
pub enum ShiftedFactor {
    Sparse(SparseLu<c64>),
    Dense(PartialPivLu<c64>),
}

impl ShiftedFactor {
    pub fn new(a: &SysMat, e: &SysMat, sigma: c64) -> Result<Self> {
        match (a, e) {
            (SysMat::Sparse(a), SysMat::Sparse(e)) => Ok(ShiftedFactor::Sparse(SparseLu::factor_shifted(a, e, sigma)?)),
            _ => {
                let (a, e) = (a.to_dense(), e.to_dense());
                let m = Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0) - sigma * e[(i, j)]);
                Ok(ShiftedFactor::Dense(m.partial_piv_lu()))
            }
        }
    }

    pub fn solve(&self, rhs: MatRef<'_, c64>) -> Result<Mat<c64>> {
        let x = match self {
            ShiftedFactor::Sparse(lu) => lu.solve_mat(rhs)?,
            ShiftedFactor::Dense(lu) => lu.solve(rhs),
        };
        if x.col_iter().all(|c| c.iter().all(|v| v.re.is_finite() && v.im.is_finite())) {
            Ok(x)
        } else {
            Err(Error::Solve("shifted operator is singular".into()))
        }
    }

    /// Solves `(A − σE)ᵀ X = rhs` (plain transpose, no conjugation).
    pub fn solve_transpose(&self, rhs: MatRef<'_, c64>) -> Result<Mat<c64>> {
        Ok(match self {
            ShiftedFactor::Sparse(lu) => lu.solve_transpose_mat(rhs)?,
            ShiftedFactor::Dense(lu) => lu.solve_transpose(rhs),
        })
    }
}

pub fn to_complex(a: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

/// `C (sE − A)⁻¹ B`.
pub fn transfer_function(
    e: &SysMat,
    a: &SysMat,
    b: MatRef<'_, f64>,
    c: MatRef<'_, f64>,
    s: c64,
) -> Result<Mat<c64>> {
    let f = ShiftedFactor::new(a, e, s)?;
    // (A − sE) X = B  ⇒  (sE − A)⁻¹B = −X
    let x = f.solve(to_complex(b).as_ref())?;
    let cc = to_complex(c);
    Ok(-(&cc * &x))
}

fn finite(x: Vec<f64>) -> Result<Vec<f64>> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Solve("non-finite solution (singular factor)".into()))
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn fro(a: MatRef<'_, f64>) -> f64 {
    a.norm_l2()
}

/// Dense inverse via partial-pivoting LU.
pub fn inverse(a: MatRef<'_, f64>) -> Mat<f64> {
    a.partial_piv_lu().inverse()
}

/// Solves `A X = B` densely.
pub fn solve(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    a.partial_piv_lu().solve(b)
}

/// Eigenvalues of a dense real matrix.
pub fn eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<c64>> {
    a.eigenvalues().map_err(|_| Error::Eigen { residuals: vec![] })
}

/// Largest real part of the spectrum.
pub fn spectral_abscissa(a: MatRef<'_, f64>) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(eigenvalues(a)?.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

/// `A + Aᵀ` halved.
pub fn symmetrize(a: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// Block matrix from a row-major grid of optional blocks; `None` is zero.
pub fn block(rows: &[usize], cols: &[usize], blocks: &[&[Option<MatRef<'_, f64>>]]) -> Mat<f64> {
    let nr: usize = rows.iter().sum();
    let nc: usize = cols.iter().sum();
    let mut out = Mat::zeros(nr, nc);
    let mut r0 = 0;
    for (bi, row) in blocks.iter().enumerate() {
        let mut c0 = 0;
        for (bj, b) in row.iter().enumerate() {
            if let Some(b) = b {
                assert_eq!((b.nrows(), b.ncols()), (rows[bi], cols[bj]), "block ({bi},{bj})");
                out.as_mut().submatrix_mut(r0, c0, rows[bi], cols[bj]).copy_from(b);
            }
            c0 += cols[bj];
        }
        r0 += rows[bi];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::TripletBuilder;

    #[test]
    fn sparse_lu_solves_real_and_shifted_systems() {
        let mut b = TripletBuilder::new(3, 3);
        for (i, j, v) in [(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (2, 2, 2.0), (2, 0, -1.0)] {
            b.push(i, j, v);
        }
        let a = b.build();
        let lu = SparseLu::factor(&a).unwrap();
        let x = lu.solve(&[1.0, 2.0, 3.0]).unwrap();
        let r = crate::sparse::spmv(&a, &x);
        assert!((r[0] - 1.0).abs() < 1e-14 && (r[1] - 2.0).abs() < 1e-14 && (r[2] - 3.0).abs() < 1e-14);

        let e = crate::sparse::identity(3);
        let sigma = c64::new(0.5, 1.0);
        let clu = SparseLu::factor_shifted(&a, &e, sigma).unwrap();
        let rhs = Mat::from_fn(3, 1, |i, _| c64::new(i as f64, 1.0));
        let x = clu.solve_mat(rhs.as_ref()).unwrap();
        let ad = crate::sparse::to_dense(&a);
        for i in 0..3 {
            let mut acc = -sigma * x[(i, 0)];
            for j in 0..3 {
                acc += x[(j, 0)] * ad[(i, j)];
            }
            assert!((acc - rhs[(i, 0)]).norm() < 1e-13);
        }
    }

    #[test]
    fn rotation_block_abscissa() {
        let a = faer::mat![[0.0621, 0.4908], [-0.4908, 0.0621]];
        let ev = eigenvalues(a.as_ref()).unwrap();
        for l in ev {
            assert!((l.re - 0.0621).abs() < 1e-14 && (l.im.abs() - 0.4908).abs() < 1e-14);
        }
    }
}
