//! Thin helpers over faer's compressed-column matrices.

use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

pub type SpMat = SparseColMat<usize, f64>;

/// Accumulates `(row, col, value)` entries; duplicates are summed on build.
#[derive(Clone, Debug)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<Triplet<usize, usize, f64>>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if val != 0.0 {
            self.entries.push(Triplet::new(row, col, val));
        }
    }

    pub fn add_sparse(&mut self, a: &SpMat, row_off: usize, col_off: usize, scale: f64) {
        for t in a.triplet_iter() {
            self.push(t.row + row_off, t.col + col_off, scale * *t.val);
        }
    }

    pub fn add_dense(&mut self, a: faer::MatRef<'_, f64>, row_off: usize, col_off: usize, scale: f64) {
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                self.push(i + row_off, j + col_off, scale * a[(i, j)]);
            }
        }
    }

    pub fn build(self) -> SpMat {
        SpMat::try_new_from_triplets(self.nrows, self.ncols, &self.entries)
            .expect("triplet indices are in range")
    }
}

pub fn zeros(nrows: usize, ncols: usize) -> SpMat {
    TripletBuilder::new(nrows, ncols).build()
}

pub fn identity(n: usize) -> SpMat {
    let mut b = TripletBuilder::with_capacity(n, n, n);
    for i in 0..n {
        b.push(i, i, 1.0);
    }
    b.build()
}

/// `y += alpha * A x`
pub fn spmv_acc(a: &SpMat, x: &[f64], alpha: f64, y: &mut [f64]) {
    let a = a.as_ref();
    let (col_ptr, row_idx, val) = (a.col_ptr(), a.row_idx(), a.val());
    for j in 0..a.ncols() {
        let xj = alpha * x[j];
        if xj == 0.0 {
            continue;
        }
        for k in col_ptr[j]..col_ptr[j + 1] {
            y[row_idx[k]] += val[k] * xj;
        }
    }
}

pub fn spmv(a: &SpMat, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    spmv_acc(a, x, 1.0, &mut y);
    y
}

/// `Aᵀ x`
pub fn spmv_t(a: &SpMat, x: &[f64]) -> Vec<f64> {
    let a = a.as_ref();
    let (col_ptr, row_idx, val) = (a.col_ptr(), a.row_idx(), a.val());
    (0..a.ncols())
        .map(|j| (col_ptr[j]..col_ptr[j + 1]).map(|k| val[k] * x[row_idx[k]]).sum())
        .collect()
}

pub fn to_dense(a: &SpMat) -> Mat<f64> {
    let mut m = Mat::zeros(a.nrows(), a.ncols());
    for t in a.triplet_iter() {
        m[(t.row, t.col)] += *t.val;
    }
    m
}

pub fn transpose(a: &SpMat) -> SpMat {
    let mut b = TripletBuilder::with_capacity(a.ncols(), a.nrows(), a.compute_nnz());
    for t in a.triplet_iter() {
        b.push(t.col, t.row, *t.val);
    }
    b.build()
}

/// `alpha * A + beta * B` for equally shaped matrices.
pub fn axpby(alpha: f64, a: &SpMat, beta: f64, b: &SpMat) -> SpMat {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut t = TripletBuilder::with_capacity(a.nrows(), a.ncols(), a.compute_nnz() + b.compute_nnz());
    t.add_sparse(a, 0, 0, alpha);
    t.add_sparse(b, 0, 0, beta);
    t.build()
}

/// Sparse times dense.
pub fn sp_dense(a: &SpMat, x: faer::MatRef<'_, f64>) -> Mat<f64> {
    let mut y = Mat::zeros(a.nrows(), x.ncols());
    let ar = a.as_ref();
    let (col_ptr, row_idx, val) = (ar.col_ptr(), ar.row_idx(), ar.val());
    for c in 0..x.ncols() {
        for j in 0..ar.ncols() {
            let xj = x[(j, c)];
            if xj == 0.0 {
                continue;
            }
            for k in col_ptr[j]..col_ptr[j + 1] {
                y[(row_idx[k], c)] += val[k] * xj;
            }
        }
    }
    y
}

/// Bilinear form `xᵀ A y`.
pub fn quad_form(a: &SpMat, x: &[f64], y: &[f64]) -> f64 {
    spmv(a, y).iter().zip(x).map(|(p, q)| p * q).sum()
}

pub fn max_abs(a: &SpMat) -> f64 {
    a.triplet_iter().fold(0.0, |m, t| m.max(t.val.abs()))
}
