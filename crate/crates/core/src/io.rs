//! Matrix Market and CSV input/output.
//!
//! Sparse matrices are written in `coordinate real general` format, dense
//! blocks in `array real general` (column-major). Floats are printed in the
//! shortest form that parses back to the same bits.

use std::fmt::Write as _;
use std::path::Path;

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg::SysMat;
use crate::sparse::{SpMat, TripletBuilder};

pub fn sparse_mtx(a: &SpMat) -> String {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    let trips: Vec<_> = a.triplet_iter().collect();
    let _ = writeln!(out, "{} {} {}", a.nrows(), a.ncols(), trips.len());
    for t in trips {
        let _ = writeln!(out, "{} {} {:e}", t.row + 1, t.col + 1, t.val);
    }
    out
}

pub fn dense_mtx(a: MatRef<'_, f64>) -> String {
    let mut out = String::from("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(out, "{} {}", a.nrows(), a.ncols());
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let _ = writeln!(out, "{:e}", a[(i, j)]);
        }
    }
    out
}

pub fn write_sparse_mtx(path: &Path, a: &SpMat) -> Result<()> {
    std::fs::write(path, sparse_mtx(a))?;
    Ok(())
}

pub fn write_dense_mtx(path: &Path, a: MatRef<'_, f64>) -> Result<()> {
    std::fs::write(path, dense_mtx(a))?;
    Ok(())
}

pub fn write_sysmat(path: &Path, a: &SysMat) -> Result<()> {
    match a {
        SysMat::Sparse(m) => write_sparse_mtx(path, m),
        SysMat::Dense(m) => write_dense_mtx(path, m.as_ref()),
    }
}

/// Reads either Matrix Market layout into a [`SysMat`].
pub fn read_mtx(path: &Path) -> Result<SysMat> {
    let text = std::fs::read_to_string(path)?;
    parse_mtx(&text).map_err(|reason| Error::Artifact {
        path: path.display().to_string(),
        reason,
    })
}

pub fn read_dense_mtx(path: &Path) -> Result<Mat<f64>> {
    Ok(read_mtx(path)?.to_dense())
}

fn parse_mtx(text: &str) -> std::result::Result<SysMat, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    let dense = if header.starts_with("%%MatrixMarket matrix array real general") {
        true
    } else if header.starts_with("%%MatrixMarket matrix coordinate real general") {
        false
    } else {
        return Err(format!("unsupported header `{header}`"));
    };
    let mut body = lines.filter(|l| !l.starts_with('%') && !l.trim().is_empty());
    let size: Vec<usize> = body
        .next()
        .ok_or("missing size line")?
        .split_whitespace()
        .map(|v| v.parse().map_err(|_| format!("bad size entry `{v}`")))
        .collect::<std::result::Result<_, _>>()?;
    let num = |v: &str| v.parse::<f64>().map_err(|_| format!("bad value `{v}`"));
    if dense {
        let [r, c] = size[..] else { return Err("array size needs two entries".into()) };
        let vals: Vec<f64> = body.map(|l| num(l.trim())).collect::<std::result::Result<_, _>>()?;
        if vals.len() != r * c {
            return Err(format!("expected {} values, found {}", r * c, vals.len()));
        }
        Ok(SysMat::Dense(Mat::from_fn(r, c, |i, j| vals[j * r + i])))
    } else {
        let [r, c, nnz] = size[..] else { return Err("coordinate size needs three entries".into()) };
        let mut b = TripletBuilder::with_capacity(r, c, nnz);
        let mut count = 0;
        for l in body {
            let f: Vec<&str> = l.split_whitespace().collect();
            let [i, j, v] = f[..] else { return Err(format!("malformed entry `{l}`")) };
            let i: usize = i.parse().map_err(|_| format!("bad row `{i}`"))?;
            let j: usize = j.parse().map_err(|_| format!("bad column `{j}`"))?;
            if i == 0 || j == 0 || i > r || j > c {
                return Err(format!("entry ({i}, {j}) out of range"));
            }
            b.push(i - 1, j - 1, num(v)?);
            count += 1;
        }
        if count != nnz {
            return Err(format!("expected {nnz} entries, found {count}"));
        }
        Ok(SysMat::Sparse(b.build()))
    }
}

/// Comma-separated table with a header row.
pub fn csv_table(header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Nodal snapshot `x,y,value` of one scalar field.
pub fn field_csv(coords: &[[f64; 2]], values: &[f64]) -> String {
    csv_table(
        &["x".into(), "y".into(), "value".into()],
        coords.iter().zip(values).map(|(p, v)| vec![p[0], p[1], *v]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_round_trip_is_exact() {
        let mut b = TripletBuilder::new(3, 4);
        b.push(0, 3, 1.0 / 3.0);
        b.push(2, 1, -2.5e-17);
        let a = b.build();
        let back = parse_mtx(&sparse_mtx(&a)).unwrap().to_dense();
        assert_eq!(back, crate::sparse::to_dense(&a));
    }

    #[test]
    fn dense_round_trip_is_exact() {
        let a = Mat::from_fn(3, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 7.0));
        assert_eq!(parse_mtx(&dense_mtx(a.as_ref())).unwrap().to_dense(), a);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(parse_mtx("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n").is_err());
        assert!(parse_mtx("hello").is_err());
        assert!(parse_mtx("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n").is_err());
    }
}
