//! Dense row-major matrices and the few kernels the solver path needs:
//! Gram and cross-product accumulation, and Cholesky-based SPD solves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::mismatch(
                "DenseMatrix::from_vec",
                rows * cols,
                data.len(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Like [`from_vec`](Self::from_vec) but rejects NaN and infinities; used on I/O paths.
    pub fn from_vec_finite(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Self::from_vec(rows, cols, data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::mismatch(
                    "DenseMatrix::from_rows",
                    format!("{cols} columns"),
                    format!("{} in row {i}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::mismatch(
                "matmul",
                format!("{} rows on the right", self.cols),
                other.rows,
            ));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · v` for a vector of length `rows`.
    pub fn transpose_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::mismatch("transpose_matvec", self.rows, v.len()));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &x) in v.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += x * w;
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) -> Result<()> {
        self.check_same_shape("add", other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_same_shape("sub", other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &DenseMatrix) -> Result<()> {
        self.check_same_shape("axpy", other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn scaled(&self, alpha: f64) -> DenseMatrix {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    pub fn add_to_diagonal(&mut self, alpha: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i * self.cols + i] += alpha;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// ‖self − other‖_F / ‖other‖_F, falling back to the absolute distance when `other` is zero.
    pub fn relative_distance(&self, other: &DenseMatrix) -> Result<f64> {
        let diff = self.sub(other)?.frobenius_norm();
        let denom = other.frobenius_norm();
        Ok(if denom > 0.0 { diff / denom } else { diff })
    }

    fn check_same_shape(&self, op: &'static str, other: &DenseMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::mismatch(
                op,
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ));
        }
        Ok(())
    }
}

/// `Zᵀ Z` accumulated over the upper triangle and mirrored, so the result is
/// exactly symmetric.
pub fn gram(z: &DenseMatrix) -> DenseMatrix {
    let q = z.cols;
    let mut a = DenseMatrix::zeros(q, q);
    accumulate_gram(&mut a, z);
    a
}

/// Adds the upper triangle of `Zᵀ Z` into `a` and mirrors it into the lower triangle.
/// `a` must be q×q with an already-symmetric starting value.
pub(crate) fn accumulate_gram(a: &mut DenseMatrix, z: &DenseMatrix) {
    let q = z.cols;
    debug_assert_eq!(a.shape(), (q, q));
    for r in 0..z.rows {
        let row = z.row(r);
        for i in 0..q {
            let zi = row[i];
            let dst = &mut a.data[i * q + i..(i + 1) * q];
            for (d, &zj) in dst.iter_mut().zip(&row[i..]) {
                *d += zi * zj;
            }
        }
    }
    mirror_upper(a);
}

pub(crate) fn mirror_upper(a: &mut DenseMatrix) {
    let q = a.rows;
    for i in 0..q {
        for j in 0..i {
            a.data[i * q + j] = a.data[j * q + i];
        }
    }
}

/// `Zᵀ Y` for Z n×q and Y n×C.
pub fn cross(z: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    if z.rows != y.rows {
        return Err(Error::mismatch("cross", format!("{} rows", z.rows), y.rows));
    }
    let (q, c) = (z.cols, y.cols);
    let mut out = DenseMatrix::zeros(q, c);
    for r in 0..z.rows {
        let yr = y.row(r);
        for (i, &zi) in z.row(r).iter().enumerate() {
            let dst = &mut out.data[i * c..(i + 1) * c];
            for (d, &yv) in dst.iter_mut().zip(yr) {
                *d += zi * yv;
            }
        }
    }
    Ok(out)
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(Error::mismatch(
            "cholesky",
            "square matrix",
            format!("{}x{}", a.rows, a.cols),
        ));
    }
    let n = a.rows;
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let lj = &l.data[j * n..j * n + j];
        let s = a.get(j, j) - lj.iter().map(|v| v * v).sum::<f64>();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: s });
        }
        let pivot = s.sqrt();
        l.data[j * n + j] = pivot;
        for i in j + 1..n {
            let dot: f64 = (0..j).map(|k| l.data[i * n + k] * l.data[j * n + k]).sum();
            l.data[i * n + j] = (a.get(i, j) - dot) / pivot;
        }
    }
    Ok(l)
}

/// Solves `A X = rhs` for symmetric positive-definite `A` through its Cholesky factor.
pub fn spd_solve(a: &DenseMatrix, rhs: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() || a.rows != rhs.rows {
        return Err(Error::mismatch(
            "spd_solve",
            format!("square A with {} rows", rhs.rows),
            format!("{}x{}", a.rows, a.cols),
        ));
    }
    check_symmetric(a, 1e-9)?;
    let l = cholesky(a)?;
    Ok(cholesky_solve(&l, rhs))
}

fn cholesky_solve(l: &DenseMatrix, rhs: &DenseMatrix) -> DenseMatrix {
    let n = l.rows;
    let c = rhs.cols;
    let mut x = rhs.clone();
    // forward: L Y = rhs
    for i in 0..n {
        for k in 0..i {
            let lik = l.data[i * n + k];
            if lik != 0.0 {
                let (head, tail) = x.data.split_at_mut(i * c);
                let src = &head[k * c..(k + 1) * c];
                for (d, s) in tail[..c].iter_mut().zip(src) {
                    *d -= lik * s;
                }
            }
        }
        let inv = 1.0 / l.data[i * n + i];
        x.data[i * c..(i + 1) * c]
            .iter_mut()
            .for_each(|v| *v *= inv);
    }
    // backward: Lᵀ X = Y
    for i in (0..n).rev() {
        for k in i + 1..n {
            let lki = l.data[k * n + i];
            if lki != 0.0 {
                let (head, tail) = x.data.split_at_mut(k * c);
                let src = &tail[..c];
                for (d, s) in head[i * c..(i + 1) * c].iter_mut().zip(src) {
                    *d -= lki * s;
                }
            }
        }
        let inv = 1.0 / l.data[i * n + i];
        x.data[i * c..(i + 1) * c]
            .iter_mut()
            .for_each(|v| *v *= inv);
    }
    x
}

fn check_symmetric(a: &DenseMatrix, rel_tol: f64) -> Result<()> {
    let tol = rel_tol * a.max_abs().max(f64::MIN_POSITIVE);
    let n = a.rows;
    for i in 0..n {
        for j in 0..i {
            if (a.get(i, j) - a.get(j, i)).abs() > tol {
                return Err(Error::NotSymmetric { row: i, col: j });
            }
        }
    }
    Ok(())
}
