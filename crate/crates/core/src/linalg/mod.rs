//! Dense vectors, row-major matrices and the factorizations built on them.
//!
//! Every reduction sums in ascending index order with plain `+`, so results
//! are reproducible bit-for-bit across runs on one platform. Checked
//! constructors reject empty or non-finite input; arithmetic does not
//! re-validate, callers that care about divergence check [`Vector::is_finite`].

mod eigen;
pub(crate) mod svd;

use std::ops::Index;

pub use eigen::{cholesky_solve, symmetric_eigen, SymmetricEigen};
pub use svd::{truncated_svd, SvdResult, OVERSAMPLE};

use crate::error::{Error, Result};

/// A non-empty vector of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::dim("Vector::new", "empty vector"));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Num("Vector::new"));
        }
        Ok(Vector(data))
    }

    pub fn from_slice(data: &[f64]) -> Result<Self> {
        Vector::new(data.to_vec())
    }

    /// # Panics
    /// If `len == 0`.
    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "Vector::zeros with len 0");
        Vector(vec![0.0; len])
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> f64) -> Self {
        assert!(len > 0, "Vector::from_fn with len 0");
        Vector((0..len).map(f).collect())
    }

    /// Wraps raw storage without the finiteness check.
    pub(crate) fn from_raw(data: Vec<f64>) -> Self {
        debug_assert!(!data.is_empty());
        Vector(data)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    fn check_len(&self, other: &Vector, op: &'static str) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::dim(
                op,
                format!("lengths {} and {}", self.len(), other.len()),
            ));
        }
        Ok(())
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        self.check_len(other, "dot")?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        self.check_len(other, "add")?;
        Ok(Vector(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        self.check_len(other, "sub")?;
        Ok(Vector(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn scaled(&self, alpha: f64) -> Vector {
        Vector(self.0.iter().map(|x| alpha * x).collect())
    }

    /// `self + alpha * x`
    pub fn axpy(&self, alpha: f64, x: &Vector) -> Result<Vector> {
        self.check_len(x, "axpy")?;
        Ok(Vector(
            self.0
                .iter()
                .zip(&x.0)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        ))
    }

    pub(crate) fn add_assign(&mut self, other: &Vector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    /// Concatenates several vectors in order.
    pub fn concat(parts: &[Vector]) -> Vector {
        Vector::from_raw(parts.iter().flat_map(|p| p.0.iter().copied()).collect())
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Vector {
        Vector::from_raw(self.0[range].to_vec())
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// Row-major dense matrix with at least one row and one column.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dim("Mat::new", format!("shape {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::dim(
                "Mat::new",
                format!("{} entries for shape {rows}x{cols}", data.len()),
            ));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Num("Mat::new"));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::dim("Mat::from_rows", "ragged rows"));
        }
        let data = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Mat::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "Mat::zeros with empty shape");
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Mat::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
    }

    /// Fills entries in row-major order.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "Mat::from_fn with empty shape");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    /// Builds a matrix from column vectors of equal length.
    pub(crate) fn from_columns(cols: &[Vec<f64>]) -> Self {
        let rows = cols[0].len();
        Mat::from_fn(rows, cols.len(), |i, j| cols[j][i])
    }

    pub(crate) fn to_columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).collect())
            .collect()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vector {
        Vector::from_raw((0..self.rows).map(|i| self.get(i, j)).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self * other`
    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return Err(Error::dim(
                "matmul",
                format!(
                    "{}x{} times {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
            for p in 0..self.cols {
                let a = self.get(i, p);
                for (o, b) in out_row.iter_mut().zip(other.row(p)) {
                    *o += a * b;
                }
            }
        }
        Ok(Mat {
            rows: self.rows,
            cols: other.cols,
            data: out,
        })
    }

    /// `selfᵀ * other` without forming the transpose.
    pub fn t_matmul(&self, other: &Mat) -> Result<Mat> {
        if self.rows != other.rows {
            return Err(Error::dim(
                "t_matmul",
                format!(
                    "({}x{})ᵀ times {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let mut out = vec![0.0; self.cols * other.cols];
        for p in 0..self.rows {
            let b_row = other.row(p);
            for (i, &a) in self.row(p).iter().enumerate() {
                let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Mat {
            rows: self.cols,
            cols: other.cols,
            data: out,
        })
    }

    /// `self * otherᵀ`
    pub fn matmul_t(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.cols {
            return Err(Error::dim(
                "matmul_t",
                format!(
                    "{}x{} times ({}x{})ᵀ",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        Ok(Mat::from_fn(self.rows, other.rows, |i, j| {
            dot(self.row(i), other.row(j))
        }))
    }

    /// Multiplies column `j` by `scales[j]`.
    pub fn scale_columns(&self, scales: &[f64]) -> Mat {
        debug_assert_eq!(scales.len(), self.cols);
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j) * scales[j])
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.cols {
            return Err(Error::dim(
                "vstack",
                format!("{} and {} columns", self.cols, other.cols),
            ));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Mat {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// Places blocks side by side; all must have the same row count.
    pub fn hstack(blocks: &[Mat]) -> Result<Mat> {
        let rows = blocks
            .first()
            .ok_or_else(|| Error::dim("hstack", "no blocks"))?
            .rows;
        if blocks.iter().any(|b| b.rows != rows) {
            return Err(Error::dim("hstack", "row counts differ"));
        }
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for b in blocks {
                data.extend_from_slice(b.row(i));
            }
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat> {
        if self.shape() != other.shape() {
            return Err(Error::dim(
                "Mat::sub",
                format!("{:?} and {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn frob_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Largest `|selfᵀself − I|` entry; zero for orthonormal columns.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.t_matmul(self).expect("square gram");
        let mut worst: f64 = 0.0;
        for i in 0..gram.rows {
            for j in 0..gram.cols {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram.get(i, j) - target).abs());
            }
        }
        worst
    }
}

/// `a · x`, summing each row in ascending column order.
pub fn matvec(a: &Mat, x: &Vector) -> Result<Vector> {
    if x.len() != a.cols() {
        return Err(Error::dim(
            "matvec",
            format!(
                "{}x{} matrix with vector of length {}",
                a.rows(),
                a.cols(),
                x.len()
            ),
        ));
    }
    Ok(Vector::from_raw(
        (0..a.rows()).map(|i| dot(a.row(i), x.as_slice())).collect(),
    ))
}

/// `aᵀ · y`. Entry `j` accumulates `a[i, j] * y[i]` for ascending `i`, the
/// same order as the naive double loop.
pub fn matvec_t(a: &Mat, y: &Vector) -> Result<Vector> {
    if y.len() != a.rows() {
        return Err(Error::dim(
            "matvec_t",
            format!(
                "{}x{} matrix with vector of length {}",
                a.rows(),
                a.cols(),
                y.len()
            ),
        ));
    }
    let mut out = vec![0.0; a.cols()];
    for (i, &yi) in y.iter().enumerate() {
        for (o, &aij) in out.iter_mut().zip(a.row(i)) {
            *o += aij * yi;
        }
    }
    Ok(Vector::from_raw(out))
}

/// `‖a − u·vᵀ‖_F` where `v` already carries the singular values.
pub fn frob_residual(a: &Mat, u: &Mat, v: &Mat) -> Result<f64> {
    if u.rows() != a.rows() || v.rows() != a.cols() || u.cols() != v.cols() {
        return Err(Error::dim(
            "frob_residual",
            format!("a {:?}, u {:?}, v {:?}", a.shape(), u.shape(), v.shape()),
        ));
    }
    let approx = u.matmul_t(v)?;
    Ok(a.sub(&approx)?.frob_norm())
}
