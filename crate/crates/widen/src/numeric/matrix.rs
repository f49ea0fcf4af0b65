//! Dense row-major 64-bit real matrices and the forward kernels shared by
//! the tape and by inference-only code paths.

use crate::error::{Error, Result};

/// Epsilon added to the denominator of [`l2_normalize_row`] so that an
/// all-zero row (possible after ReLU) normalizes to zero instead of NaN.
pub const NORM_EPSILON: f64 = 1e-12;

/// Dense row-major matrix of `f64`.
///
/// Row vectors are `1 x n` matrices. Entries are finite except in attention
/// mask matrices, which carry `-inf` sentinels (see [`softmax_rows`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::contract(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Row vector (1 x n) from a slice.
    pub fn row_vector(values: &[f64]) -> Self {
        Matrix {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::contract("cannot build a matrix from zero rows"));
        }
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::contract(format!(
                    "ragged rows: row 0 has {} entries, row {} has {}",
                    cols,
                    i,
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn scalar(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// In-place `self += scale * other`; shapes must already agree.
    pub(crate) fn add_scaled(&mut self, other: &Matrix, scale: f64) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }
}

/// Standard matrix product.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::dim("matmul", a.shape(), b.shape()));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.get(i, k);
            if aik == 0.0 {
                continue;
            }
            let brow = b.row(k);
            let orow = out.row_mut(i);
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    Ok(out)
}

/// Hadamard (element-wise) product.
pub fn elementwise_mul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(Error::dim("elementwise_mul", a.shape(), b.shape()));
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    Matrix::from_vec(a.rows, a.cols, data)
}

pub fn add(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(Error::dim("add", a.shape(), b.shape()));
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    Matrix::from_vec(a.rows, a.cols, data)
}

pub fn scale(a: &Matrix, k: f64) -> Matrix {
    let data = a.data.iter().map(|x| x * k).collect();
    Matrix {
        rows: a.rows,
        cols: a.cols,
        data,
    }
}

/// Row-wise softmax with an optional additive mask.
///
/// Mask entries must be `0` (keep) or `-inf` (drop); masked positions come
/// out exactly `0`. Each row is shifted by its maximum unmasked entry before
/// exponentiation. A row with every position masked cannot be normalized.
pub fn softmax_rows(m: &Matrix, mask: Option<&Matrix>) -> Result<Matrix> {
    if let Some(mask) = mask {
        if mask.shape() != m.shape() {
            return Err(Error::dim("softmax_rows mask", m.shape(), mask.shape()));
        }
        if mask.data.iter().any(|&v| v != 0.0 && v != f64::NEG_INFINITY) {
            return Err(Error::contract(
                "softmax mask entries must be 0 or -inf".to_string(),
            ));
        }
    }
    let mut out = Matrix::zeros(m.rows, m.cols);
    for r in 0..m.rows {
        let keep = |c: usize| mask.is_none_or(|mk| mk.get(r, c) == 0.0);
        let mut max = f64::NEG_INFINITY;
        for c in 0..m.cols {
            if keep(c) {
                max = max.max(m.get(r, c));
            }
        }
        if max == f64::NEG_INFINITY {
            return Err(Error::contract(format!(
                "softmax row {r} is entirely masked and cannot be normalized"
            )));
        }
        let mut sum = 0.0;
        for c in 0..m.cols {
            if keep(c) {
                let e = (m.get(r, c) - max).exp();
                out.set(r, c, e);
                sum += e;
            }
        }
        for c in 0..m.cols {
            if keep(c) {
                out.set(r, c, out.get(r, c) / sum);
            }
        }
    }
    Ok(out)
}

/// Element-wise maximum of two equal-length vectors.
pub fn maxpool_pair(u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if u.len() != v.len() {
        return Err(Error::dim("maxpool_pair", (1, u.len()), (1, v.len())));
    }
    Ok(u.iter().zip(v).map(|(a, b)| a.max(*b)).collect())
}

pub fn relu(m: &Matrix) -> Matrix {
    let data = m.data.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
    Matrix {
        rows: m.rows,
        cols: m.cols,
        data,
    }
}

/// `v / (||v|| + eps)` for a row vector.
///
/// With `strict` the epsilon guard is disabled and an exactly-zero vector is
/// a contract violation.
pub fn l2_normalize_row(v: &Matrix, strict: bool) -> Result<Matrix> {
    if v.rows != 1 {
        return Err(Error::dim("l2_normalize_row", v.shape(), (1, v.cols)));
    }
    let norm = v.data.iter().map(|x| x * x).sum::<f64>().sqrt();
    if strict && norm == 0.0 {
        return Err(Error::contract(
            "cannot normalize an exactly-zero vector in strict mode",
        ));
    }
    let denom = norm + NORM_EPSILON;
    Ok(scale(v, 1.0 / denom))
}

/// Horizontal concatenation of two row vectors.
pub fn concat_cols(u: &Matrix, v: &Matrix) -> Result<Matrix> {
    if u.rows != 1 || v.rows != 1 {
        return Err(Error::dim("concat_cols", u.shape(), v.shape()));
    }
    let mut data = Vec::with_capacity(u.cols + v.cols);
    data.extend_from_slice(&u.data);
    data.extend_from_slice(&v.data);
    Matrix::from_vec(1, u.cols + v.cols, data)
}
