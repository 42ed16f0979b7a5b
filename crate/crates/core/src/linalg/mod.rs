//! Dense vectors and matrices, the element-wise nonlinearities used by the
//! memory block, and the parameter registry built on top of them.
//!
//! The checked operations (`matvec`, `hadamard`, ...) return a shape error on
//! mismatched inputs. The `*_acc` kernels are the unchecked-by-`Result` hot
//! path used by the block and the network; they assert on shapes instead.

pub(crate) mod params;

pub use params::{GradSet, ModelDims, Param, ParamSet, PARAM_FORMAT_VERSION};

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense column vector of `f64`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector {
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: f64, other: &[f64]) {
        assert_eq!(self.len(), other.len(), "axpy length mismatch");
        for (a, b) in self.data.iter_mut().zip(other) {
            *a += scale * b;
        }
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector { data }
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.data
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// A dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
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

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "matrix construction",
                format!("{} values for {rows}x{cols}", rows * cols),
                data.len(),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::shape(format!("matrix row {r}"), cols, row.len()));
            }
            data.extend_from_slice(row);
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// `self += scale * other`, element-wise.
    pub fn axpy(&mut self, scale: f64, other: &Matrix) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }
}

/// `out += m · v`
pub fn matvec_acc(m: &Matrix, v: &[f64], out: &mut [f64]) {
    assert_eq!(m.cols, v.len(), "matvec: cols != len(v)");
    assert_eq!(m.rows, out.len(), "matvec: rows != len(out)");
    for (o, row) in out.iter_mut().zip(m.data.chunks_exact(m.cols.max(1))) {
        *o += dot(row, v);
    }
}

/// `out += mᵀ · v`
pub fn matvec_t_acc(m: &Matrix, v: &[f64], out: &mut [f64]) {
    assert_eq!(m.rows, v.len(), "matvec_t: rows != len(v)");
    assert_eq!(m.cols, out.len(), "matvec_t: cols != len(out)");
    for (row, &scale) in m.data.chunks_exact(m.cols.max(1)).zip(v) {
        if scale != 0.0 {
            for (o, w) in out.iter_mut().zip(row) {
                *o += scale * w;
            }
        }
    }
}

/// `m += scale · u vᵀ`
pub fn outer_acc(m: &mut Matrix, u: &[f64], v: &[f64], scale: f64) {
    assert_eq!(m.rows, u.len(), "outer: rows != len(u)");
    assert_eq!(m.cols, v.len(), "outer: cols != len(v)");
    let cols = m.cols.max(1);
    for (row, &ui) in m.data.chunks_exact_mut(cols).zip(u) {
        let s = scale * ui;
        if s != 0.0 {
            for (w, vj) in row.iter_mut().zip(v) {
                *w += s * vj;
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Matrix-vector product.
pub fn matvec(m: &Matrix, v: &Vector) -> Result<Vector> {
    if m.cols != v.len() {
        return Err(Error::shape(
            format!("matvec with {}x{} matrix", m.rows, m.cols),
            m.cols,
            v.len(),
        ));
    }
    let mut out = Vector::zeros(m.rows);
    matvec_acc(m, v, &mut out);
    Ok(out)
}

/// Element-wise (Hadamard) product.
pub fn hadamard(a: &Vector, b: &Vector) -> Result<Vector> {
    if a.len() != b.len() {
        return Err(Error::shape("hadamard", a.len(), b.len()));
    }
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| x * y)
        .collect::<Vec<_>>()
        .into())
}

/// Logistic function, branching on sign so `exp` never overflows.
#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(v: &Vector) -> Vector {
    v.iter()
        .map(|&x| sigmoid_scalar(x))
        .collect::<Vec<_>>()
        .into()
}

/// σ'(z) written in terms of the activation a = σ(z).
pub fn sigmoid_deriv_from_act(a: &Vector) -> Vector {
    a.iter().map(|&x| x * (1.0 - x)).collect::<Vec<_>>().into()
}

pub fn tanh_vec(v: &Vector) -> Vector {
    v.iter().map(|x| x.tanh()).collect::<Vec<_>>().into()
}

/// tanh'(z) written in terms of the activation a = tanh(z).
pub fn tanh_deriv_from_act(a: &Vector) -> Vector {
    a.iter().map(|&x| 1.0 - x * x).collect::<Vec<_>>().into()
}

pub fn sigmoid_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = sigmoid_scalar(*x));
}
