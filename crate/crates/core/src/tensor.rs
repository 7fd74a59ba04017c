//! Dense row-major matrices and the handful of vector kernels the recurrent
//! cells need. Vectors are plain `[f64]` slices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
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
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` with `fan_in = cols`.
    pub fn uniform_fan_in<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (cols as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Self { rows, cols, data }
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

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `out += self * v`.
    pub fn matvec_acc(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, v);
        }
    }

    /// `out += self^T * v`.
    pub fn matvec_t_acc(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&vi, row) in v.iter().zip(self.data.chunks_exact(self.cols)) {
            if vi != 0.0 {
                axpy(vi, row, out);
            }
        }
    }

    /// `self += a * b^T`.
    pub fn outer_acc(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (&ai, row) in a.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if ai != 0.0 {
                axpy(ai, b, row);
            }
        }
    }
}

/// Checked matrix-vector product.
pub fn matvec(m: &Matrix, v: &[f64]) -> Result<Vec<f64>> {
    if m.cols != v.len() {
        return Err(Error::Shape(format!(
            "matvec: {}x{} matrix against vector of length {}",
            m.rows,
            m.cols,
            v.len()
        )));
    }
    let mut out = vec![0.0; m.rows];
    m.matvec_acc(v, &mut out);
    Ok(out)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn add_assign(y: &mut [f64], x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi;
    }
}

/// Logistic sigmoid, evaluated in the branch that cannot overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
