//! Dense row-major matrix used for all model tensors.
//!
//! All arithmetic runs in f64; quantization to f32-representable values
//! happens only at well-defined points (after init and after each optimizer
//! step) so checkpoints serialize losslessly as f32.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Round every element to the nearest f32-representable value.
    pub fn quantize_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }
}

/// y = x·W + b for a batch of rows; x: T×in, w: in×out, b: 1×out.
pub fn linear(x: &Mat, w: &Mat, b: &Mat) -> Mat {
    debug_assert_eq!(x.cols, w.rows);
    debug_assert_eq!(b.cols, w.cols);
    let mut y = Mat::zeros(x.rows, w.cols);
    for t in 0..x.rows {
        let yr = y.row_mut(t);
        yr.copy_from_slice(b.row(0));
        for i in 0..x.cols {
            let xv = x.at(t, i);
            if xv == 0.0 {
                continue;
            }
            let wr = w.row(i);
            for (yj, wj) in yr.iter_mut().zip(wr) {
                *yj += xv * wj;
            }
        }
    }
    y
}

/// Backward pass of `linear`; accumulates dW and db, returns dx.
pub fn linear_backward(x: &Mat, w: &Mat, dy: &Mat, dw: &mut Mat, db: &mut Mat) -> Mat {
    let mut dx = Mat::zeros(x.rows, x.cols);
    for t in 0..x.rows {
        let dyr = dy.row(t);
        for (dbj, dyj) in db.row_mut(0).iter_mut().zip(dyr) {
            *dbj += dyj;
        }
        for i in 0..x.cols {
            let xv = x.at(t, i);
            let wr = w.row(i);
            let dwr = dw.row_mut(i);
            let mut acc = 0.0;
            for j in 0..wr.len() {
                dwr[j] += xv * dyr[j];
                acc += wr[j] * dyr[j];
            }
            *dx.at_mut(t, i) = acc;
        }
    }
    dx
}

const GELU_C: f64 = 0.7978845608028654; // sqrt(2/pi)

/// Tanh-approximated GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

/// Derivative of the tanh-approximated GELU.
pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}
