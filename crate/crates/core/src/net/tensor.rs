use rand::Rng as _;

use crate::rng::Rng;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Uniform in `[-limit, limit]`.
    pub fn uniform(rows: usize, cols: usize, limit: f64, rng: &mut Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.random_range(-limit..=limit)).collect();
        Matrix { rows, cols, data }
    }

    /// Glorot range for this shape: `sqrt(6 / (rows + cols))`.
    pub fn glorot_limit(rows: usize, cols: usize) -> f64 {
        (6.0 / (rows + cols) as f64).sqrt()
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out += self · x`
    pub fn matvec_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.rows);
        gemv_acc(&self.data, x, out);
    }

    /// `out += selfᵀ · dy`
    pub fn matvec_t_acc(&self, dy: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.cols);
        gemv_t_acc(&self.data, dy, out);
    }

    /// `self += dy · xᵀ`
    pub fn outer_acc(&mut self, dy: &[f64], x: &[f64]) {
        debug_assert_eq!(x.len(), self.cols);
        outer_acc(&mut self.data, dy, x);
    }
}

/// `out += A · x` for row-major `a` with `x.len()` columns.
pub fn gemv_acc(a: &[f64], x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), x.len() * out.len());
    for (o, row) in out.iter_mut().zip(a.chunks_exact(x.len())) {
        *o += dot(row, x);
    }
}

/// `out += Aᵀ · dy` for row-major `a` with `out.len()` columns.
pub fn gemv_t_acc(a: &[f64], dy: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), dy.len() * out.len());
    for (&d, row) in dy.iter().zip(a.chunks_exact(out.len())) {
        if d != 0.0 {
            axpy(d, row, out);
        }
    }
}

/// `A += dy · xᵀ` for row-major `a` with `x.len()` columns.
pub fn outer_acc(a: &mut [f64], dy: &[f64], x: &[f64]) {
    debug_assert_eq!(a.len(), dy.len() * x.len());
    for (&d, row) in dy.iter().zip(a.chunks_exact_mut(x.len())) {
        if d != 0.0 {
            axpy(d, x, row);
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a · x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn add_assign(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
