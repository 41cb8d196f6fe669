use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix. Rows are token vectors throughout the crate, so
/// a hidden state of `T` tokens in `d` dimensions is a `T x d` matrix.
///
/// Deliberately minimal: the model needs per-row affine maps, outer-product
/// accumulation and row reductions, nothing more. Keeping the loops in one
/// place also pins the floating-point summation order, which the
/// reproducibility guarantees depend on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<F>>) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * cols);
        for row in &rows {
            if row.len() != cols {
                return Err(Error::Input(format!(
                    "ragged rows: expected {cols} columns, found {}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Mat { rows: n, cols, data })
    }

    /// Single-row matrix wrapping a vector.
    pub fn from_row(row: Vec<F>) -> Self {
        Mat {
            rows: 1,
            cols: row.len(),
            data: row,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[F]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// `y = A x` for a row-major `A` (`rows x cols`) and `x` of length `cols`.
    pub fn matvec(&self, x: &[F]) -> Vec<F> {
        debug_assert_eq!(x.len(), self.cols);
        let mut y = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            y.push(dot(self.row(r), x));
        }
        y
    }

    /// `y = A^T x` for `x` of length `rows`.
    pub fn matvec_transposed(&self, x: &[F]) -> Vec<F> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![F::zero(); self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            let xr = x[r];
            for (yc, &a) in y.iter_mut().zip(row) {
                *yc = *yc + xr * a;
            }
        }
        y
    }

    /// Rank-one update `A += u v^T`, used for weight gradients.
    pub fn add_outer(&mut self, u: &[F], v: &[F]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for r in 0..self.rows {
            let ur = u[r];
            for (a, &vc) in self.row_mut(r).iter_mut().zip(v) {
                *a = *a + ur * vc;
            }
        }
    }

    /// Mean of the rows, summed top to bottom before dividing.
    pub fn mean_rows(&self) -> Vec<F> {
        debug_assert!(self.rows > 0);
        let mut out = vec![F::zero(); self.cols];
        for r in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(r)) {
                *o = *o + v;
            }
        }
        let n = F::from_usize(self.rows).expect("row count fits scalar");
        for o in &mut out {
            *o = *o / n;
        }
        out
    }

    /// True when every element compares bit-identical to `other`.
    pub fn bits_eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.bits() == b.bits())
    }
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

/// `a += s * b`, elementwise.
pub fn axpy<F: Scalar>(a: &mut [F], s: F, b: &[F]) {
    debug_assert_eq!(a.len(), b.len());
    for (x, &y) in a.iter_mut().zip(b) {
        *x = *x + s * y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_and_transpose_agree_with_hand_values() {
        // A = [[1, 2], [3, 4], [5, 6]], x = [1, -1]
        let a = Mat::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(a.matvec(&[1.0, -1.0]), vec![-1.0, -1.0, -1.0]);
        // A^T y with y = [1, 0, 2] -> [1*1 + 5*2, 2*1 + 6*2]
        assert_eq!(a.matvec_transposed(&[1.0, 0.0, 2.0]), vec![11.0, 14.0]);
    }

    #[test]
    fn outer_update_accumulates() {
        let mut g: Mat<f64> = Mat::zeros(2, 3);
        g.add_outer(&[1.0, 2.0], &[1.0, 0.0, -1.0]);
        g.add_outer(&[1.0, 2.0], &[1.0, 0.0, -1.0]);
        assert_eq!(g.row(0), &[2.0, 0.0, -2.0]);
        assert_eq!(g.row(1), &[4.0, 0.0, -4.0]);
    }

    #[test]
    fn mean_rows_divides_once() {
        let m = Mat::from_rows(vec![vec![1.0f64, 3.0], vec![2.0, 5.0]]).unwrap();
        assert_eq!(m.mean_rows(), vec![1.5, 4.0]);
    }

    #[test]
    fn ragged_rows_rejected() {
        let r = Mat::from_rows(vec![vec![1.0f64], vec![1.0, 2.0]]);
        assert!(r.is_err());
    }
}
