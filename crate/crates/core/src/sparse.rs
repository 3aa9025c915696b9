//! Row-sorted triplet storage for the banded collective operators.
//!
//! The ladder and transfer matrices have O(dim) nonzeros, so the solvers
//! apply them through these kernels instead of dense products.

use nalgebra::DMatrix;

use crate::scalar::{Real, C};

#[derive(Debug, Clone)]
pub struct SparseOperator<R: Real> {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<C<R>>,
}

impl<R: Real> SparseOperator<R> {
    pub fn from_dense(m: &DMatrix<C<R>>) -> Self {
        let dim = m.nrows();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..dim {
            for col in 0..m.ncols() {
                let v = m[(r, col)];
                if v.re != R::zero() || v.im != R::zero() {
                    cols.push(col);
                    values.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseOperator {
            dim,
            row_ptr,
            cols,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> DMatrix<C<R>> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        let mut t: Vec<(usize, usize, C<R>)> =
            self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect();
        t.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; self.dim + 1];
        for &(r, _, _) in &t {
            row_ptr[r + 1] += 1;
        }
        for r in 0..self.dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseOperator {
            dim: self.dim,
            row_ptr,
            cols: t.iter().map(|x| x.1).collect(),
            values: t.iter().map(|x| x.2).collect(),
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C<R>)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.values[k]))
        })
    }

    /// `y += alpha · A x`
    pub fn mul_vec_acc(&self, alpha: C<R>, x: &[C<R>], y: &mut [C<R>]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for r in 0..self.dim {
            let mut acc = C::new(R::zero(), R::zero());
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.cols[k]];
            }
            y[r] += alpha * acc;
        }
    }

    /// `out += alpha · A ρ` for a column-major `dim × dim` matrix `ρ`.
    pub fn left_mul_acc(&self, alpha: C<R>, rho: &[C<R>], out: &mut [C<R>]) {
        let d = self.dim;
        for col in 0..d {
            let x = &rho[col * d..(col + 1) * d];
            let y = &mut out[col * d..(col + 1) * d];
            self.mul_vec_acc(alpha, x, y);
        }
    }

    /// `out += alpha · ρ A` for a column-major `dim × dim` matrix `ρ`.
    pub fn right_mul_acc(&self, alpha: C<R>, rho: &[C<R>], out: &mut [C<R>]) {
        let d = self.dim;
        for (k, c, v) in self.triplets() {
            // (ρA)[:, c] += ρ[:, k] A[k, c]
            let w = alpha * v;
            let src = k * d;
            let dst = c * d;
            for r in 0..d {
                let s = rho[src + r];
                out[dst + r] += w * s;
            }
        }
    }
}
