//! Compressed sparse row matrices used as constant operators on the tape.

use crate::error::{NumError, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds a matrix from `(row, col, value)` entries. Duplicate
    /// coordinates are summed; columns within a row end up sorted.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        entries: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, T)> = entries.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= rows {
                return Err(NumError::IndexOutOfBounds {
                    op: "csr",
                    index: r,
                    bound: rows,
                });
            }
            if c >= cols {
                return Err(NumError::IndexOutOfBounds {
                    op: "csr",
                    index: c,
                    bound: cols,
                });
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// `(column, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_len(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn transpose(&self) -> Self {
        let entries = (0..self.rows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (c, r, v)))
            .collect::<Vec<_>>();
        Self::from_triplets(self.cols, self.rows, entries).expect("transpose stays in bounds")
    }

    pub fn to_dense(&self) -> Tensor<T> {
        let mut out = Tensor::zeros(&[self.rows, self.cols]);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out.set(r, c, v);
            }
        }
        out
    }

    /// `self · dense`.
    pub fn matmul(&self, dense: &Tensor<T>) -> Result<Tensor<T>> {
        let (k, n) = dense.dims2("spmm")?;
        if k != self.cols {
            return Err(NumError::ShapeMismatch {
                op: "spmm",
                left: vec![self.rows, self.cols],
                right: dense.shape().to_vec(),
            });
        }
        let mut out = Tensor::zeros(&[self.rows, n]);
        for r in 0..self.rows {
            let o = out.row_mut(r);
            for (c, v) in self.row(r) {
                for (x, &d) in o.iter_mut().zip(dense.row(c)) {
                    *x += v * d;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · dense`.
    pub fn t_matmul(&self, dense: &Tensor<T>) -> Result<Tensor<T>> {
        let (k, n) = dense.dims2("spmm_t")?;
        if k != self.rows {
            return Err(NumError::ShapeMismatch {
                op: "spmm_t",
                left: vec![self.cols, self.rows],
                right: dense.shape().to_vec(),
            });
        }
        let mut out = Tensor::zeros(&[self.cols, n]);
        for r in 0..self.rows {
            let src = dense.row(r);
            for (c, v) in self.row(r) {
                for (x, &d) in out.row_mut(c).iter_mut().zip(src) {
                    *x += v * d;
                }
            }
        }
        Ok(out)
    }
}
