//! Compressed sparse row storage.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-compressed sparsity structure without values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsityPattern {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Builds a pattern from per-row column lists; columns are sorted and
    /// deduplicated.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            debug_assert!(r.last().map_or(true, |&c| c < ncols));
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: row_ptr.len() - 1,
            ncols,
            row_ptr,
            col_idx,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Position of entry `(i, j)` in the value array.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.row(i).binary_search(&j).ok().map(|p| start + p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Validating constructor: row pointers monotone, columns strictly
    /// increasing within each row.
    pub fn new(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if row_ptr.len() != nrows + 1 || row_ptr[0] != 0 {
            return Err(Error::Dimension("row pointer length".into()));
        }
        if col_idx.len() != values.len() || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(Error::Dimension("index/value length".into()));
        }
        for i in 0..nrows {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(Error::Dimension(format!("row pointer decreases at row {i}")));
            }
            let row = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&c| c >= ncols) {
                return Err(Error::Dimension(format!(
                    "row {i}: columns must be sorted, unique and < {ncols}"
                )));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_pattern(pattern: &SparsityPattern, values: Vec<T>) -> Self {
        assert_eq!(pattern.nnz(), values.len());
        Self {
            nrows: pattern.nrows,
            ncols: pattern.ncols,
            row_ptr: pattern.row_ptr.clone(),
            col_idx: pattern.col_idx.clone(),
            values,
        }
    }

    /// Assembles from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![T::zero(); triplets.len()];
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, T)> = Vec::new();
        for i in 0..nrows {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|p| (cols[p], vals[p])));
            scratch.sort_unstable_by_key(|e| e.0);
            for &(c, v) in &scratch {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == c {
                    let last = values.last_mut().unwrap();
                    *last = *last + v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn pattern(&self) -> SparsityPattern {
        SparsityPattern {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
        }
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(T::zero(), |p| vals[p])
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc = acc + self.values[p] * x[self.col_idx[p]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// `y = A^T x` without forming the transpose.
    pub fn transpose_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![T::zero(); self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let c = self.col_idx[p];
                y[c] = y[c] + self.values[p] * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for i in 0..self.nrows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let c = self.col_idx[p];
                col_idx[next[c]] = i;
                values[next[c]] = self.values[p];
                next[c] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr: counts,
            col_idx,
            values,
        }
    }

    /// Sparse product `A B` (Gustavson). Structural zeros produced by
    /// cancellation are kept so the pattern depends only on the operands'
    /// patterns.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut marker = vec![usize::MAX; other.ncols];
        let mut acc = vec![T::zero(); other.ncols];
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut cols: Vec<usize> = Vec::new();
        for i in 0..self.nrows {
            cols.clear();
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let k = self.col_idx[p];
                let a = self.values[p];
                for q in other.row_ptr[k]..other.row_ptr[k + 1] {
                    let j = other.col_idx[q];
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = T::zero();
                        cols.push(j);
                    }
                    acc[j] = acc[j] + a * other.values[q];
                }
            }
            cols.sort_unstable();
            for &j in &cols {
                col_idx.push(j);
                values.push(acc[j]);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: self.nrows,
            ncols: other.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Extracts `A[rows, cols]`; `cols` must be sorted.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        debug_assert!(cols.windows(2).all(|w| w[0] < w[1]));
        let mut local = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            local[c] = k;
        }
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &r in rows {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                let l = local[self.col_idx[p]];
                if l != usize::MAX {
                    col_idx.push(l);
                    values.push(self.values[p]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            nrows: rows.len(),
            ncols: cols.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        d
    }

    /// Applies `f` to every stored value, producing a matrix over another scalar.
    pub fn map<S: Scalar>(&self, f: impl Fn(T) -> S) -> CsrMatrix<S> {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}
