//! Left-looking sparse LU with threshold partial pivoting.
//!
//! Column `k` of `L` is obtained from a sparse triangular solve whose
//! nonzero pattern is the reach of `A(:, q[k])` in the graph of the columns
//! already computed (Gilbert–Peierls). The column order `q` comes from a
//! fill-reducing ordering of `A + A^T`; rows are pivoted for stability, with
//! a preference for the diagonal entry so that structurally symmetric
//! problems keep their symmetric fill.

use super::csr::{CsrMatrix, SparsityPattern};
use super::ordering::minimum_degree;
use crate::error::{Error, Result};
use crate::scalar::Real;

const UNSET: usize = usize::MAX;

/// Diagonal pivot accepted when within this factor of the column maximum.
const DIAGONAL_PREFERENCE: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct LuFactor<T> {
    n: usize,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<T>,
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<T>,
    /// Row `i` of `A` is row `pinv[i]` of `PAQ`.
    pinv: Vec<usize>,
    /// Column `k` of `PAQ` is column `q[k]` of `A`.
    q: Vec<usize>,
}

/// Column ordering computed once per sparsity pattern and reused across
/// numerical factorizations with the same structure.
#[derive(Clone, Debug)]
pub struct LuOrdering {
    q: Vec<usize>,
}

impl LuOrdering {
    pub fn new(pattern: &SparsityPattern) -> Self {
        Self {
            q: minimum_degree(pattern),
        }
    }

    pub fn natural(n: usize) -> Self {
        Self { q: (0..n).collect() }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.q
    }
}

struct Workspace {
    stack: Vec<usize>,
    pstack: Vec<usize>,
    mark: Vec<usize>,
    xi: Vec<usize>,
}

impl<T: Real> LuFactor<T> {
    /// Orders and factors `a`.
    pub fn new(a: &CsrMatrix<T>) -> Result<Self> {
        let ordering = LuOrdering::new(&a.pattern());
        Self::with_ordering(a, &ordering)
    }

    pub fn with_ordering(a: &CsrMatrix<T>, ordering: &LuOrdering) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!(
                "LU needs a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        if ordering.q.len() != n {
            return Err(Error::Dimension("ordering length".into()));
        }
        let q = ordering.q.clone();
        let anorm = a.values().iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        if !anorm.is_finite() {
            return Err(Error::NonFinite("LU input"));
        }
        let csc = a.transpose();
        let mut l_ptr = Vec::with_capacity(n + 1);
        let mut u_ptr = Vec::with_capacity(n + 1);
        let cap = 4 * a.nnz() + n;
        let mut l_idx = Vec::with_capacity(cap);
        let mut l_val = Vec::with_capacity(cap);
        let mut u_idx = Vec::with_capacity(cap);
        let mut u_val = Vec::with_capacity(cap);
        let mut pinv = vec![UNSET; n];
        let mut x = vec![T::zero(); n];
        let mut ws = Workspace {
            stack: vec![0; n],
            pstack: vec![0; n],
            mark: vec![UNSET; n],
            xi: vec![0; n],
        };
        let pref = T::lit(DIAGONAL_PREFERENCE);

        for k in 0..n {
            l_ptr.push(l_idx.len());
            u_ptr.push(u_idx.len());
            let col = q[k];
            let (b_rows, b_vals) = csc.row(col);

            let top = reach(k, b_rows, &l_ptr, &l_idx, &pinv, &mut ws);
            for &i in &ws.xi[top..n] {
                x[i] = T::zero();
            }
            for (&r, &v) in b_rows.iter().zip(b_vals) {
                x[r] = v;
            }
            for px in top..n {
                let j = ws.xi[px];
                let jj = pinv[j];
                if jj == UNSET {
                    continue;
                }
                let xj = x[j];
                for p in l_ptr[jj] + 1..l_ptr[jj + 1] {
                    let r = l_idx[p];
                    x[r] -= l_val[p] * xj;
                }
            }

            let mut ipiv = UNSET;
            let mut amax = T::zero();
            for &i in &ws.xi[top..n] {
                if pinv[i] == UNSET {
                    let t = x[i].abs();
                    if ipiv == UNSET || t > amax {
                        amax = t;
                        ipiv = i;
                    }
                } else {
                    u_idx.push(pinv[i]);
                    u_val.push(x[i]);
                }
            }
            if ipiv == UNSET {
                return Err(Error::StructurallySingular { pivot: k });
            }
            if !amax.is_finite() {
                return Err(Error::NonFinite("LU factorization"));
            }
            // cancellation down to roundoff of the original column
            let cmax = b_vals.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
            if amax <= T::epsilon() * cmax || amax == T::zero() {
                return Err(Error::NumericallySingular { pivot: k });
            }
            if pinv[col] == UNSET && x[col].abs() >= amax * pref {
                ipiv = col;
            }
            let pivot = x[ipiv];
            u_idx.push(k);
            u_val.push(pivot);
            pinv[ipiv] = k;
            l_idx.push(ipiv);
            l_val.push(T::one());
            for &i in &ws.xi[top..n] {
                if pinv[i] == UNSET {
                    l_idx.push(i);
                    l_val.push(x[i] / pivot);
                }
                x[i] = T::zero();
            }
        }
        l_ptr.push(l_idx.len());
        u_ptr.push(u_idx.len());
        for r in &mut l_idx {
            *r = pinv[*r];
        }
        Ok(Self {
            n,
            l_ptr,
            l_idx,
            l_val,
            u_ptr,
            u_idx,
            u_val,
            pinv,
            q,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of `L` and `U` together.
    pub fn factor_nnz(&self) -> usize {
        self.l_val.len() + self.u_val.len()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n];
        self.solve_into(b, &mut out);
        out
    }

    pub fn solve_into(&self, b: &[T], out: &mut [T]) {
        assert_eq!(b.len(), self.n);
        assert_eq!(out.len(), self.n);
        let mut x = vec![T::zero(); self.n];
        for (i, &bi) in b.iter().enumerate() {
            x[self.pinv[i]] = bi;
        }
        for j in 0..self.n {
            let xj = x[j];
            if xj == T::zero() {
                continue;
            }
            for p in self.l_ptr[j] + 1..self.l_ptr[j + 1] {
                x[self.l_idx[p]] -= self.l_val[p] * xj;
            }
        }
        for j in (0..self.n).rev() {
            let diag = self.u_ptr[j + 1] - 1;
            x[j] /= self.u_val[diag];
            let xj = x[j];
            if xj == T::zero() {
                continue;
            }
            for p in self.u_ptr[j]..diag {
                x[self.u_idx[p]] -= self.u_val[p] * xj;
            }
        }
        for (k, &qk) in self.q.iter().enumerate() {
            out[qk] = x[k];
        }
    }
}

/// Nonzero pattern of `L \ b` in topological order, returned in
/// `ws.xi[top..n]`.
fn reach(
    k: usize,
    b_rows: &[usize],
    l_ptr: &[usize],
    l_idx: &[usize],
    pinv: &[usize],
    ws: &mut Workspace,
) -> usize {
    let n = ws.xi.len();
    let mut top = n;
    for &start in b_rows {
        if ws.mark[start] == k {
            continue;
        }
        // iterative depth-first search
        let mut head: isize = 0;
        ws.stack[0] = start;
        while head >= 0 {
            let h = head as usize;
            let j = ws.stack[h];
            let jj = pinv[j];
            if ws.mark[j] != k {
                ws.mark[j] = k;
                ws.pstack[h] = if jj == UNSET { 0 } else { l_ptr[jj] };
            }
            let end = if jj == UNSET { 0 } else { l_ptr[jj + 1] };
            let mut p = ws.pstack[h];
            let mut pushed = false;
            while p < end {
                let i = l_idx[p];
                p += 1;
                if ws.mark[i] == k {
                    continue;
                }
                ws.pstack[h] = p;
                head += 1;
                ws.stack[head as usize] = i;
                pushed = true;
                break;
            }
            if !pushed {
                head -= 1;
                top -= 1;
                ws.xi[top] = j;
            }
        }
    }
    top
}
