//! Left-preconditioned GMRES without restarts.

use super::operator::LinearOperator;
use crate::error::{Error, Result};
use crate::scalar::{dot, norm2, Real};

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_iter: 400,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutput<T> {
    pub x: Vec<T>,
    /// Arnoldi steps consumed.
    pub iterations: usize,
    /// Preconditioned residual norm after each step, starting with the
    /// initial one.
    pub residual_history: Vec<T>,
}

/// Solves `M A x = M b` from `x0 = 0`, stopping when
/// `||M (A x - b)|| <= rel_tol * ||M b||`.
pub fn gmres<T: Real>(
    op: &dyn LinearOperator<T>,
    precond: &dyn LinearOperator<T>,
    b: &[T],
    opts: GmresOptions,
) -> Result<GmresOutput<T>> {
    let n = b.len();
    if op.dim() != n || precond.dim() != n {
        return Err(Error::Dimension(format!(
            "gmres: operator {} / preconditioner {} / rhs {}",
            op.dim(),
            precond.dim(),
            n
        )));
    }
    let mut r0 = vec![T::zero(); n];
    precond.apply(b, &mut r0);
    let beta = norm2(&r0);
    if !beta.is_finite() {
        return Err(Error::NonFinite("gmres right-hand side"));
    }
    let mut history = vec![beta];
    if beta == T::zero() {
        return Ok(GmresOutput {
            x: vec![T::zero(); n],
            iterations: 0,
            residual_history: history,
        });
    }
    let target = T::lit(opts.rel_tol) * beta;
    let m = opts.max_iter;
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(m.min(n) + 1);
    basis.push(r0.iter().map(|&v| v / beta).collect());
    // Hessenberg columns after Givens rotations (upper triangular part).
    let mut hcols: Vec<Vec<T>> = Vec::with_capacity(m);
    let mut cs: Vec<T> = Vec::with_capacity(m);
    let mut sn: Vec<T> = Vec::with_capacity(m);
    let mut g = vec![beta];
    let mut tmp = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];

    for j in 0..m {
        op.apply(&basis[j], &mut tmp);
        precond.apply(&tmp, &mut w);
        let wnorm0 = norm2(&w);
        let mut h = vec![T::zero(); j + 2];
        // modified Gram-Schmidt with one reorthogonalization pass
        for _ in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                h[i] += hij;
                for (wk, &vk) in w.iter_mut().zip(v) {
                    *wk -= hij * vk;
                }
            }
        }
        let hnext = norm2(&w);
        h[j + 1] = hnext;
        if !hnext.is_finite() {
            return Err(Error::NonFinite("gmres Arnoldi"));
        }
        for i in 0..j {
            let (a, bb) = (h[i], h[i + 1]);
            h[i] = cs[i] * a + sn[i] * bb;
            h[i + 1] = -sn[i] * a + cs[i] * bb;
        }
        let (a, bb) = (h[j], h[j + 1]);
        let r = a.hypot(bb);
        let (c, s) = if r == T::zero() {
            (T::one(), T::zero())
        } else {
            (a / r, bb / r)
        };
        cs.push(c);
        sn.push(s);
        h[j] = r;
        h[j + 1] = T::zero();
        let gj = g[j];
        g[j] = c * gj;
        g.push(-s * gj);
        hcols.push(h);
        let res = g[j + 1].abs();
        history.push(res);
        let breakdown = hnext <= T::epsilon() * wnorm0.max(T::min_positive_value());
        if res <= target || breakdown || j + 1 == n {
            let x = assemble(&basis, &hcols, &g, j + 1);
            return Ok(GmresOutput {
                x,
                iterations: j + 1,
                residual_history: history,
            });
        }
        basis.push(w.iter().map(|&v| v / hnext).collect());
    }
    let x = assemble(&basis, &hcols, &g, m);
    let rel = (*history.last().unwrap() / beta).to_f64_lossy();
    Err(Error::GmresNoConvergence {
        iterations: m,
        relative_residual: rel,
        best_iterate: x.iter().map(|v| v.to_f64_lossy()).collect(),
    })
}

fn assemble<T: Real>(basis: &[Vec<T>], hcols: &[Vec<T>], g: &[T], k: usize) -> Vec<T> {
    let mut y = vec![T::zero(); k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for (jj, yj) in y.iter().enumerate().skip(i + 1) {
            s -= hcols[jj][i] * *yj;
        }
        let d = hcols[i][i];
        y[i] = if d == T::zero() { T::zero() } else { s / d };
    }
    let n = basis[0].len();
    let mut x = vec![T::zero(); n];
    for (v, &yi) in basis.iter().zip(&y) {
        for (xk, &vk) in x.iter_mut().zip(v) {
            *xk += yi * vk;
        }
    }
    x
}
