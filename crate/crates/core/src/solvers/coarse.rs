//! Coarse Galerkin operators and the nonlinear coarse correction.

use super::{Counters, SolverConfig};
use crate::coarsespace::TrefftzSpace;
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, LuFactor};
use crate::problems::{FreeDofs, NonlinearSystem};
use crate::scalar::{norm2, Real};

/// `R_H` restricted to the unknowns of a system.
#[derive(Clone, Debug)]
pub struct CoarseSpace<T> {
    rh: CsrMatrix<T>,
    rht: CsrMatrix<T>,
}

impl<T: Real> CoarseSpace<T> {
    /// Drops Dirichlet columns of `R_H`, then rows left without entries.
    pub fn new(trefftz: &TrefftzSpace<T>, free: &FreeDofs<T>) -> Self {
        let r = trefftz.restriction();
        let mut triplets = Vec::new();
        let mut row = 0;
        for s in 0..r.nrows() {
            let (cols, vals) = r.row(s);
            let before = triplets.len();
            for (&c, &v) in cols.iter().zip(vals) {
                if v == T::zero() {
                    continue;
                }
                if let Some(k) = free.free_index(c) {
                    triplets.push((row, k, v));
                }
            }
            if triplets.len() > before {
                row += 1;
            }
        }
        Self::from_restriction(CsrMatrix::from_triplets(row, free.len(), &triplets))
    }

    pub fn from_restriction(rh: CsrMatrix<T>) -> Self {
        let rht = rh.transpose();
        CoarseSpace { rh, rht }
    }

    pub fn dim(&self) -> usize {
        self.rh.nrows()
    }

    pub fn restriction(&self) -> &CsrMatrix<T> {
        &self.rh
    }

    /// `R_H x`
    pub fn restrict(&self, x: &[T]) -> Vec<T> {
        self.rh.mul_vec(x)
    }

    /// `R_H^T c`
    pub fn prolong(&self, c: &[T]) -> Vec<T> {
        self.rht.mul_vec(c)
    }

    /// `R_H J R_H^T`
    pub fn galerkin(&self, jac: &CsrMatrix<T>) -> CsrMatrix<T> {
        self.rh.matmul(&jac.matmul(&self.rht))
    }

    pub fn factor(&self, jac: &CsrMatrix<T>) -> Result<LuFactor<T>> {
        LuFactor::new(&self.galerkin(jac)).map_err(|e| Error::SingularCoarse(Box::new(e)))
    }
}

/// Result of the nonlinear coarse correction at `v`.
#[derive(Clone, Debug)]
pub struct CoarseCorrection<T> {
    /// `c_H(v)`
    pub c: Vec<T>,
    /// `v - R_H^T c_H(v)`
    pub corrected: Vec<T>,
    /// Coarse linear solves used.
    pub solves: usize,
}

/// Solves `R_H F(v - R_H^T c) = 0` for `c` by Newton, starting at `c = 0`.
pub fn coarse_nonlinear_correction<T: Real>(
    system: &dyn NonlinearSystem<T>,
    coarse: &CoarseSpace<T>,
    v: &[T],
    config: &SolverConfig,
    counters: &mut Counters,
) -> Result<CoarseCorrection<T>> {
    let tol = T::lit(config.coarse_tol);
    let mut c = vec![T::zero(); coarse.dim()];
    let mut w = v.to_vec();
    let mut solves = 0;
    loop {
        let r = coarse.restrict(&system.residual(&w));
        let norm = norm2(&r);
        if !norm.is_finite() {
            return Err(Error::NonFinite("coarse residual"));
        }
        if norm <= tol {
            break;
        }
        if solves == config.max_coarse_newton {
            return Err(Error::CoarseNewton { iterations: solves, residual: norm.to_f64_lossy() });
        }
        // d/dc R_H F(v - R_H^T c) = -R_H J R_H^T
        let lu = coarse.factor(&system.jacobian(&w))?;
        counters.coarse_lu += 1;
        solves += 1;
        let dc = lu.solve(&r);
        for (ci, d) in c.iter_mut().zip(&dc) {
            *ci += *d;
        }
        let back = coarse.prolong(&c);
        for ((wi, &vi), &b) in w.iter_mut().zip(v).zip(&back) {
            *wi = vi - b;
        }
        // stop once the update is at rounding level of the state
        let step = coarse.prolong(&dc).iter().fold(T::zero(), |a, &x| a.max(x.abs()));
        let scale = w.iter().fold(T::min_positive_value(), |a, &x| a.max(x.abs()));
        if step <= T::lit(16.0) * T::epsilon() * scale {
            break;
        }
    }
    Ok(CoarseCorrection { c, corrected: w, solves })
}

/// `c_{H,l}(v) = v - R_H^T (R_H J(v) R_H^T)^{-1} R_H F(v)`
pub fn coarse_linear_correction<T: Real>(
    system: &dyn NonlinearSystem<T>,
    coarse: &CoarseSpace<T>,
    v: &[T],
    counters: &mut Counters,
) -> Result<Vec<T>> {
    let r = coarse.restrict(&system.residual(v));
    let lu = coarse.factor(&system.jacobian(v))?;
    counters.coarse_lu += 1;
    let back = coarse.prolong(&lu.solve(&r));
    Ok(v.iter().zip(&back).map(|(&a, &b)| a - b).collect())
}
