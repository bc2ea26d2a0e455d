//! Two-level restricted additive Schwarz preconditioner.

use super::schwarz::Schwarz;
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, LinearOperator, LuFactor};
use crate::scalar::Real;

/// `M^{-1} = Σ_j R_j^T P_j (R_j J R_j^T)^{-1} R_j + R_H^T (R_H J R_H^T)^{-1} R_H`
pub struct Ras2<'a, T> {
    dd: &'a Schwarz<T>,
    locals: Vec<LuFactor<T>>,
    coarse: Option<LuFactor<T>>,
    parallel: bool,
}

/// Factors every local block of `jac` and, when `two_level` is set and the
/// decomposition has a coarse space, the Galerkin coarse block.
pub fn ras2_preconditioner<'a, T: Real>(
    jac: &CsrMatrix<T>,
    dd: &'a Schwarz<T>,
    two_level: bool,
    parallel: bool,
) -> Result<Ras2<'a, T>> {
    let factors = dd.map(parallel, |j| {
        LuFactor::with_ordering(&dd.local_block(j, jac), dd.local_ordering(j))
            .map_err(|e| Error::SingularBlock { what: "local", subdomain: j, source: Box::new(e) })
    });
    let locals = factors.into_iter().collect::<Result<Vec<_>>>()?;
    let coarse = match dd.coarse() {
        Some(c) if two_level => Some(c.factor(jac)?),
        _ => None,
    };
    Ok(Ras2 { dd, locals, coarse, parallel })
}

impl<T: Real> Ras2<'_, T> {
    pub fn local_factorizations(&self) -> usize {
        self.locals.len()
    }

    pub fn coarse_factorizations(&self) -> usize {
        usize::from(self.coarse.is_some())
    }
}

impl<T: Real> LinearOperator<T> for Ras2<'_, T> {
    fn dim(&self) -> usize {
        self.dd.dim()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        let parts = self.dd.map(self.parallel, |j| self.locals[j].solve(&self.dd.restrict(j, x)));
        y.iter_mut().for_each(|v| *v = T::zero());
        for (j, z) in parts.iter().enumerate() {
            self.dd.add_weighted(j, z, y);
        }
        if let (Some(lu), Some(space)) = (&self.coarse, self.dd.coarse()) {
            let back = space.prolong(&lu.solve(&space.restrict(x)));
            for (yi, b) in y.iter_mut().zip(back) {
                *yi += b;
            }
        }
    }
}
