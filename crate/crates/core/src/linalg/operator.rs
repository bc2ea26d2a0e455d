use super::csr::CsrMatrix;
use super::lu::LuFactor;
use crate::scalar::Real;

/// Matrix-free linear map `R^n -> R^n`.
pub trait LinearOperator<T>: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[T], y: &mut [T]);

    fn apply_vec(&self, x: &[T]) -> Vec<T>
    where
        T: Real,
    {
        let mut y = vec![T::zero(); self.dim()];
        self.apply(x, &mut y);
        y
    }
}

impl<T: Real> LinearOperator<T> for CsrMatrix<T> {
    fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows(), self.ncols());
        self.nrows()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        self.matvec(x, y);
    }
}

impl<T: Real> LinearOperator<T> for LuFactor<T> {
    fn dim(&self) -> usize {
        LuFactor::dim(self)
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        self.solve_into(x, y);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Identity(pub usize);

impl<T: Real> LinearOperator<T> for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        y.copy_from_slice(x);
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<T, F> LinearOperator<T> for FnOperator<F>
where
    F: Fn(&[T], &mut [T]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        (self.f)(x, y)
    }
}
