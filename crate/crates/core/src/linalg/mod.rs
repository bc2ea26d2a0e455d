//! Sparse kernels: storage, direct factorization, Krylov iteration and the
//! small constrained least-squares problem behind Anderson mixing.

mod csr;
mod gmres;
mod lstsq;
mod lu;
mod operator;
mod ordering;

pub use csr::{CsrMatrix, SparsityPattern};
pub use gmres::{gmres, GmresOptions, GmresOutput};
pub use lstsq::{anderson_mixing, lstsq_min_norm};
pub use lu::{LuFactor, LuOrdering};
pub use operator::{FnOperator, Identity, LinearOperator};
pub use ordering::minimum_degree;
