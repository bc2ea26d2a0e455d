//! Discrete nonlinear systems `F(u) = 0` over the free (non-Dirichlet) dofs.

mod bathymetry;
mod dw;
mod pme;

pub use bathymetry::{Bathymetry, RasterGrid};
pub use dw::{dw_build_tau, dw_step_system, pairwise_flux, DwParams, DwStep, ExponentMode};
pub use pme::{pme_system, PmeSystem};

use crate::linalg::{CsrMatrix, SparsityPattern};
use crate::mesh::{Connectivity, TriMesh};
use crate::scalar::Real;

/// Residual and Jacobian evaluated row by row, so that subdomain solvers
/// can work on a subset of rows of a shared global state.
pub trait NonlinearSystem<T: Real>: Sync {
    /// Number of unknowns.
    fn dim(&self) -> usize;

    /// Jacobian sparsity over the unknowns; contains the diagonal.
    fn pattern(&self) -> &SparsityPattern;

    fn residual_row(&self, i: usize, u: &[T]) -> T;

    /// Writes row `i` of the Jacobian, aligned with `pattern().row(i)`.
    fn jacobian_row(&self, i: usize, u: &[T], out: &mut [T]);

    fn residual(&self, u: &[T]) -> Vec<T> {
        (0..self.dim()).map(|i| self.residual_row(i, u)).collect()
    }

    fn jacobian(&self, u: &[T]) -> CsrMatrix<T> {
        let pattern = self.pattern();
        let mut values = vec![T::zero(); pattern.nnz()];
        let ptr = pattern.row_ptr();
        for i in 0..self.dim() {
            self.jacobian_row(i, u, &mut values[ptr[i]..ptr[i + 1]]);
        }
        CsrMatrix::from_pattern(pattern, values)
    }

    /// Systems that belong to a family parametrized by a time step.
    fn time_step_family(&self) -> Option<&dyn TimeStepFamily<T>> {
        None
    }
}

/// `Δt ↦ F_Δt`, used by local time-step continuation.
pub trait TimeStepFamily<T: Real>: Sync {
    fn time_step(&self) -> T;

    fn with_time_step(&self, dt: T) -> Box<dyn NonlinearSystem<T> + '_>;
}

/// Split of the mesh nodes into unknowns and Dirichlet nodes.
#[derive(Clone, Debug)]
pub struct FreeDofs<T> {
    free_nodes: Vec<usize>,
    free_index: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> FreeDofs<T> {
    /// `g` gives the Dirichlet value at a node position.
    pub fn new(mesh: &TriMesh<T>, g: impl Fn([T; 2]) -> T) -> Self {
        let n = mesh.node_count();
        let mut free_index = vec![usize::MAX; n];
        let mut values = vec![T::zero(); n];
        let mut free_nodes = Vec::new();
        for v in 0..n {
            if mesh.is_dirichlet(v) {
                values[v] = g(mesh.nodes()[v]);
            } else {
                free_index[v] = free_nodes.len();
                free_nodes.push(v);
            }
        }
        FreeDofs { free_nodes, free_index, values }
    }

    pub fn len(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free_nodes.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.free_index.len()
    }

    /// Node of each unknown.
    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    /// Unknown of a node, if it is free.
    pub fn free_index(&self, node: usize) -> Option<usize> {
        let k = self.free_index[node];
        (k != usize::MAX).then_some(k)
    }

    /// Dirichlet value of a node (zero on free nodes).
    pub fn dirichlet_value(&self, node: usize) -> T {
        self.values[node]
    }

    /// Full nodal vector from free values and Dirichlet data.
    pub fn to_full(&self, u: &[T]) -> Vec<T> {
        let mut out = self.values.clone();
        for (k, &v) in self.free_nodes.iter().enumerate() {
            out[v] = u[k];
        }
        out
    }

    pub fn to_free(&self, full: &[T]) -> Vec<T> {
        self.free_nodes.iter().map(|&v| full[v]).collect()
    }
}

/// Per free row: neighbouring unknowns (the Jacobian pattern) and
/// neighbouring Dirichlet nodes.
#[derive(Clone, Debug)]
pub(crate) struct Stencil {
    pub pattern: SparsityPattern,
    pub dir_ptr: Vec<usize>,
    pub dir_nodes: Vec<usize>,
}

impl Stencil {
    pub fn new<T: Real>(conn: &Connectivity, free: &FreeDofs<T>) -> Self {
        let mut rows = Vec::with_capacity(free.len());
        let mut dir_ptr = vec![0];
        let mut dir_nodes = Vec::new();
        for &v in free.free_nodes() {
            let mut row = Vec::new();
            for &l in &conn.node_neighbors[v] {
                match free.free_index(l) {
                    Some(k) => row.push(k),
                    None => dir_nodes.push(l),
                }
            }
            rows.push(row);
            dir_ptr.push(dir_nodes.len());
        }
        Stencil { pattern: SparsityPattern::from_rows(free.len(), rows), dir_ptr, dir_nodes }
    }

    pub fn dirichlet(&self, i: usize) -> &[usize] {
        &self.dir_nodes[self.dir_ptr[i]..self.dir_ptr[i + 1]]
    }
}

/// Affine system `F(u) = A u - b`.
#[derive(Clone, Debug)]
pub struct LinearSystem<T> {
    pub matrix: CsrMatrix<T>,
    pub rhs: Vec<T>,
    pattern: SparsityPattern,
}

impl<T: Real> LinearSystem<T> {
    pub fn new(matrix: CsrMatrix<T>, rhs: Vec<T>) -> Self {
        assert_eq!(matrix.nrows(), rhs.len());
        let pattern = matrix.pattern();
        LinearSystem { matrix, rhs, pattern }
    }
}

impl<T: Real> NonlinearSystem<T> for LinearSystem<T> {
    fn dim(&self) -> usize {
        self.rhs.len()
    }

    fn pattern(&self) -> &SparsityPattern {
        &self.pattern
    }

    fn residual_row(&self, i: usize, u: &[T]) -> T {
        let (cols, vals) = self.matrix.row(i);
        cols.iter().zip(vals).map(|(&j, &a)| a * u[j]).sum::<T>() - self.rhs[i]
    }

    fn jacobian_row(&self, i: usize, _u: &[T], out: &mut [T]) {
        out.copy_from_slice(self.matrix.row(i).1);
    }
}

/// Jacobian pattern shared by every system assembled on `mesh` with these
/// unknowns.
pub fn free_pattern<T: Real>(mesh: &TriMesh<T>, free: &FreeDofs<T>) -> SparsityPattern {
    Stencil::new(&Connectivity::build(mesh), free).pattern
}
