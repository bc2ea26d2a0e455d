use super::{FreeDofs, NonlinearSystem, Stencil};
use crate::error::{Error, Result};
use crate::linalg::SparsityPattern;
use crate::mesh::{Connectivity, FemOperators, TriMesh};
use crate::scalar::Real;

/// Stationary porous medium system
/// `F_i(u) = m_i u_i + c Σ_ℓ A_iℓ max(u_ℓ, 0)^m` on the free nodes.
#[derive(Clone, Debug)]
pub struct PmeSystem<T> {
    free: FreeDofs<T>,
    pattern: SparsityPattern,
    mass: Vec<T>,
    /// `c A_iℓ` aligned with the pattern.
    coupling: Vec<T>,
    /// Contribution of the Dirichlet neighbours.
    boundary: Vec<T>,
    exponent: i32,
}

pub fn pme_system<T: Real>(
    mesh: &TriMesh<T>,
    fem: &FemOperators<T>,
    exponent: i32,
    scale: T,
    free: FreeDofs<T>,
) -> Result<PmeSystem<T>> {
    if exponent < 2 {
        return Err(Error::InvalidParameter(format!("porous medium exponent must be at least 2, got {exponent}")));
    }
    let conn = Connectivity::build(mesh);
    let stencil = Stencil::new(&conn, &free);
    let a = &fem.stiffness;
    let mut coupling = Vec::with_capacity(stencil.pattern.nnz());
    let mut boundary = Vec::with_capacity(free.len());
    for (i, &v) in free.free_nodes().iter().enumerate() {
        coupling.extend(stencil.pattern.row(i).iter().map(|&k| scale * a.get(v, free.free_nodes()[k])));
        boundary.push(
            stencil
                .dirichlet(i)
                .iter()
                .map(|&l| scale * a.get(v, l) * free.dirichlet_value(l).max(T::zero()).powi(exponent))
                .sum(),
        );
    }
    let mass = free.free_nodes().iter().map(|&v| fem.lumped_mass[v]).collect();
    Ok(PmeSystem { free, pattern: stencil.pattern, mass, coupling, boundary, exponent })
}

impl<T: Real> PmeSystem<T> {
    pub fn free_dofs(&self) -> &FreeDofs<T> {
        &self.free
    }

    pub fn exponent(&self) -> i32 {
        self.exponent
    }
}

impl<T: Real> NonlinearSystem<T> for PmeSystem<T> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn pattern(&self) -> &SparsityPattern {
        &self.pattern
    }

    fn residual_row(&self, i: usize, u: &[T]) -> T {
        let lo = self.pattern.row_ptr()[i];
        let flux: T = self
            .pattern
            .row(i)
            .iter()
            .zip(&self.coupling[lo..])
            .map(|(&k, &a)| a * u[k].max(T::zero()).powi(self.exponent))
            .sum();
        self.mass[i] * u[i] + flux + self.boundary[i]
    }

    fn jacobian_row(&self, i: usize, u: &[T], out: &mut [T]) {
        let lo = self.pattern.row_ptr()[i];
        let m = T::from_i32(self.exponent).expect("small exponent");
        for (slot, (&k, &a)) in out.iter_mut().zip(self.pattern.row(i).iter().zip(&self.coupling[lo..])) {
            let p = u[k].max(T::zero());
            *slot = a * m * p.powi(self.exponent - 1);
            if k == i {
                *slot += self.mass[i];
            }
        }
    }
}
