use std::sync::Arc;

use super::{FreeDofs, NonlinearSystem, Stencil, TimeStepFamily};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, SparsityPattern};
use crate::mesh::{Connectivity, FemOperators, TriMesh};
use crate::scalar::Real;

/// Gradient factor in the transmissibilities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExponentMode {
    /// `|∇u^n|^{1-γ}`.
    #[default]
    PaperLiteral,
    /// `max(|∇u^n|, ε)^{γ-1}`, the factor of the continuous diffusion
    /// coefficient.
    ContinuousKappa,
}

#[derive(Clone, Copy, Debug)]
pub struct DwParams<T> {
    pub alpha: T,
    pub gamma: T,
    pub friction: T,
    pub exponent_mode: ExponentMode,
    pub epsilon: T,
}

impl<T: Real> Default for DwParams<T> {
    fn default() -> Self {
        DwParams {
            alpha: T::lit(1.5),
            gamma: T::lit(0.5),
            friction: T::lit(30.0),
            exponent_mode: ExponentMode::PaperLiteral,
            epsilon: T::lit(1e-6),
        }
    }
}

impl<T: Real> DwParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.gamma > T::one() {
            return Err(Error::InvalidParameter(format!("gamma must not exceed 1, got {}", self.gamma)));
        }
        if self.alpha < T::one() {
            return Err(Error::InvalidParameter(format!("alpha must be at least 1, got {}", self.alpha)));
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::InvalidParameter("gradient regularization must be positive".into()));
        }
        Ok(())
    }
}

/// Transmissibilities `τ_iℓ = -c_f Σ_T f(|∇u^n|_T|) ∫_T ∇η_ℓ·∇η_i` on the
/// node-neighbour pattern.
pub fn dw_build_tau<T: Real>(
    mesh: &TriMesh<T>,
    fem: &FemOperators<T>,
    u_prev: &[T],
    params: &DwParams<T>,
) -> Result<CsrMatrix<T>> {
    params.validate()?;
    let mut tau = fem.stiffness.map(|_| T::zero());
    let pattern = fem.stiffness.pattern();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let g = fem.gradient(tri, t, u_prev);
        let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
        let factor = match params.exponent_mode {
            ExponentMode::PaperLiteral => norm.powf(T::one() - params.gamma),
            ExponentMode::ContinuousKappa => norm.max(params.epsilon).powf(params.gamma - T::one()),
        };
        let grads = &fem.gradients[t];
        for a in 0..3 {
            for b in 0..3 {
                let k = fem.areas[t] * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                let pos = pattern.position(tri[a], tri[b]).expect("neighbour pattern");
                tau.values_mut()[pos] -= params.friction * factor * k;
            }
        }
    }
    Ok(tau)
}

/// Water depth.
#[inline]
fn depth<T: Real>(u: T, zb: T) -> T {
    (u - zb).max(T::zero())
}

/// Upwinded pairwise flux `τ h_iℓ^α (u_i - u_ℓ)`; the depth is taken at
/// `i` when `τ (u_i - u_ℓ) >= 0`.
pub fn pairwise_flux<T: Real>(tau: T, ui: T, ul: T, zi: T, zl: T, alpha: T) -> T {
    let d = ui - ul;
    let h = if tau * d >= T::zero() { depth(ui, zi) } else { depth(ul, zl) };
    tau * h.powf(alpha) * d
}

/// Derivatives of [`pairwise_flux`] with respect to `u_i` and `u_ℓ` on the
/// active upwind branch; `d max(x, 0)/dx` is zero for `x <= 0`.
fn pairwise_flux_derivative<T: Real>(tau: T, ui: T, ul: T, zi: T, zl: T, alpha: T) -> (T, T) {
    let d = ui - ul;
    let (upstream_is_i, u_up, z_up) = if tau * d >= T::zero() { (true, ui, zi) } else { (false, ul, zl) };
    let h = depth(u_up, z_up);
    let ha = h.powf(alpha);
    let dh = if u_up - z_up > T::zero() { alpha * h.powf(alpha - T::one()) } else { T::zero() };
    if upstream_is_i {
        (tau * (dh * d + ha), -tau * ha)
    } else {
        (tau * ha, tau * (dh * d - ha))
    }
}

#[derive(Clone, Debug)]
struct DwData<T> {
    free: FreeDofs<T>,
    stencil: Stencil,
    mass: Vec<T>,
    u_prev: Vec<T>,
    zb: Vec<T>,
    source: Vec<T>,
    /// τ between unknowns, aligned with the pattern.
    tau: Vec<T>,
    /// τ to the Dirichlet neighbours, aligned with `stencil.dir_nodes`.
    tau_dir: Vec<T>,
    zb_dir: Vec<T>,
    alpha: T,
}

/// One semi-implicit Diffusive Wave step
/// `F_i(u) = m_i/Δt (u_i - u_i^n) + Σ_ℓ τ_iℓ h_iℓ^α (u_i - u_ℓ) - m_i f_i`.
#[derive(Clone, Debug)]
pub struct DwStep<T> {
    data: Arc<DwData<T>>,
    dt: T,
}

/// Builds the step system. `u_prev` and `zb` are nodal (all nodes);
/// Dirichlet values come from `free`.
pub fn dw_step_system<T: Real>(
    mesh: &TriMesh<T>,
    fem: &FemOperators<T>,
    free: FreeDofs<T>,
    tau: &CsrMatrix<T>,
    u_prev: &[T],
    zb: &[T],
    dt: T,
    alpha: T,
) -> Result<DwStep<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let conn = Connectivity::build(mesh);
    let stencil = Stencil::new(&conn, &free);
    let nodes = free.free_nodes();
    let mut tau_free = Vec::with_capacity(stencil.pattern.nnz());
    let mut tau_dir = Vec::with_capacity(stencil.dir_nodes.len());
    for (i, &v) in nodes.iter().enumerate() {
        tau_free.extend(stencil.pattern.row(i).iter().map(|&k| tau.get(v, nodes[k])));
        tau_dir.extend(stencil.dirichlet(i).iter().map(|&l| tau.get(v, l)));
    }
    let data = DwData {
        mass: nodes.iter().map(|&v| fem.lumped_mass[v]).collect(),
        u_prev: free.to_free(u_prev),
        zb: free.to_free(zb),
        source: vec![T::zero(); nodes.len()],
        zb_dir: stencil.dir_nodes.iter().map(|&l| zb[l]).collect(),
        tau: tau_free,
        tau_dir,
        stencil,
        free,
        alpha,
    };
    Ok(DwStep { data: Arc::new(data), dt })
}

impl<T: Real> DwStep<T> {
    pub fn free_dofs(&self) -> &FreeDofs<T> {
        &self.data.free
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn previous(&self) -> &[T] {
        &self.data.u_prev
    }

    /// Bathymetry at the unknowns.
    pub fn bathymetry(&self) -> &[T] {
        &self.data.zb
    }

    /// Replaces the per-node source `f` (on unknowns; default zero).
    pub fn with_source(self, source: Vec<T>) -> Self {
        assert_eq!(source.len(), self.data.mass.len());
        let mut data = Arc::unwrap_or_clone(self.data);
        data.source = source;
        DwStep { data: Arc::new(data), dt: self.dt }
    }
}

impl<T: Real> NonlinearSystem<T> for DwStep<T> {
    fn dim(&self) -> usize {
        self.data.mass.len()
    }

    fn pattern(&self) -> &SparsityPattern {
        &self.data.stencil.pattern
    }

    fn residual_row(&self, i: usize, u: &[T]) -> T {
        let d = &*self.data;
        let lo = d.stencil.pattern.row_ptr()[i];
        let mut r = d.mass[i] / self.dt * (u[i] - d.u_prev[i]) - d.mass[i] * d.source[i];
        for (&k, &tau) in d.stencil.pattern.row(i).iter().zip(&d.tau[lo..]) {
            if k != i {
                r += pairwise_flux(tau, u[i], u[k], d.zb[i], d.zb[k], d.alpha);
            }
        }
        let dlo = d.stencil.dir_ptr[i];
        for (k, &l) in d.stencil.dirichlet(i).iter().enumerate() {
            let g = d.free.dirichlet_value(l);
            r += pairwise_flux(d.tau_dir[dlo + k], u[i], g, d.zb[i], d.zb_dir[dlo + k], d.alpha);
        }
        r
    }

    fn jacobian_row(&self, i: usize, u: &[T], out: &mut [T]) {
        let d = &*self.data;
        let lo = d.stencil.pattern.row_ptr()[i];
        let row = d.stencil.pattern.row(i);
        let mut diag = d.mass[i] / self.dt;
        let mut diag_slot = usize::MAX;
        for (s, (&k, &tau)) in row.iter().zip(&d.tau[lo..]).enumerate() {
            if k == i {
                diag_slot = s;
                out[s] = T::zero();
                continue;
            }
            let (di, dl) = pairwise_flux_derivative(tau, u[i], u[k], d.zb[i], d.zb[k], d.alpha);
            diag += di;
            out[s] = dl;
        }
        let dlo = d.stencil.dir_ptr[i];
        for (k, &l) in d.stencil.dirichlet(i).iter().enumerate() {
            let g = d.free.dirichlet_value(l);
            diag += pairwise_flux_derivative(d.tau_dir[dlo + k], u[i], g, d.zb[i], d.zb_dir[dlo + k], d.alpha).0;
        }
        out[diag_slot] = diag;
    }

    fn time_step_family(&self) -> Option<&dyn TimeStepFamily<T>> {
        Some(self)
    }
}

impl<T: Real> TimeStepFamily<T> for DwStep<T> {
    fn time_step(&self) -> T {
        self.dt
    }

    fn with_time_step(&self, dt: T) -> Box<dyn NonlinearSystem<T> + '_> {
        Box::new(DwStep { data: Arc::clone(&self.data), dt })
    }
}
