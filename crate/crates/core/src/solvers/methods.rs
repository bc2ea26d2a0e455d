//! Outer iterations: Newton-Krylov, two-step, one- and two-level RASPEN
//! and Anderson-accelerated coarse NRAS.

use std::collections::VecDeque;

use super::coarse::{coarse_linear_correction, coarse_nonlinear_correction};
use super::ras::ras2_preconditioner;
use super::schwarz::{NrasOutput, Schwarz};
use super::{Counters, Failure, SolveResult, Solution, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::{anderson_mixing, gmres, CsrMatrix, Identity, LinearOperator, LuFactor};
use crate::problems::NonlinearSystem;
use crate::scalar::{norm2, Real};

/// Shared outer loop. `step` maps `(u_k, F(u_k))` to `u_{k+1}` and records
/// its own inner work.
fn outer_loop<T: Real>(
    system: &dyn NonlinearSystem<T>,
    dd: &Schwarz<T>,
    u0: &[T],
    config: &SolverConfig,
    mut step: impl FnMut(&[T], &[T], &mut Counters) -> Result<Vec<T>>,
) -> SolveResult<T> {
    let mut counters = Counters::new(dd.len());
    let fail = |error, u: Vec<T>, counters| Err(Failure { error, last: Solution { u, counters } });
    if let Err(e) = config.validate() {
        return fail(e, u0.to_vec(), counters);
    }
    dd.check_system(system);
    let mut u = u0.to_vec();
    let mut fu = system.residual(&u);
    let r0 = norm2(&fu);
    if !r0.is_finite() {
        return fail(Error::NonFinite("initial residual"), u, counters);
    }
    let target = (T::lit(config.outer_tol) * r0).max(T::lit(config.outer_abs_tol));
    counters.push_trace(r0.to_f64_lossy(), 0);
    let mut r = r0;
    loop {
        if r <= target {
            return Ok(Solution { u, counters });
        }
        if counters.k_out == config.max_outer {
            let error = Error::OuterLimit { max_outer: config.max_outer, residual: r.to_f64_lossy() };
            return fail(error, u, counters);
        }
        let gm_before = counters.k_gm_total();
        match step(&u, &fu, &mut counters) {
            Ok(next) => {
                u = next;
                counters.k_out += 1;
                fu = system.residual(&u);
                r = norm2(&fu);
                let gm = counters.k_gm_total() - gm_before;
                counters.push_trace(r.to_f64_lossy(), gm);
                if !r.is_finite() {
                    return fail(Error::NonFinite("outer iterate"), u, counters);
                }
            }
            Err(e) => return fail(e, u, counters),
        }
    }
}

/// GMRES with the iteration count recorded even on failure.
fn krylov<T: Real>(
    op: &dyn LinearOperator<T>,
    precond: &dyn LinearOperator<T>,
    b: &[T],
    config: &SolverConfig,
    counters: &mut Counters,
) -> Result<Vec<T>> {
    match gmres(op, precond, b, config.gmres) {
        Ok(out) => {
            counters.k_gm.push(out.iterations);
            Ok(out.x)
        }
        Err(e) => {
            if let Error::GmresNoConvergence { iterations, .. } = &e {
                counters.k_gm.push(*iterations);
            }
            Err(e)
        }
    }
}

/// `base - δ`, backtracking on `||F||` when line search is enabled.
fn update<T: Real>(system: &dyn NonlinearSystem<T>, base: &[T], f_base: &[T], delta: &[T], config: &SolverConfig) -> Vec<T> {
    let trial = |lambda: T| -> Vec<T> { base.iter().zip(delta).map(|(&b, &d)| b - lambda * d).collect() };
    if !config.line_search {
        return trial(T::one());
    }
    let r0 = norm2(f_base);
    let mut lambda = T::one();
    for _ in 0..20 {
        let candidate = trial(lambda);
        let r = norm2(&system.residual(&candidate));
        if r.is_finite() && r <= (T::one() - T::lit(1e-4) * lambda) * r0 {
            return candidate;
        }
        lambda = lambda * T::lit(0.5);
    }
    trial(lambda)
}

/// Global Newton correction `base - J(base)^{-1} F(base)` with a
/// RAS-preconditioned GMRES solve.
fn newton_correction<T: Real>(
    system: &dyn NonlinearSystem<T>,
    dd: &Schwarz<T>,
    base: &[T],
    f_base: &[T],
    config: &SolverConfig,
    counters: &mut Counters,
) -> Result<Vec<T>> {
    let jac = system.jacobian(base);
    let precond = ras2_preconditioner(&jac, dd, config.two_level, config.parallel)?;
    counters.precond_lu += precond.local_factorizations();
    counters.coarse_lu += precond.coarse_factorizations();
    let delta = krylov(&jac, &precond, f_base, config, counters)?;
    Ok(update(system, base, f_base, &delta, config))
}

/// Newton-Krylov with the two-level RAS preconditioner.
pub fn newton_krylov<T: Real>(
    system: &dyn NonlinearSystem<T>,
    dd: &Schwarz<T>,
    u0: &[T],
    config: &SolverConfig,
) -> SolveResult<T> {
    outer_loop(system, dd, u0, config, |u, fu, counters| newton_correction(system, dd, u, fu, config, counters))
}

/// One NRAS sweep followed by a global Newton correction at the NRAS
/// iterate.
pub fn two_step<T: Real>(
    system: &dyn NonlinearSystem<T>,
    dd: &Schwarz<T>,
    u0: &[T],
    config: &SolverConfig,
) -> SolveResult<T> {
    outer_loop(system, dd, u0, config, |u, _, counters| {
        let hat = dd.nras(system, u, config, false, counters)?.update;
        let f_hat = system.residual(&hat);
        newton_correction(system, dd, &hat, &f_hat, config, counters)
    })
}

/// Preconditioned residual `ℱ(u)` with its matrix-free Jacobian.
pub struct RaspenLinearization<'a, T> {
    dd: &'a Schwarz<T>,
    nras: NrasOutput<T>,
    coarse: Option<CoarseJacobian<T>>,
    parallel: bool,
    /// `ℱ(u)`
    pub residual: Vec<T>,
    /// Coarse Newton solves spent on `c_H(NRAS(u))`.
    pub coarse_solves: usize,
}

struct CoarseJacobian<T> {
    lu: LuFactor<T>,
    jac: CsrMatrix<T>,
}

/// Evaluates `ℱ(u) = u - NRAS(u)`, or with `two_level`
/// `ℱ(u) = u - NRAS(u) + R_H^T c_H(NRAS(u))`, and prepares `∇ℱ(u)`.
pub fn raspen_linearize<'a, T: Real>(
    system: &dyn NonlinearSystem<T>,
    dd: &'a Schwarz<T>,
    u: &[T],
    config: &SolverConfig,
    two_level: bool,
    counters: &mut Counters,
) -> Result<RaspenLinearization<'a, T>> {
    let nras = dd.nras(system, u, config, true, counters)?;
    let (target, coarse, coarse_solves) = match dd.coarse().filter(|_| two_level) {
        Some(space) => {
            let corr = coarse_nonlinear_correction(system, space, &nras.update, config, counters)?;
            let jac = system.jacobian(&corr.corrected);
            let lu = space.factor(&jac)?;
            counters.coarse_lu += 1;
            (corr.corrected, Some(CoarseJacobian { lu, jac }), corr.solves)
        }
        None => (nras.update.clone(), None, 0),
    };
    let residual = u.iter().zip(&target).map(|(&a, &b)| a - b).collect();
    Ok(RaspenLinearization { dd, nras, coarse, parallel: config.parallel, residual, coarse_solves })
}

/// `ℱ(u)` alone.
pub fn raspen_residual<T: Real>(
    system: &dyn NonlinearSystem<T>,
    dd: &Schwarz<T>,
    u: &[T],
    config: &SolverConfig,
    two_level: bool,
) -> Result<Vec<T>> {
    let mut counters = Counters::new(dd.len());
    let hat = dd.nras(system, u, config, false, &mut counters)?.update;
    let target = match dd.coarse().filter(|_| two_level) {
        Some(space) => coarse_nonlinear_correction(system, space, &hat, config, &mut counters)?.corrected,
        None => hat,
    };
    Ok(u.iter().zip(&target).map(|(&a, &b)| a - b).collect())
}

impl<T: Real> LinearOperator<T> for RaspenLinearization<'_, T> {
    fn dim(&self) -> usize {
        self.residual.len()
    }

    /// `y = v - z + R_H^T (R_H J_w R_H^T)^{-1} R_H J_w z` with
    /// `z = ∇NRAS(u) v` and `J_w = ∇F(NRAS(u) - R_H^T c_H)`.
    fn apply(&self, v: &[T], y: &mut [T]) {
        let mut z = vec![T::zero(); v.len()];
        self.nras.apply_jacobian(self.dd, v, &mut z, self.parallel);
        for ((yi, &vi), &zi) in y.iter_mut().zip(v).zip(&z) {
            *yi = vi - zi;
        }
        if let (Some(cj), Some(space)) = (&self.coarse, self.dd.coarse()) {
            let jz = cj.jac.mul_vec(&z);
            let back = space.prolong(&cj.lu.solve(&space.restrict(&jz)));
            for (yi, b) in y.iter_mut().zip(back) {
                *yi += b;
            }
        }
    }
}

fn raspen<T: Real>(
    system: &dyn NonlinearSystem<T>,
    dd: &Schwarz<T>,
    u0: &[T],
    config: &SolverConfig,
    two_level: bool,
) -> SolveResult<T> {
    outer_loop(system, dd, u0, config, |u, _, counters| {
        let lin = raspen_linearize(system, dd, u, config, two_level, counters)?;
        if two_level {
            counters.k_c.push(lin.coarse_solves);
        }
        let delta = krylov(&lin, &Identity(u.len()), &lin.residual, config, counters)?;
        Ok(u.iter().zip(&delta).map(|(&a, &d)| a - d).collect())
    })
}

/// Newton on `u - NRAS(u) = 0` with unpreconditioned GMRES.
pub fn raspen1<T: Real>(
    system: &dyn NonlinearSystem<T>,
    dd: &Schwarz<T>,
    u0: &[T],
    config: &SolverConfig,
) -> SolveResult<T> {
    raspen(system, dd, u0, config, false)
}

/// Newton on `u - NRAS(u) + R_H^T c_H(NRAS(u)) = 0`. Without a coarse
/// space this is [`raspen1`].
pub fn raspen2<T: Real>(
    system: &dyn NonlinearSystem<T>,
    dd: &Schwarz<T>,
    u0: &[T],
    config: &SolverConfig,
) -> SolveResult<T> {
    raspen(system, dd, u0, config, true)
}

/// Fixed-point map `c_{H,l}(NRAS(u))` (just `NRAS(u)` without coarse space).
pub fn coarse_nras_map<T: Real>(
    system: &dyn NonlinearSystem<T>,
    dd: &Schwarz<T>,
    u: &[T],
    config: &SolverConfig,
    counters: &mut Counters,
) -> Result<Vec<T>> {
    let hat = dd.nras(system, u, config, false, counters)?.update;
    match dd.coarse() {
        Some(space) => {
            let next = coarse_linear_correction(system, space, &hat, counters)?;
            counters.k_c.push(1);
            Ok(next)
        }
        None => Ok(hat),
    }
}

/// Anderson acceleration of `u ↦ c_{H,l}(NRAS(u))` with history
/// `config.anderson_m`.
pub fn anderson_coarse<T: Real>(
    system: &dyn NonlinearSystem<T>,
    dd: &Schwarz<T>,
    u0: &[T],
    config: &SolverConfig,
) -> SolveResult<T> {
    let mut residuals: VecDeque<Vec<T>> = VecDeque::new();
    let mut images: VecDeque<Vec<T>> = VecDeque::new();
    outer_loop(system, dd, u0, config, |u, _, counters| {
        let image = coarse_nras_map(system, dd, u, config, counters)?;
        residuals.push_back(image.iter().zip(u).map(|(&p, &x)| p - x).collect());
        images.push_back(image);
        while residuals.len() > config.anderson_m + 1 {
            residuals.pop_front();
            images.pop_front();
        }
        let (next, _) = anderson_mixing(residuals.make_contiguous(), images.make_contiguous());
        Ok(next)
    })
}
