//! Overlapping subdomain data and the nonlinear RAS update.

use rayon::prelude::*;

use super::coarse::CoarseSpace;
use super::{Counters, SolverConfig};
use crate::coarsespace::TrefftzSpace;
use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, LuFactor, LuOrdering, SparsityPattern};
use crate::problems::{FreeDofs, NonlinearSystem};
use crate::scalar::{norm2, Real};
use crate::timestepping::local_continuation;

/// One overlapping subdomain in terms of the unknowns of a system.
#[derive(Clone, Debug)]
struct LocalDomain<T> {
    /// Sorted unknowns of `Ω'_j`.
    dofs: Vec<usize>,
    weights: Vec<T>,
    block: SparsityPattern,
    /// For each block entry, offset within the global Jacobian row.
    block_off: Vec<usize>,
    ext_ptr: Vec<usize>,
    ext_cols: Vec<usize>,
    ext_off: Vec<usize>,
    ordering: LuOrdering,
}

/// Subdomain restrictions `R_j`, weights `P_j` and the optional coarse
/// space, all expressed over the unknowns of one family of systems sharing
/// a Jacobian pattern.
#[derive(Clone, Debug)]
pub struct Schwarz<T> {
    n: usize,
    pattern: SparsityPattern,
    locals: Vec<LocalDomain<T>>,
    coarse: Option<CoarseSpace<T>>,
}

impl<T: Real> Schwarz<T> {
    pub fn new(
        decomp: &Decomposition<T>,
        free: &FreeDofs<T>,
        pattern: &SparsityPattern,
        trefftz: Option<&TrefftzSpace<T>>,
    ) -> Result<Self> {
        let coarse = trefftz.map(|t| CoarseSpace::new(t, free));
        let subsets = (0..decomp.len())
            .map(|j| {
                let weights = decomp.pou_weights::<T>(j);
                decomp
                    .overlap_dofs(j)
                    .iter()
                    .zip(weights)
                    .filter_map(|(&v, w)| free.free_index(v).map(|k| (k, w)))
                    .collect::<Vec<_>>()
            })
            .collect();
        Self::from_subsets(pattern, subsets, coarse)
    }

    /// Builds from explicit `(unknown, weight)` lists; the weights must form
    /// a partition of unity over the unknowns.
    pub fn from_subsets(
        pattern: &SparsityPattern,
        subsets: Vec<Vec<(usize, T)>>,
        coarse: Option<CoarseSpace<T>>,
    ) -> Result<Self> {
        let n = pattern.nrows();
        if let Some(c) = &coarse {
            if c.restriction().ncols() != n {
                return Err(Error::Dimension(format!(
                    "coarse restriction has {} columns for {} unknowns",
                    c.restriction().ncols(),
                    n
                )));
            }
        }
        let mut total = vec![T::zero(); n];
        let mut local_index = vec![usize::MAX; n];
        let mut locals = Vec::new();
        for mut subset in subsets {
            subset.sort_by_key(|&(k, _)| k);
            subset.dedup_by_key(|&mut (k, _)| k);
            if subset.is_empty() {
                continue;
            }
            let dofs: Vec<usize> = subset.iter().map(|&(k, _)| k).collect();
            let weights: Vec<T> = subset.iter().map(|&(_, w)| w).collect();
            for (a, (&k, &w)) in dofs.iter().zip(&weights).enumerate() {
                if k >= n {
                    return Err(Error::Dimension(format!("subdomain unknown {k} out of range {n}")));
                }
                local_index[k] = a;
                total[k] += w;
            }
            let mut rows = Vec::with_capacity(dofs.len());
            let mut block_off = Vec::new();
            let mut ext_ptr = vec![0];
            let mut ext_cols = Vec::new();
            let mut ext_off = Vec::new();
            for &i in &dofs {
                let mut row = Vec::new();
                for (off, &c) in pattern.row(i).iter().enumerate() {
                    match local_index[c] {
                        usize::MAX => {
                            ext_cols.push(c);
                            ext_off.push(off);
                        }
                        a => {
                            row.push(a);
                            block_off.push(off);
                        }
                    }
                }
                rows.push(row);
                ext_ptr.push(ext_cols.len());
            }
            for &k in &dofs {
                local_index[k] = usize::MAX;
            }
            let block = SparsityPattern::from_rows(dofs.len(), rows);
            let ordering = LuOrdering::new(&block);
            locals.push(LocalDomain { dofs, weights, block, block_off, ext_ptr, ext_cols, ext_off, ordering });
        }
        let tol = T::lit(1e-12);
        if let Some(k) = total.iter().position(|&w| (w - T::one()).abs() > tol) {
            return Err(Error::InvalidParameter(format!(
                "subdomain weights sum to {} at unknown {k}",
                total[k]
            )));
        }
        Ok(Schwarz { n, pattern: pattern.clone(), locals, coarse })
    }

    /// Number of unknowns.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of subdomains with at least one unknown.
    pub fn len(&self) -> usize {
        self.locals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locals.is_empty()
    }

    pub fn subdomain_dofs(&self, j: usize) -> &[usize] {
        &self.locals[j].dofs
    }

    pub fn weights(&self, j: usize) -> &[T] {
        &self.locals[j].weights
    }

    pub fn coarse(&self) -> Option<&CoarseSpace<T>> {
        self.coarse.as_ref()
    }

    pub fn without_coarse(&self) -> Self {
        Schwarz { coarse: None, ..self.clone() }
    }

    pub(crate) fn check_system(&self, system: &dyn NonlinearSystem<T>) {
        assert_eq!(system.dim(), self.n, "system dimension differs from the decomposition");
        assert_eq!(system.pattern().nnz(), self.pattern.nnz(), "system pattern differs from the decomposition");
    }

    pub(crate) fn map<R: Send>(&self, parallel: bool, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
        if parallel {
            (0..self.locals.len()).into_par_iter().map(f).collect()
        } else {
            (0..self.locals.len()).map(f).collect()
        }
    }

    /// Local block `R_j J R_j^T` taken from an assembled Jacobian with the
    /// system pattern.
    pub(crate) fn local_block(&self, j: usize, jac: &CsrMatrix<T>) -> CsrMatrix<T> {
        let d = &self.locals[j];
        let ptr = jac.row_ptr();
        let vals = jac.values();
        let mut out = Vec::with_capacity(d.block_off.len());
        let bptr = d.block.row_ptr();
        for (a, &i) in d.dofs.iter().enumerate() {
            for &off in &d.block_off[bptr[a]..bptr[a + 1]] {
                out.push(vals[ptr[i] + off]);
            }
        }
        CsrMatrix::from_pattern(&d.block, out)
    }

    pub(crate) fn local_ordering(&self, j: usize) -> &LuOrdering {
        &self.locals[j].ordering
    }

    /// `R_j x`
    pub(crate) fn restrict(&self, j: usize, x: &[T]) -> Vec<T> {
        self.locals[j].dofs.iter().map(|&k| x[k]).collect()
    }

    /// `y += R_j^T P_j x_j`
    pub(crate) fn add_weighted(&self, j: usize, x: &[T], y: &mut [T]) {
        let d = &self.locals[j];
        for ((&k, &w), &v) in d.dofs.iter().zip(&d.weights).zip(x) {
            if w != T::zero() {
                y[k] += w * v;
            }
        }
    }

    fn local_residual(&self, j: usize, system: &dyn NonlinearSystem<T>, u: &[T]) -> Vec<T> {
        self.locals[j].dofs.iter().map(|&i| system.residual_row(i, u)).collect()
    }

    /// Local Jacobian block and the coupling entries to unknowns outside
    /// the subdomain, both at `u`.
    fn local_jacobian(&self, j: usize, system: &dyn NonlinearSystem<T>, u: &[T]) -> (CsrMatrix<T>, Vec<T>) {
        let d = &self.locals[j];
        let bptr = d.block.row_ptr();
        let mut block = Vec::with_capacity(d.block_off.len());
        let mut ext = Vec::with_capacity(d.ext_off.len());
        let mut buf = Vec::new();
        for (a, &i) in d.dofs.iter().enumerate() {
            buf.clear();
            buf.resize(self.pattern.row(i).len(), T::zero());
            system.jacobian_row(i, u, &mut buf);
            block.extend(d.block_off[bptr[a]..bptr[a + 1]].iter().map(|&o| buf[o]));
            ext.extend(d.ext_off[d.ext_ptr[a]..d.ext_ptr[a + 1]].iter().map(|&o| buf[o]));
        }
        (CsrMatrix::from_pattern(&d.block, block), ext)
    }

    /// Newton on the rows of subdomain `j`, updating the subdomain entries
    /// of `work` in place. Returns the factorization count, as `Err` when
    /// the iteration did not converge.
    fn local_newton(
        &self,
        j: usize,
        system: &dyn NonlinearSystem<T>,
        work: &mut [T],
        config: &SolverConfig,
    ) -> std::result::Result<usize, usize> {
        let d = &self.locals[j];
        let tol = T::lit(config.local_tol);
        let mut its = 0;
        loop {
            let r = self.local_residual(j, system, work);
            let norm = norm2(&r);
            if !norm.is_finite() {
                return Err(its);
            }
            if norm <= tol {
                return Ok(its);
            }
            if its == config.max_local_newton {
                return Err(its);
            }
            let (block, _) = self.local_jacobian(j, system, work);
            its += 1;
            let Ok(lu) = LuFactor::with_ordering(&block, &d.ordering) else {
                return Err(its);
            };
            let delta = lu.solve(&r);
            let start: Vec<T> = d.dofs.iter().map(|&k| work[k]).collect();
            // a step at rounding level means the residual sits on its floor
            let scale = start.iter().fold(T::min_positive_value(), |a, &x| a.max(x.abs()));
            let step = delta.iter().fold(T::zero(), |a, &x| a.max(x.abs()));
            if step <= T::lit(16.0) * T::epsilon() * scale {
                return Ok(its);
            }
            let mut lambda = T::one();
            for _ in 0..20 {
                for ((&k, &dk), &s) in d.dofs.iter().zip(&delta).zip(&start) {
                    work[k] = s - lambda * dk;
                }
                if !config.line_search {
                    break;
                }
                let trial = norm2(&self.local_residual(j, system, work));
                if trial.is_finite() && trial <= (T::one() - T::lit(1e-4) * lambda) * norm {
                    break;
                }
                lambda = lambda * T::lit(0.5);
            }
        }
    }

    /// Solves subdomain `j` from `u`; falls back on time-step continuation
    /// for systems that belong to a time-step family.
    fn solve_local(
        &self,
        j: usize,
        system: &dyn NonlinearSystem<T>,
        u: &[T],
        config: &SolverConfig,
        keep_jacobian: bool,
    ) -> LocalOutcome<T> {
        let d = &self.locals[j];
        let mut work = u.to_vec();
        let mut its = 0;
        let mut continued = false;
        match system.time_step_family().filter(|_| config.local_continuation) {
            None => match self.local_newton(j, system, &mut work, config) {
                Ok(k) => its = k,
                Err(k) => {
                    return LocalOutcome {
                        factorizations: k,
                        continued,
                        result: Err(Error::LocalNewton { subdomain: j, iterations: k }),
                    };
                }
            },
            Some(family) => {
                let dt = family.time_step();
                let start = self.restrict(j, u);
                let mut attempt_work = u.to_vec();
                // the first attempt is the plain solve at the full step
                let outcome = local_continuation(dt, dt * T::lit(config.continuation_floor), &start, |dt_try, init| {
                    for (&k, &v) in d.dofs.iter().zip(init) {
                        attempt_work[k] = v;
                    }
                    let stepped;
                    let sys: &dyn NonlinearSystem<T> = if dt_try == dt {
                        system
                    } else {
                        stepped = family.with_time_step(dt_try);
                        &*stepped
                    };
                    match self.local_newton(j, sys, &mut attempt_work, config) {
                        Ok(k) => {
                            its += k;
                            Some(self.restrict(j, &attempt_work))
                        }
                        Err(k) => {
                            its += k;
                            None
                        }
                    }
                });
                match outcome {
                    Ok(c) => {
                        continued = c.attempts.len() > 1;
                        for (&k, &v) in d.dofs.iter().zip(&c.u) {
                            work[k] = v;
                        }
                    }
                    Err(e) => {
                        return LocalOutcome {
                            factorizations: its,
                            continued: true,
                            result: Err(Error::LocalContinuation { subdomain: j, source: Box::new(e) }),
                        };
                    }
                }
            }
        }
        let values = self.restrict(j, &work);
        let (lu, ext) = if keep_jacobian {
            let (block, ext) = self.local_jacobian(j, system, &work);
            its += 1;
            match LuFactor::with_ordering(&block, &d.ordering) {
                Ok(lu) => (Some(lu), ext),
                Err(e) => {
                    return LocalOutcome {
                        factorizations: its,
                        continued,
                        result: Err(Error::SingularBlock { what: "local", subdomain: j, source: Box::new(e) }),
                    }
                }
            }
        } else {
            (None, Vec::new())
        };
        LocalOutcome { factorizations: its, continued, result: Ok(LocalSolution { values, lu, ext }) }
    }

    /// `NRAS(u) = Σ_j R_j^T P_j G_j(u)`. With `keep_jacobian` the local
    /// Jacobians at the subdomain solutions are factored and kept so that
    /// `∇NRAS(u)` can be applied.
    pub fn nras(
        &self,
        system: &dyn NonlinearSystem<T>,
        u: &[T],
        config: &SolverConfig,
        keep_jacobian: bool,
        counters: &mut Counters,
    ) -> Result<NrasOutput<T>> {
        self.check_system(system);
        let outcomes = self.map(config.parallel, |j| self.solve_local(j, system, u, config, keep_jacobian));
        if counters.k_loc.len() < self.len() {
            counters.k_loc.resize(self.len(), 0);
        }
        let mut locals = Vec::with_capacity(self.len());
        let mut first_error = None;
        for (j, o) in outcomes.into_iter().enumerate() {
            counters.k_loc[j] += o.factorizations;
            counters.local_lu += o.factorizations;
            counters.continuations += usize::from(o.continued);
            match o.result {
                Ok(s) => locals.push(s),
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        if let Some(e) = first_error {
            return Err(e);
        }
        let mut update = u.to_vec();
        for x in update.iter_mut() {
            *x = T::zero();
        }
        for (j, s) in locals.iter().enumerate() {
            self.add_weighted(j, &s.values, &mut update);
        }
        Ok(NrasOutput { update, locals })
    }
}

struct LocalOutcome<T> {
    factorizations: usize,
    continued: bool,
    result: Result<LocalSolution<T>>,
}

/// Subdomain solution `G_j(u)`, with the factored local Jacobian at that
/// point when requested.
#[derive(Clone, Debug)]
pub struct LocalSolution<T> {
    pub values: Vec<T>,
    lu: Option<LuFactor<T>>,
    ext: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct NrasOutput<T> {
    /// `NRAS(u)`
    pub update: Vec<T>,
    pub locals: Vec<LocalSolution<T>>,
}

impl<T: Real> NrasOutput<T> {
    /// `y = ∇NRAS(u) v = -Σ_j R_j^T P_j (R_j J(ũ_j) R_j^T)^{-1} R_j J(ũ_j) (I - R_j^T R_j) v`
    pub fn apply_jacobian(&self, dd: &Schwarz<T>, v: &[T], y: &mut [T], parallel: bool) {
        let parts = dd.map(parallel, |j| {
            let d = &dd.locals[j];
            let s = &self.locals[j];
            let lu = s.lu.as_ref().expect("NRAS output without local Jacobians");
            let rhs: Vec<T> = (0..d.dofs.len())
                .map(|a| {
                    let r = d.ext_ptr[a]..d.ext_ptr[a + 1];
                    d.ext_cols[r.clone()].iter().zip(&s.ext[r]).map(|(&c, &e)| e * v[c]).sum::<T>()
                })
                .collect();
            lu.solve(&rhs)
        });
        y.iter_mut().for_each(|x| *x = T::zero());
        for (j, z) in parts.iter().enumerate() {
            dd.add_weighted(j, z, y);
        }
        y.iter_mut().for_each(|x| *x = -*x);
    }
}
