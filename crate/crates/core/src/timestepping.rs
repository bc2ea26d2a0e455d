//! Semi-implicit Diffusive Wave time loop and time-step continuation.

use log::{debug, info, warn};

use crate::error::{Error, Result};
use crate::mesh::{FemOperators, TriMesh};
use crate::problems::{dw_build_tau, dw_step_system, DwParams, FreeDofs};
use crate::scalar::Real;
use crate::solvers::{solve, Counters, Method, Schwarz, SolverConfig};

/// Water depth at which a node counts as flooded.
pub const FLOODED_DEPTH: f64 = 0.01;

/// Outcome of [`local_continuation`].
#[derive(Clone, Debug)]
pub struct Continuation<T> {
    /// Root at the target time step.
    pub u: Vec<T>,
    /// Time steps attempted, in order.
    pub attempts: Vec<T>,
}

/// Continuation in the time step for `F_Δt(u) = 0`.
///
/// `attempt(dt, u)` runs Newton for `F_dt` from `u` and returns the root, or
/// `None` on failure (the current iterate is then kept). First the step is
/// halved until an attempt succeeds; then the full step is retried from the
/// latest root, bisecting between the last working step and the last trial
/// on failure. Fails once a step or a bisection gap falls below `floor`.
pub fn local_continuation<T: Real>(
    dt: T,
    floor: T,
    u0: &[T],
    mut attempt: impl FnMut(T, &[T]) -> Option<Vec<T>>,
) -> Result<Continuation<T>> {
    let mut attempts = Vec::new();
    let mut u = u0.to_vec();
    let mut worked = dt;
    let underflow = |dt: T| Error::TimeStepUnderflow { dt: dt.to_f64_lossy(), floor: floor.to_f64_lossy() };
    loop {
        attempts.push(worked);
        if let Some(root) = attempt(worked, &u) {
            u = root;
            break;
        }
        worked = worked / T::lit(2.0);
        if worked < floor {
            return Err(underflow(worked));
        }
    }
    if worked == dt {
        return Ok(Continuation { u, attempts });
    }
    let half = T::lit(0.5);
    loop {
        attempts.push(dt);
        if let Some(root) = attempt(dt, &u) {
            return Ok(Continuation { u: root, attempts });
        }
        let mut trial = (worked + dt) * half;
        loop {
            if trial - worked < floor {
                return Err(underflow(trial - worked));
            }
            attempts.push(trial);
            match attempt(trial, &u) {
                Some(root) => {
                    u = root;
                    worked = trial;
                    break;
                }
                None => trial = (worked + trial) * half,
            }
        }
    }
}

/// Global adaptive policy: shrink by `factor` on failure, grow by `factor`
/// on success, never above `base`.
pub fn next_time_step<T: Real>(dt: T, success: bool, factor: T, base: T) -> T {
    if success {
        (dt * factor).min(base)
    } else {
        dt / factor
    }
}

#[derive(Clone, Debug)]
pub struct TimeLoopConfig<T> {
    pub final_time: T,
    pub base_dt: T,
    pub method: Method,
    /// Shrink and regrow the global step on solver failure.
    pub global_adaptive: bool,
    pub factor: T,
    pub min_dt: T,
}

impl<T: Real> TimeLoopConfig<T> {
    /// Newton runs with the adaptive policy, the other methods with a fixed
    /// step and local continuation.
    pub fn new(final_time: T, base_dt: T, method: Method) -> Self {
        TimeLoopConfig {
            final_time,
            base_dt,
            method,
            global_adaptive: method == Method::Newton,
            factor: T::lit(2.0).sqrt(),
            min_dt: base_dt / T::lit(1024.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.final_time > T::zero()) {
            return Err(Error::InvalidParameter("final time must be positive".into()));
        }
        if !(self.min_dt > T::zero() && self.min_dt <= self.base_dt) {
            return Err(Error::InvalidParameter("need 0 < min_dt <= base_dt".into()));
        }
        if !(self.factor > T::one()) {
            return Err(Error::InvalidParameter("adaptive factor must exceed 1".into()));
        }
        Ok(())
    }
}

/// Record of one accepted time step.
#[derive(Clone, Debug)]
pub struct StepRecord<T> {
    pub step: usize,
    /// Time at the end of the step.
    pub t: T,
    pub dt: T,
    pub k_out: usize,
    pub k_gm: usize,
    pub k_c: usize,
    /// Nodes with water depth at least [`FLOODED_DEPTH`].
    pub flooded: usize,
    pub max_depth: T,
    /// `Σ m_i h_i` over the unknowns.
    pub volume: T,
    /// Failed global attempts before this step was accepted.
    pub rejected: usize,
    pub continuations: usize,
}

#[derive(Clone, Debug)]
pub struct TransientReport<T> {
    pub steps: Vec<StepRecord<T>>,
    /// Final nodal free surface.
    pub u: Vec<T>,
    /// Cumulative work over all accepted and rejected attempts.
    pub counters: Counters,
    /// Global time-step reductions.
    pub reductions: usize,
}

/// Problem data fixed over a transient run.
pub struct DwScene<'a, T> {
    pub mesh: &'a TriMesh<T>,
    pub fem: &'a FemOperators<T>,
    /// Unknowns and Dirichlet values.
    pub free: &'a FreeDofs<T>,
    /// Nodal bathymetry.
    pub zb: &'a [T],
    pub params: DwParams<T>,
}

/// Runs the semi-implicit scheme from the nodal state `u0` to
/// `config.final_time`.
pub fn run_transient<T: Real>(
    scene: &DwScene<'_, T>,
    dd: &Schwarz<T>,
    u0: &[T],
    config: &TimeLoopConfig<T>,
    solver: &SolverConfig,
) -> Result<TransientReport<T>> {
    config.validate()?;
    scene.params.validate()?;
    let DwScene { mesh, fem, free, zb, params } = *scene;
    let mut u = u0.to_vec();
    for (v, x) in u.iter_mut().enumerate() {
        if free.free_index(v).is_none() {
            *x = free.dirichlet_value(v);
        }
    }
    let mut t = T::zero();
    let mut dt = config.base_dt;
    let mut steps = Vec::new();
    let mut counters = Counters::new(dd.len());
    let mut reductions = 0;
    let eps = T::epsilon() * T::lit(16.0) * config.final_time;
    while config.final_time - t > eps {
        let step = steps.len();
        let tau = dw_build_tau(mesh, fem, &u, &params)?;
        let mut rejected = 0;
        let (sol, dt_used) = loop {
            let remaining = config.final_time - t;
            let dt_try = if dt >= remaining - eps { remaining } else { dt };
            let system = dw_step_system(mesh, fem, free.clone(), &tau, &u, zb, dt_try, params.alpha)?;
            let start = free.to_free(&u);
            match solve(config.method, &system, dd, &start, solver) {
                Ok(sol) => break (sol, dt_try),
                Err(failure) => {
                    counters.accumulate(&failure.last.counters);
                    if !config.global_adaptive {
                        return Err(Error::StepFailed { step, source: Box::new(failure.error) });
                    }
                    dt = next_time_step(dt_try, false, config.factor, config.base_dt);
                    rejected += 1;
                    reductions += 1;
                    warn!("step {step}: {} at dt = {dt_try}, retrying with dt = {dt}", failure.error);
                    if dt < config.min_dt {
                        let source = Error::TimeStepUnderflow {
                            dt: dt.to_f64_lossy(),
                            floor: config.min_dt.to_f64_lossy(),
                        };
                        return Err(Error::StepFailed { step, source: Box::new(source) });
                    }
                }
            }
        };
        counters.accumulate(&sol.counters);
        u = free.to_full(&sol.u);
        t += dt_used;
        if config.global_adaptive {
            dt = next_time_step(dt, true, config.factor, config.base_dt);
        }
        let (flooded, max_depth, volume) = depth_stats(&u, zb, free, fem);
        debug!("step {step}: t = {t}, dt = {dt_used}, k_out = {}, flooded = {flooded}", sol.counters.k_out);
        steps.push(StepRecord {
            step,
            t,
            dt: dt_used,
            k_out: sol.counters.k_out,
            k_gm: sol.counters.k_gm_total(),
            k_c: sol.counters.k_c_total(),
            flooded,
            max_depth,
            volume,
            rejected,
            continuations: sol.counters.continuations,
        });
    }
    info!("transient run with {} finished: {} steps, {} reductions", config.method, steps.len(), reductions);
    Ok(TransientReport { steps, u, counters, reductions })
}

/// Flooded node count, maximum depth and stored volume over the unknowns.
pub fn depth_stats<T: Real>(u: &[T], zb: &[T], free: &FreeDofs<T>, fem: &FemOperators<T>) -> (usize, T, T) {
    let threshold = T::lit(FLOODED_DEPTH);
    let mut flooded = 0;
    let mut max_depth = T::zero();
    let mut volume = T::zero();
    for &v in free.free_nodes() {
        let h = (u[v] - zb[v]).max(T::zero());
        if h >= threshold {
            flooded += 1;
        }
        max_depth = max_depth.max(h);
        volume += fem.lumped_mass[v] * h;
    }
    (flooded, max_depth, volume)
}
