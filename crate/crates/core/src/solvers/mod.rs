//! Nonlinear domain decomposition solvers.
//!
//! All methods share the same outer stopping test, measured on the original
//! residual `F`: `||F(u_k)|| <= max(outer_tol * ||F(u_0)||, outer_abs_tol)`.

mod coarse;
mod methods;
mod ras;
mod schwarz;

use std::fmt;
use std::str::FromStr;

pub use coarse::{coarse_linear_correction, coarse_nonlinear_correction, CoarseCorrection, CoarseSpace};
pub use methods::{
    anderson_coarse, coarse_nras_map, newton_krylov, raspen1, raspen2, raspen_linearize, raspen_residual, two_step,
    RaspenLinearization,
};
pub use ras::{ras2_preconditioner, Ras2};
pub use schwarz::{LocalSolution, NrasOutput, Schwarz};

use crate::error::{Error, Result};
use crate::linalg::GmresOptions;
use crate::problems::NonlinearSystem;
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Relative tolerance on `||F||_2`.
    pub outer_tol: f64,
    pub outer_abs_tol: f64,
    pub max_outer: usize,
    /// Absolute tolerance on the local residual of each subdomain solve.
    pub local_tol: f64,
    pub max_local_newton: usize,
    /// Absolute tolerance on `R_H F` in the coarse Newton iteration.
    pub coarse_tol: f64,
    pub max_coarse_newton: usize,
    pub gmres: GmresOptions,
    /// Anderson history length; zero gives the plain fixed point.
    pub anderson_m: usize,
    /// Armijo backtracking on the residual norm, for the global Newton
    /// updates and inside the local subdomain solves.
    pub line_search: bool,
    /// Include the coarse term in the RAS preconditioner.
    pub two_level: bool,
    /// Retry failed local solves of time-step systems with smaller steps.
    pub local_continuation: bool,
    /// Smallest continuation step as a fraction of the target step.
    pub continuation_floor: f64,
    pub parallel: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            outer_tol: 1e-8,
            outer_abs_tol: 1e-10,
            max_outer: 500,
            local_tol: 1e-12,
            max_local_newton: 200,
            coarse_tol: 1e-10,
            max_coarse_newton: 50,
            gmres: GmresOptions::default(),
            anderson_m: 5,
            line_search: true,
            two_level: true,
            local_continuation: true,
            continuation_floor: 1.0 / 1024.0,
            parallel: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("outer_tol", self.outer_tol),
            ("outer_abs_tol", self.outer_abs_tol),
            ("local_tol", self.local_tol),
            ("coarse_tol", self.coarse_tol),
            ("gmres.rel_tol", self.gmres.rel_tol),
            ("continuation_floor", self.continuation_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.continuation_floor > 1.0 {
            return Err(Error::InvalidParameter("continuation_floor must be at most 1".into()));
        }
        if self.max_local_newton == 0 || self.max_coarse_newton == 0 || self.gmres.max_iter == 0 {
            return Err(Error::InvalidParameter("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// One line of the per-iteration trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub outer: usize,
    pub residual: f64,
    /// Krylov steps spent producing this iterate.
    pub gmres: usize,
    /// Local factorizations so far.
    pub local_solves: usize,
}

/// Work counters of one solve (or, after [`Counters::accumulate`], of a
/// sequence of solves).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Counters {
    pub k_out: usize,
    /// GMRES iterations per outer iteration.
    pub k_gm: Vec<usize>,
    /// Coarse linear solves per outer iteration.
    pub k_c: Vec<usize>,
    /// Local Newton factorizations per subdomain.
    pub k_loc: Vec<usize>,
    /// Local factorizations made by nonlinear subdomain solves.
    pub local_lu: usize,
    /// Local factorizations made by the RAS preconditioner.
    pub precond_lu: usize,
    pub coarse_lu: usize,
    /// Subdomain solves rescued by time-step continuation.
    pub continuations: usize,
    pub trace: Vec<TraceRow>,
}

impl Counters {
    pub fn new(subdomains: usize) -> Self {
        Counters { k_loc: vec![0; subdomains], ..Default::default() }
    }

    pub fn k_gm_total(&self) -> usize {
        self.k_gm.iter().sum()
    }

    pub fn k_c_total(&self) -> usize {
        self.k_c.iter().sum()
    }

    pub fn local_solves(&self) -> usize {
        self.k_loc.iter().sum()
    }

    pub fn mean_k_gm(&self) -> Option<f64> {
        mean(&self.k_gm)
    }

    pub fn mean_k_c(&self) -> Option<f64> {
        mean(&self.k_c)
    }

    /// Mean local factorizations per subdomain and NRAS sweep.
    pub fn mean_k_loc(&self, sweeps: usize) -> f64 {
        if self.k_loc.is_empty() || sweeps == 0 {
            return 0.0;
        }
        self.local_solves() as f64 / (self.k_loc.len() * sweeps) as f64
    }

    /// Adds the work of another solve (transient cumulative counts).
    pub fn accumulate(&mut self, other: &Counters) {
        self.k_out += other.k_out;
        self.k_gm.extend_from_slice(&other.k_gm);
        self.k_c.extend_from_slice(&other.k_c);
        if self.k_loc.len() < other.k_loc.len() {
            self.k_loc.resize(other.k_loc.len(), 0);
        }
        for (a, b) in self.k_loc.iter_mut().zip(&other.k_loc) {
            *a += b;
        }
        self.local_lu += other.local_lu;
        self.precond_lu += other.precond_lu;
        self.coarse_lu += other.coarse_lu;
        self.continuations += other.continuations;
    }

    pub(crate) fn push_trace(&mut self, residual: f64, gmres: usize) {
        self.trace.push(TraceRow {
            outer: self.trace.len(),
            residual,
            gmres,
            local_solves: self.local_solves(),
        });
    }
}

fn mean(v: &[usize]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<usize>() as f64 / v.len() as f64)
}

/// Outer solution strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Newton,
    TwoStep,
    Raspen1,
    Raspen2,
    Anderson,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Newton, Method::TwoStep, Method::Raspen1, Method::Raspen2, Method::Anderson];

    pub fn name(self) -> &'static str {
        match self {
            Method::Newton => "newton",
            Method::TwoStep => "two-step",
            Method::Raspen1 => "raspen1",
            Method::Raspen2 => "raspen2",
            Method::Anderson => "anderson",
        }
    }

    /// Whether the method runs nonlinear subdomain solves.
    pub fn uses_nras(self) -> bool {
        self != Method::Newton
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "newton" | "newton-krylov" => Ok(Method::Newton),
            "two-step" | "twostep" => Ok(Method::TwoStep),
            "raspen1" | "raspen-1" => Ok(Method::Raspen1),
            "raspen2" | "raspen-2" => Ok(Method::Raspen2),
            "anderson" | "anderson-coarse" => Ok(Method::Anderson),
            _ => Err(Error::UnknownMethod(s.to_string())),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Solution<T> {
    pub u: Vec<T>,
    pub counters: Counters,
}

/// A failed solve keeps the last iterate and the work spent.
#[derive(Debug)]
pub struct Failure<T> {
    pub error: Error,
    pub last: Solution<T>,
}

impl<T> fmt::Display for Failure<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} after {} outer iterations", self.error, self.last.counters.k_out)
    }
}

pub type SolveResult<T> = std::result::Result<Solution<T>, Failure<T>>;

/// Runs `method` from `u0`.
pub fn solve<T: Real>(
    method: Method,
    system: &dyn NonlinearSystem<T>,
    dd: &Schwarz<T>,
    u0: &[T],
    config: &SolverConfig,
) -> SolveResult<T> {
    match method {
        Method::Newton => newton_krylov(system, dd, u0, config),
        Method::TwoStep => two_step(system, dd, u0, config),
        Method::Raspen1 => raspen1(system, dd, u0, config),
        Method::Raspen2 => raspen2(system, dd, u0, config),
        Method::Anderson => anderson_coarse(system, dd, u0, config),
    }
}
