use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("perforation {index} ({rect}) is not aligned with the fine grid at h = {h}")]
    PerforationNotAligned { index: usize, rect: String, h: f64 },

    #[error("invalid mesh specification: {0}")]
    InvalidMeshSpec(String),

    #[error("perforated domain is disconnected ({components} components)")]
    DisconnectedDomain { components: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("degenerate triangle {triangle} (signed area {area:e})")]
    DegenerateTriangle { triangle: usize, area: f64 },

    #[error("mesh does not conform to the coarse grid: {0}")]
    NonConforming(String),

    #[error("matrix is structurally singular at pivot {pivot}")]
    StructurallySingular { pivot: usize },

    #[error("matrix is numerically singular at pivot {pivot}")]
    NumericallySingular { pivot: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("GMRES did not converge in {iterations} iterations (relative residual {relative_residual:e})")]
    GmresNoConvergence {
        iterations: usize,
        relative_residual: f64,
        best_iterate: Vec<f64>,
    },

    #[error("local Newton failed on subdomain {subdomain} after {iterations} iterations")]
    LocalNewton { subdomain: usize, iterations: usize },

    #[error("singular {what} block on subdomain {subdomain}: {source}")]
    SingularBlock {
        what: &'static str,
        subdomain: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("singular coarse block: {0}")]
    SingularCoarse(#[source] Box<Error>),

    #[error("local continuation failed on subdomain {subdomain}: {source}")]
    LocalContinuation {
        subdomain: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("coarse Newton did not converge in {iterations} iterations (residual {residual:e})")]
    CoarseNewton { iterations: usize, residual: f64 },

    #[error("outer iteration limit {max_outer} reached (residual {residual:e})")]
    OuterLimit { max_outer: usize, residual: f64 },

    #[error("non-finite values encountered in {0}")]
    NonFinite(&'static str),

    #[error("time step underflow: {dt:e} below floor {floor:e}")]
    TimeStepUnderflow { dt: f64, floor: f64 },

    #[error("time step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown method tag `{0}`")]
    UnknownMethod(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
