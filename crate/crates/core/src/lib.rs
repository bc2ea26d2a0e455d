//! Nonlinear Schwarz solvers for degenerate diffusion on perforated domains.
//!
//! The crate covers P1 meshes of rectangles with rectangular holes, overlapping
//! decompositions with a Trefftz coarse space, the stationary porous medium
//! and semi-implicit Diffusive Wave discretizations, and five outer solvers:
//! Newton-Krylov with two-level RAS, the two-step method, one- and two-level
//! RASPEN and Anderson-accelerated coarse NRAS.
//!
//! Everything numerical is generic over [`Real`]; the aliases below fix the
//! scalar to `f64`.

pub mod coarsespace;
pub mod decomposition;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod metrics;
pub mod problems;
pub mod scalar;
pub mod scenarios;
pub mod solvers;
pub mod timestepping;

pub use error::{Error, Result};
pub use scalar::{Real, Scalar};
pub use solvers::{Counters, Method, SolverConfig};

pub type TriMesh = mesh::TriMesh<f64>;
pub type Rect = mesh::Rect<f64>;
pub type MeshSpec = mesh::MeshSpec<f64>;
pub type SparseMatrix = linalg::CsrMatrix<f64>;
pub type LuFactor = linalg::LuFactor<f64>;
pub type Decomposition = decomposition::Decomposition<f64>;
pub type Skeleton = coarsespace::Skeleton<f64>;
pub type TrefftzSpace = coarsespace::TrefftzSpace<f64>;
pub type FreeDofs = problems::FreeDofs<f64>;
pub type DwParams = problems::DwParams<f64>;
pub type Schwarz = solvers::Schwarz<f64>;
pub type Solution = solvers::Solution<f64>;
pub type TimeLoopConfig = timestepping::TimeLoopConfig<f64>;
