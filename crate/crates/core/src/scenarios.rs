//! Ready-made test problems: the porous medium equation on an L-shape and on
//! a randomly perforated square, and an inclined Diffusive Wave scene.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coarsespace::{build_skeleton, build_trefftz, TrefftzSpace};
use crate::decomposition::{build_partition, extend_overlap, Decomposition};
use crate::error::Result;
use crate::linalg::SparsityPattern;
use crate::mesh::{assemble_fem, generate_perforated_mesh, FemOperators, MeshSpec, Rect, Sides, TriMesh};
use crate::problems::{free_pattern, pme_system, Bathymetry, FreeDofs, PmeSystem};
use crate::scalar::Real;
use crate::solvers::Schwarz;

/// Mesh, finite element operators and unknowns of one problem.
#[derive(Clone, Debug)]
pub struct Discretization<T> {
    pub mesh: TriMesh<T>,
    pub fem: FemOperators<T>,
    pub free: FreeDofs<T>,
    pub pattern: SparsityPattern,
}

impl<T: Real> Discretization<T> {
    pub fn new(mesh: TriMesh<T>, dirichlet: impl Fn([T; 2]) -> T) -> Result<Self> {
        let fem = assemble_fem(&mesh)?;
        let free = FreeDofs::new(&mesh, dirichlet);
        let pattern = free_pattern(&mesh, &free);
        Ok(Discretization { mesh, fem, free, pattern })
    }

    /// Overlapping `nx x ny` decomposition with a degree-`p` Trefftz space.
    pub fn decompose(&self, nx: usize, ny: usize, overlap: T, degree: usize) -> Result<DomainSetup<T>> {
        let partition = build_partition(&self.mesh, nx, ny)?;
        let decomp = extend_overlap(&partition, &self.mesh, overlap)?;
        let skeleton = build_skeleton(&self.mesh, &decomp, degree)?;
        let trefftz = build_trefftz(&self.mesh, &self.fem, &decomp, &skeleton)?;
        let schwarz = Schwarz::new(&decomp, &self.free, &self.pattern, Some(&trefftz))?;
        Ok(DomainSetup { decomp, trefftz, schwarz })
    }
}

#[derive(Clone, Debug)]
pub struct DomainSetup<T> {
    pub decomp: Decomposition<T>,
    pub trefftz: TrefftzSpace<T>,
    pub schwarz: Schwarz<T>,
}

/// Default overlap as a fraction of the subdomain size.
pub const OVERLAP_FRACTION: f64 = 1.0 / 20.0;

/// `(-1,1)^2` minus `(0,1)^2`, conforming to an `n x n` grid, with
/// Dirichlet data on the top and right sides.
pub fn lshape_mesh<T: Real>(target_h: T, n: usize) -> Result<TriMesh<T>> {
    let one = T::one();
    generate_perforated_mesh(&MeshSpec {
        domain: Rect::new(-one, -one, one, one),
        perforations: vec![Rect::new(T::zero(), T::zero(), one, one)],
        target_h,
        coarse: [n, n],
        dirichlet: Sides { top: true, right: true, ..Sides::NONE },
    })
}

/// 1 on `y = 1`, 0 on `x = 1`.
pub fn lshape_dirichlet<T: Real>(p: [T; 2]) -> T {
    if (p[1] - T::one()).abs() < T::lit(1e-9) {
        T::one()
    } else {
        T::zero()
    }
}

/// `F(u) = M u + A max(u,0)^4` on the L-shape.
pub fn lshape_pme<T: Real>(target_h: T, n: usize) -> Result<(Discretization<T>, PmeSystem<T>)> {
    let disc = Discretization::new(lshape_mesh(target_h, n)?, lshape_dirichlet)?;
    let sys = pme_system(&disc.mesh, &disc.fem, 4, T::one(), disc.free.clone())?;
    Ok((disc, sys))
}

/// Up to `count` grid-aligned rectangles in `domain`, separated from each
/// other and from the box by at least one fine cell. Sizes are between
/// `min_cells` and `max_cells` fine cells per side.
pub fn random_perforations<T: Real>(
    seed: u64,
    domain: Rect<T>,
    h: T,
    count: usize,
    min_cells: usize,
    max_cells: usize,
) -> Vec<Rect<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gx = (domain.width() / h).round().to_usize().unwrap_or(0);
    let gy = (domain.height() / h).round().to_usize().unwrap_or(0);
    let mut cells: Vec<[usize; 4]> = Vec::new();
    if gx < max_cells + 3 || gy < max_cells + 3 {
        return Vec::new();
    }
    let mut tries = 0;
    while cells.len() < count && tries < 100 * count {
        tries += 1;
        let w = rng.gen_range(min_cells..=max_cells);
        let d = rng.gen_range(min_cells..=max_cells);
        let i0 = rng.gen_range(1..gx - w);
        let j0 = rng.gen_range(1..gy - d);
        let c = [i0, i0 + w, j0, j0 + d];
        // keep at least one free cell between holes
        if cells.iter().all(|o| c[1] < o[0] || o[1] < c[0] || c[3] < o[2] || o[3] < c[2]) {
            cells.push(c);
        }
    }
    cells
        .iter()
        .map(|c| {
            let x = |i: usize| domain.x0 + h * T::from_usize_lossy(i);
            let y = |j: usize| domain.y0 + h * T::from_usize_lossy(j);
            Rect::new(x(c[0]), y(c[2]), x(c[1]), y(c[3]))
        })
        .collect()
}

/// Parameters of the perforated porous medium problem.
#[derive(Clone, Debug)]
pub struct PerforatedPme<T> {
    pub seed: u64,
    /// Half width of the square `(-L, L)^2`.
    pub half_width: T,
    /// Finest partition the mesh must conform to (`n x n`).
    pub finest: usize,
    /// Fine cells per side of a finest coarse cell.
    pub cells_per_subdomain: usize,
    /// Holes are drawn in `8..=16` unless fixed here.
    pub holes: Option<usize>,
    pub scale: T,
    pub exponent: i32,
}

impl<T: Real> Default for PerforatedPme<T> {
    fn default() -> Self {
        PerforatedPme {
            seed: 7,
            half_width: T::lit(80.0),
            finest: 8,
            cells_per_subdomain: 8,
            holes: None,
            scale: T::lit(15.0),
            exponent: 3,
        }
    }
}

impl<T: Real> PerforatedPme<T> {
    /// Fine grid spacing.
    pub fn h(&self) -> T {
        T::lit(2.0) * self.half_width / T::from_usize_lossy(self.finest * self.cells_per_subdomain)
    }

    pub fn mesh(&self) -> Result<TriMesh<T>> {
        let l = self.half_width;
        let domain = Rect::new(-l, -l, l, l);
        let h = self.h();
        let count = self.holes.unwrap_or_else(|| ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed).gen_range(8..=16));
        let g = self.finest * self.cells_per_subdomain;
        let max_cells = (g / 8).max(2);
        let perforations = random_perforations(self.seed, domain, h, count, 2, max_cells);
        generate_perforated_mesh(&MeshSpec {
            domain,
            perforations,
            target_h: h,
            coarse: [self.finest, self.finest],
            dirichlet: Sides { left: true, right: true, ..Sides::NONE },
        })
    }

    /// `F(u) = M u + c A max(u,0)^m` with `u = c` on the left side of the
    /// domain box and `u = 0` on the other Dirichlet nodes.
    pub fn discretize(&self, mesh: TriMesh<T>) -> Result<(Discretization<T>, PmeSystem<T>)> {
        let scale = self.scale;
        let domain = mesh.domain_box();
        let tol = T::lit(1e-9) * domain.width();
        let disc = Discretization::new(mesh, move |p: [T; 2]| {
            if (p[0] - domain.x0).abs() < tol {
                scale
            } else {
                T::zero()
            }
        })?;
        let sys = pme_system(&disc.mesh, &disc.fem, self.exponent, self.scale, disc.free.clone())?;
        Ok((disc, sys))
    }

    pub fn build(&self) -> Result<(Discretization<T>, PmeSystem<T>)> {
        self.discretize(self.mesh()?)
    }
}

/// Inclined Diffusive Wave scene: a rectangle sloping down from its top
/// side, buildings as holes, an inflow strip on the top side raised by
/// `inflow_depth` and `u = z_b` on the rest of the top and bottom sides.
#[derive(Clone, Debug)]
pub struct InclinedScene<T> {
    pub seed: u64,
    pub width: T,
    pub length: T,
    /// Finest partition `[nx, ny]` the mesh must conform to.
    pub finest: [usize; 2],
    pub target_h: T,
    pub slope: T,
    pub inflow_depth: T,
    /// Inflow strip on the top side as a fraction `[from, to]` of the width.
    pub inflow: [T; 2],
    pub buildings: usize,
    /// Flat ground (slope zero) and no inflow.
    pub flat: bool,
}

impl<T: Real> Default for InclinedScene<T> {
    fn default() -> Self {
        InclinedScene {
            seed: 11,
            width: T::lit(48.0),
            length: T::lit(96.0),
            finest: [4, 8],
            target_h: T::lit(1.0),
            slope: T::lit(0.02),
            inflow_depth: T::lit(1.0),
            inflow: [T::lit(0.3), T::lit(0.7)],
            buildings: 14,
            flat: false,
        }
    }
}

impl<T: Real> InclinedScene<T> {
    pub fn bathymetry(&self) -> Bathymetry<T> {
        let slope = if self.flat { T::zero() } else { self.slope };
        Bathymetry::Plane { a: T::zero(), b: slope, c: T::zero() }
    }

    pub fn mesh(&self) -> Result<TriMesh<T>> {
        let domain = Rect::new(T::zero(), T::zero(), self.width, self.length);
        let cells = (self.width / T::from_usize_lossy(self.finest[0]) / self.target_h).ceil();
        let h = self.width / T::from_usize_lossy(self.finest[0]) / cells;
        let gy = (self.length / h).round();
        let band = (gy * T::lit(0.1)).round();
        let margin = Rect::new(T::zero(), h * band, self.width, h * (gy - band));
        let max_cells = ((self.width / h).to_usize().unwrap_or(8) / 10).max(2);
        let perforations = random_perforations(self.seed, margin, h, self.buildings, 2, max_cells);
        generate_perforated_mesh(&MeshSpec {
            domain,
            perforations,
            target_h: self.target_h,
            coarse: self.finest,
            dirichlet: Sides { top: true, bottom: true, ..Sides::NONE },
        })
    }

    /// Discretization with Dirichlet data `u = z_b`, raised by the inflow
    /// depth on the inflow strip of the top side, and the nodal bathymetry.
    pub fn discretize(&self, mesh: TriMesh<T>, bath: &Bathymetry<T>) -> Result<(Discretization<T>, Vec<T>)> {
        let zb = bath.at_nodes(&mesh);
        let domain = mesh.domain_box();
        let (inflow, depth, flat) = (self.inflow, self.inflow_depth, self.flat);
        let bath = bath.clone();
        let disc = Discretization::new(mesh, move |p: [T; 2]| {
            let z = bath.eval(p);
            let on_top = (p[1] - domain.y1).abs() < T::lit(1e-9) * domain.height();
            let x = (p[0] - domain.x0) / domain.width();
            if !flat && on_top && x >= inflow[0] && x <= inflow[1] {
                z + depth
            } else {
                z
            }
        })?;
        Ok((disc, zb))
    }

    pub fn build(&self) -> Result<(Discretization<T>, Vec<T>)> {
        self.discretize(self.mesh()?, &self.bathymetry())
    }
}
