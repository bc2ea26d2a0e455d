//! Conforming triangulations of perforated rectangles.

mod connectivity;
mod fem;
mod generate;
mod io;

pub use connectivity::Connectivity;
pub use fem::{assemble_fem, FemOperators};
pub use generate::{generate_perforated_mesh, MeshSpec, Sides};
pub use io::{load_mesh, write_mesh};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect<T> {
    pub x0: T,
    pub y0: T,
    pub x1: T,
    pub y1: T,
}

impl<T: Real> Rect<T> {
    pub fn new(x0: T, y0: T, x1: T, y1: T) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> T {
        self.x1 - self.x0
    }

    pub fn height(&self) -> T {
        self.y1 - self.y0
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn contains_strict(&self, p: [T; 2]) -> bool {
        p[0] > self.x0 && p[0] < self.x1 && p[1] > self.y0 && p[1] < self.y1
    }

    /// Counter-clockwise vertex list.
    pub fn polygon(&self) -> Vec<[T; 2]> {
        vec![
            [self.x0, self.y0],
            [self.x1, self.y0],
            [self.x1, self.y1],
            [self.x0, self.y1],
        ]
    }

    /// Distance from `p` to the rectangle (zero inside).
    pub fn distance(&self, p: [T; 2]) -> T {
        let dx = (self.x0 - p[0]).max(p[0] - self.x1).max(T::zero());
        let dy = (self.y0 - p[1]).max(p[1] - self.y1).max(T::zero());
        (dx * dx + dy * dy).sqrt()
    }
}

/// Triangulation of `Ω = D \ Ω_S` with boundary classification.
///
/// Index sets are sorted. Dirichlet nodes never touch a perforation.
#[derive(Clone, Debug)]
pub struct TriMesh<T> {
    nodes: Vec<[T; 2]>,
    triangles: Vec<[usize; 3]>,
    dirichlet: Vec<usize>,
    perforation_boundary: Vec<usize>,
    outer_neumann: Vec<usize>,
    perforations: Vec<Vec<[T; 2]>>,
    domain_box: Rect<T>,
}

impl<T: Real> TriMesh<T> {
    /// Assembles a mesh from raw parts, checking orientation and the
    /// classification invariants.
    pub fn new(
        nodes: Vec<[T; 2]>,
        triangles: Vec<[usize; 3]>,
        mut dirichlet: Vec<usize>,
        mut perforation_boundary: Vec<usize>,
        mut outer_neumann: Vec<usize>,
        perforations: Vec<Vec<[T; 2]>>,
        domain_box: Rect<T>,
    ) -> Result<Self> {
        let n = nodes.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::InvalidMeshSpec(format!("triangle {t} references a missing node")));
            }
            let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if area <= T::zero() {
                return Err(Error::DegenerateTriangle { triangle: t, area: area.to_f64_lossy() });
            }
        }
        for set in [&mut dirichlet, &mut perforation_boundary, &mut outer_neumann] {
            set.sort_unstable();
            set.dedup();
            if set.last().is_some_and(|&v| v >= n) {
                return Err(Error::InvalidMeshSpec("boundary index out of range".into()));
            }
        }
        if let Some(&v) = dirichlet.iter().find(|v| perforation_boundary.binary_search(v).is_ok()) {
            return Err(Error::InvalidMeshSpec(format!(
                "node {v} is both Dirichlet and on a perforation boundary"
            )));
        }
        Ok(TriMesh { nodes, triangles, dirichlet, perforation_boundary, outer_neumann, perforations, domain_box })
    }

    pub fn nodes(&self) -> &[[T; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn dirichlet_nodes(&self) -> &[usize] {
        &self.dirichlet
    }

    pub fn perforation_boundary_nodes(&self) -> &[usize] {
        &self.perforation_boundary
    }

    pub fn outer_neumann_nodes(&self) -> &[usize] {
        &self.outer_neumann
    }

    pub fn perforations(&self) -> &[Vec<[T; 2]>] {
        &self.perforations
    }

    pub fn domain_box(&self) -> Rect<T> {
        self.domain_box
    }

    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.dirichlet.binary_search(&node).is_ok()
    }

    pub fn is_perforation_boundary(&self, node: usize) -> bool {
        self.perforation_boundary.binary_search(&node).is_ok()
    }

    pub fn triangle_area(&self, t: usize) -> T {
        let [a, b, c] = self.triangles[t];
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn centroid(&self, t: usize) -> [T; 2] {
        let third = T::one() / T::lit(3.0);
        let [a, b, c] = self.triangles[t].map(|v| self.nodes[v]);
        [(a[0] + b[0] + c[0]) * third, (a[1] + b[1] + c[1]) * third]
    }

    /// Edges belonging to exactly one triangle, oriented as in that triangle.
    pub fn boundary_edges(&self) -> Vec<[usize; 2]> {
        let mut edges: Vec<([usize; 2], [usize; 2])> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [[a, b], [b, c], [c, a]])
            .map(|e| ([e[0].min(e[1]), e[0].max(e[1])], e))
            .collect();
        edges.sort_unstable();
        let mut out = Vec::new();
        let mut i = 0;
        while i < edges.len() {
            let mut j = i + 1;
            while j < edges.len() && edges[j].0 == edges[i].0 {
                j += 1;
            }
            if j - i == 1 {
                out.push(edges[i].1);
            }
            i = j;
        }
        out
    }
}

pub(crate) fn signed_area<T: Real>(a: [T; 2], b: [T; 2], c: [T; 2]) -> T {
    ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])) / T::lit(2.0)
}
