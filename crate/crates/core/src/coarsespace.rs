//! Trefftz coarse space on the skeleton of a coarse partition.
//!
//! The skeleton `Γ` is the union of the mesh edges on the boundaries of the
//! nonoverlapping subdomains, minus the edges lying on perforations. It is
//! split into straight coarse edges at coarse nodes: junctions, corners,
//! points of `Γ̄ ∩ ∂Ω_S` and coarse grid crossings. Basis functions are
//! Lagrange traces on the edges, extended discrete-harmonically into each
//! subdomain with natural boundary conditions on the perforations.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, LuFactor};
use crate::mesh::{FemOperators, TriMesh};
use crate::scalar::Real;

/// A maximal straight run of skeleton edges between two coarse nodes.
#[derive(Clone, Debug)]
pub struct CoarseEdge<T> {
    /// Fine node chain, starting and ending at coarse nodes.
    pub nodes: Vec<usize>,
    /// Cumulative arclength along `nodes`.
    pub arclength: Vec<T>,
}

impl<T: Real> CoarseEdge<T> {
    pub fn length(&self) -> T {
        *self.arclength.last().expect("nonempty edge")
    }

    pub fn endpoints(&self) -> [usize; 2] {
        [self.nodes[0], *self.nodes.last().expect("nonempty edge")]
    }
}

/// Where a fine skeleton node sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkeletonPlace {
    /// Index into [`Skeleton::coarse_nodes`].
    Vertex(usize),
    /// Interior node `position` of edge `edge`.
    Edge { edge: usize, position: usize },
}

#[derive(Clone, Debug)]
pub struct Skeleton<T> {
    pub edges: Vec<CoarseEdge<T>>,
    /// Fine indices of the coarse nodes, sorted.
    pub coarse_nodes: Vec<usize>,
    /// Polynomial degree of the traces.
    pub degree: usize,
    places: HashMap<usize, SkeletonPlace>,
}

impl<T: Real> Skeleton<T> {
    pub fn place(&self, node: usize) -> Option<SkeletonPlace> {
        self.places.get(&node).copied()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.places.contains_key(&node)
    }

    /// All fine nodes on `Γ̄`, sorted.
    pub fn nodes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.places.keys().copied().collect();
        v.sort_unstable();
        v
    }

    /// Number of coarse degrees of freedom.
    pub fn dim(&self) -> usize {
        self.coarse_nodes.len() + self.edges.len() * (self.degree - 1)
    }

    /// Nonzero trace values `(coarse dof, g_s(node))` at a skeleton node.
    pub fn trace_at(&self, node: usize) -> Vec<(usize, T)> {
        match self.places.get(&node) {
            None => Vec::new(),
            Some(&SkeletonPlace::Vertex(v)) => vec![(v, T::one())],
            Some(&SkeletonPlace::Edge { edge, position }) => {
                let e = &self.edges[edge];
                let xi = e.arclength[position] / e.length();
                let p = self.degree;
                let [a, b] = e.endpoints();
                let va = self.coarse_nodes.binary_search(&a).expect("edge endpoint is a coarse node");
                let vb = self.coarse_nodes.binary_search(&b).expect("edge endpoint is a coarse node");
                let interior0 = self.coarse_nodes.len() + edge * (p - 1);
                (0..=p)
                    .map(|k| {
                        let dof = match k {
                            0 => va,
                            k if k == p => vb,
                            k => interior0 + k - 1,
                        };
                        (dof, lagrange(p, k, xi))
                    })
                    .filter(|&(_, v)| v != T::zero())
                    .collect()
            }
        }
    }
}

/// Lagrange polynomial `k` on `p + 1` equispaced points of `[0, 1]`.
fn lagrange<T: Real>(p: usize, k: usize, xi: T) -> T {
    let pt = |m: usize| T::from_usize_lossy(m) / T::from_usize_lossy(p);
    (0..=p).filter(|&m| m != k).fold(T::one(), |acc, m| acc * (xi - pt(m)) / (pt(k) - pt(m)))
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Extracts the skeleton of the nonoverlapping partition.
pub fn build_skeleton<T: Real>(mesh: &TriMesh<T>, decomp: &Decomposition<T>, degree: usize) -> Result<Skeleton<T>> {
    if degree == 0 {
        return Err(Error::InvalidParameter("coarse trace degree must be at least 1".into()));
    }
    let dbox = mesh.domain_box();
    let tol = T::lit(1e-9) * dbox.width().max(dbox.height());
    let near = |a: T, b: T| (a - b).abs() <= tol;
    let sides = |p: [T; 2]| -> u8 {
        (near(p[0], dbox.x0) as u8)
            | ((near(p[0], dbox.x1) as u8) << 1)
            | ((near(p[1], dbox.y0) as u8) << 2)
            | ((near(p[1], dbox.y1) as u8) << 3)
    };

    let owner = decomp.element_owner();
    let mut edge_owners: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for k in 0..3 {
            edge_owners.entry(key(tri[k], tri[(k + 1) % 3])).or_default().push(owner[t]);
        }
    }
    let mut gamma: Vec<(usize, usize)> = edge_owners
        .iter()
        .filter(|(&(a, b), owners)| match owners.as_slice() {
            [_] => {
                let on_side = sides(mesh.nodes()[a]) & sides(mesh.nodes()[b]) != 0;
                let on_hole = mesh.is_perforation_boundary(a) && mesh.is_perforation_boundary(b);
                on_side || !on_hole
            }
            [o1, o2] => o1 != o2,
            _ => false,
        })
        .map(|(&e, _)| e)
        .collect();
    gamma.sort_unstable();

    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(a, b) in &gamma {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    for nb in adj.values_mut() {
        nb.sort_unstable();
    }

    let [nx, ny] = decomp.grid();
    let on_grid_line = |v: T, origin: T, len: T, n: usize| {
        (0..=n).any(|i| near(v, origin + len * T::from_usize_lossy(i) / T::from_usize_lossy(n)))
    };
    let mut coarse: Vec<usize> = adj
        .iter()
        .filter(|(&v, nb)| {
            let p = mesh.nodes()[v];
            let corner = nb.len() != 2 || {
                let (a, b) = (mesh.nodes()[nb[0]], mesh.nodes()[nb[1]]);
                let (u, w) = ([a[0] - p[0], a[1] - p[1]], [b[0] - p[0], b[1] - p[1]]);
                let cross = u[0] * w[1] - u[1] * w[0];
                let scale = (u[0] * u[0] + u[1] * u[1]).sqrt() * (w[0] * w[0] + w[1] * w[1]).sqrt();
                cross.abs() > T::lit(1e-9) * scale || u[0] * w[0] + u[1] * w[1] > T::zero()
            };
            let crossing = on_grid_line(p[0], dbox.x0, dbox.width(), nx) && on_grid_line(p[1], dbox.y0, dbox.height(), ny);
            corner || crossing || mesh.is_perforation_boundary(v)
        })
        .map(|(&v, _)| v)
        .collect();
    coarse.sort_unstable();

    let mut visited: HashMap<(usize, usize), bool> = gamma.iter().map(|&e| (e, false)).collect();
    let mut edges = Vec::new();
    let trace_from = |start: usize,
                          first: usize,
                          is_coarse: &dyn Fn(usize) -> bool,
                          visited: &mut HashMap<(usize, usize), bool>|
     -> CoarseEdge<T> {
        let mut nodes = vec![start];
        let mut arclength = vec![T::zero()];
        let (mut prev, mut cur) = (start, first);
        loop {
            *visited.get_mut(&key(prev, cur)).expect("skeleton edge") = true;
            let (p, q) = (mesh.nodes()[prev], mesh.nodes()[cur]);
            let step = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
            arclength.push(*arclength.last().expect("nonempty") + step);
            nodes.push(cur);
            if is_coarse(cur) {
                break;
            }
            let next = adj[&cur].iter().copied().find(|&n| n != prev).expect("degree-two skeleton node");
            prev = cur;
            cur = next;
        }
        CoarseEdge { nodes, arclength }
    };
    loop {
        let coarse_now = coarse.clone();
        let is_coarse = |v: usize| coarse_now.binary_search(&v).is_ok();
        for &c in &coarse_now {
            for &n in &adj[&c] {
                if !visited[&key(c, n)] {
                    edges.push(trace_from(c, n, &is_coarse, &mut visited));
                }
            }
        }
        // closed loops without any coarse node get one at their smallest node
        match visited.iter().filter(|(_, &done)| !done).map(|(&(a, _), _)| a).min() {
            None => break,
            Some(v) => {
                let pos = coarse.binary_search(&v).unwrap_err();
                coarse.insert(pos, v);
            }
        }
    }

    let mut places = HashMap::new();
    for (i, &c) in coarse.iter().enumerate() {
        places.insert(c, SkeletonPlace::Vertex(i));
    }
    for (k, e) in edges.iter().enumerate() {
        for position in 1..e.nodes.len() - 1 {
            let prev = places.insert(e.nodes[position], SkeletonPlace::Edge { edge: k, position });
            assert!(prev.is_none(), "skeleton node {} on two coarse edges", e.nodes[position]);
        }
    }
    Ok(Skeleton { edges, coarse_nodes: coarse, degree, places })
}

/// Local discrete-harmonic extension on a nonoverlapping subdomain `Ω_j`:
/// Dirichlet on the skeleton nodes of `Ω_j`, natural elsewhere.
#[derive(Debug)]
pub struct HarmonicExtension<T> {
    nodes: Vec<usize>,
    trace: Vec<bool>,
    stiffness: CsrMatrix<T>,
    interior: Vec<usize>,
    lu: Option<LuFactor<T>>,
    coupling: CsrMatrix<T>,
}

impl<T: Real> HarmonicExtension<T> {
    pub fn new(
        mesh: &TriMesh<T>,
        fem: &FemOperators<T>,
        decomp: &Decomposition<T>,
        skeleton: &Skeleton<T>,
        j: usize,
    ) -> Result<Self> {
        let nodes = decomp.nonoverlap_dofs(j).to_vec();
        let local = |v: usize| nodes.binary_search(&v).expect("node of subdomain");
        let mut triplets = Vec::new();
        for &t in decomp.nonoverlap_elements(j) {
            let tri = mesh.triangles()[t];
            let g = &fem.gradients[t];
            for a in 0..3 {
                for b in 0..3 {
                    let v = fem.areas[t] * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                    triplets.push((local(tri[a]), local(tri[b]), v));
                }
            }
        }
        let n = nodes.len();
        let stiffness = CsrMatrix::from_triplets(n, n, &triplets);
        let trace: Vec<bool> = nodes.iter().map(|&v| skeleton.contains(v)).collect();
        let interior: Vec<usize> = (0..n).filter(|&i| !trace[i]).collect();
        let trace_idx: Vec<usize> = (0..n).filter(|&i| trace[i]).collect();
        let coupling = stiffness.submatrix(&interior, &trace_idx);
        let lu = if interior.is_empty() {
            None
        } else {
            let k_ii = stiffness.submatrix(&interior, &interior);
            Some(LuFactor::new(&k_ii).map_err(|e| Error::SingularBlock {
                what: "harmonic extension",
                subdomain: j,
                source: Box::new(e),
            })?)
        };
        Ok(HarmonicExtension { nodes, trace, stiffness, interior, lu, coupling })
    }

    /// Global indices of the local nodes.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Whether each local node carries a prescribed trace.
    pub fn is_trace(&self) -> &[bool] {
        &self.trace
    }

    /// Extends `local` (aligned with [`nodes`](Self::nodes); only the trace
    /// entries are read) into the subdomain.
    pub fn extend(&self, local: &[T]) -> Vec<T> {
        let g: Vec<T> = (0..local.len()).filter(|&i| self.trace[i]).map(|i| local[i]).collect();
        let mut out = local.to_vec();
        if let Some(lu) = &self.lu {
            let rhs: Vec<T> = self.coupling.mul_vec(&g).into_iter().map(|v| -v).collect();
            let x = lu.solve(&rhs);
            for (&i, v) in self.interior.iter().zip(x) {
                out[i] = v;
            }
        }
        out
    }

    /// Residual of the homogeneous local problem at the non-trace nodes.
    pub fn interior_residual(&self, local: &[T]) -> Vec<T> {
        let r = self.stiffness.mul_vec(local);
        self.interior.iter().map(|&i| r[i]).collect()
    }
}

/// Harmonic extension of a global trace vector into subdomain `j`;
/// returns values aligned with `decomp.nonoverlap_dofs(j)`.
pub fn harmonic_extension<T: Real>(
    mesh: &TriMesh<T>,
    fem: &FemOperators<T>,
    decomp: &Decomposition<T>,
    skeleton: &Skeleton<T>,
    j: usize,
    trace: &[T],
) -> Result<Vec<T>> {
    let ext = HarmonicExtension::new(mesh, fem, decomp, skeleton, j)?;
    let local: Vec<T> = ext.nodes().iter().map(|&v| trace[v]).collect();
    Ok(ext.extend(&local))
}

/// Coarse basis and restriction `R_H` (one row per basis vector).
#[derive(Clone, Debug)]
pub struct TrefftzSpace<T> {
    restriction: CsrMatrix<T>,
}

impl<T: Real> TrefftzSpace<T> {
    pub fn dim(&self) -> usize {
        self.restriction.nrows()
    }

    /// `R_H`, of size `dim x m_Ω`.
    pub fn restriction(&self) -> &CsrMatrix<T> {
        &self.restriction
    }

    /// Dense basis vector `φ_s`.
    pub fn basis_vector(&self, s: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.restriction.ncols()];
        let (cols, vals) = self.restriction.row(s);
        for (&c, &v) in cols.iter().zip(vals) {
            out[c] = v;
        }
        out
    }

    /// `node,value` lines of `φ_s`.
    pub fn basis_csv(&self, s: usize) -> String {
        let mut out = String::from("node,value\n");
        for (i, v) in self.basis_vector(s).iter().enumerate() {
            out.push_str(&format!("{i},{v}\n"));
        }
        out
    }
}

/// Builds `φ_s = Σ_j R̄_j^T P̄_j φ_s^j` for every coarse dof.
pub fn build_trefftz<T: Real>(
    mesh: &TriMesh<T>,
    fem: &FemOperators<T>,
    decomp: &Decomposition<T>,
    skeleton: &Skeleton<T>,
) -> Result<TrefftzSpace<T>> {
    let share = decomp.share();
    let per_subdomain: Vec<Vec<(usize, usize, T)>> = (0..decomp.len())
        .into_par_iter()
        .map(|j| -> Result<Vec<(usize, usize, T)>> {
            let ext = HarmonicExtension::new(mesh, fem, decomp, skeleton, j)?;
            let mut traces: Vec<(usize, Vec<T>)> = Vec::new();
            let mut slot: HashMap<usize, usize> = HashMap::new();
            for (i, &v) in ext.nodes().iter().enumerate() {
                if !ext.is_trace()[i] {
                    continue;
                }
                for (s, g) in skeleton.trace_at(v) {
                    let k = *slot.entry(s).or_insert_with(|| {
                        traces.push((s, vec![T::zero(); ext.nodes().len()]));
                        traces.len() - 1
                    });
                    traces[k].1[i] = g;
                }
            }
            traces.sort_by_key(|t| t.0);
            let mut out = Vec::new();
            for (s, g) in traces {
                for (i, phi) in ext.extend(&g).into_iter().enumerate() {
                    if phi != T::zero() {
                        let v = ext.nodes()[i];
                        out.push((s, v, phi / T::from_usize_lossy(share[v] as usize)));
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let triplets: Vec<(usize, usize, T)> = per_subdomain.into_iter().flatten().collect();
    let restriction = CsrMatrix::from_triplets(skeleton.dim(), mesh.node_count(), &triplets);
    Ok(TrefftzSpace { restriction })
}
