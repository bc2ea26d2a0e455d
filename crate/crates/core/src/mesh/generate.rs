use super::{Rect, TriMesh};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Selection of box sides (used for Dirichlet data).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Sides {
    pub left: bool,
    pub right: bool,
    pub bottom: bool,
    pub top: bool,
}

impl Sides {
    pub const NONE: Sides = Sides { left: false, right: false, bottom: false, top: false };
    pub const ALL: Sides = Sides { left: true, right: true, bottom: true, top: true };
}

/// Input of the structured generator.
#[derive(Clone, Debug)]
pub struct MeshSpec<T> {
    pub domain: Rect<T>,
    /// Grid-aligned rectangular holes.
    pub perforations: Vec<Rect<T>>,
    /// Upper bound on the fine cell size.
    pub target_h: T,
    /// Coarse grid `[nx, ny]` the fine grid must conform to.
    pub coarse: [usize; 2],
    pub dirichlet: Sides,
}

/// Structured triangulation of a rectangle with rectangular holes.
///
/// Each coarse cell is divided into `ceil(H / target_h)` fine cells per
/// direction and each fine cell is cut along its `(x0,y0)-(x1,y1)` diagonal.
/// Cells covered by a perforation are removed, as are nodes no longer used.
/// Nodes are numbered lexicographically by `(y, x)`.
pub fn generate_perforated_mesh<T: Real>(spec: &MeshSpec<T>) -> Result<TriMesh<T>> {
    let d = spec.domain;
    let [nx, ny] = spec.coarse;
    if !(d.width() > T::zero() && d.height() > T::zero()) {
        return Err(Error::InvalidMeshSpec("empty domain box".into()));
    }
    if !(spec.target_h > T::zero()) || nx == 0 || ny == 0 {
        return Err(Error::InvalidMeshSpec("target_h and the coarse grid must be positive".into()));
    }
    let per_cell = |len: T, n: usize| -> usize {
        let r = (len / T::from_usize_lossy(n) / spec.target_h).to_f64_lossy();
        ((r - 1e-9).ceil() as usize).max(1)
    };
    let gx = nx * per_cell(d.width(), nx);
    let gy = ny * per_cell(d.height(), ny);
    let hx = d.width() / T::from_usize_lossy(gx);
    let hy = d.height() / T::from_usize_lossy(gy);

    let snap = |v: T, origin: T, h: T, n: usize| -> Option<usize> {
        let g = ((v - origin) / h).to_f64_lossy();
        let r = g.round();
        ((g - r).abs() <= 1e-6 && r >= 0.0 && r as usize <= n).then_some(r as usize)
    };
    let mut holes: Vec<[usize; 4]> = Vec::with_capacity(spec.perforations.len());
    for (index, p) in spec.perforations.iter().enumerate() {
        let grid = (|| {
            let i0 = snap(p.x0, d.x0, hx, gx)?;
            let i1 = snap(p.x1, d.x0, hx, gx)?;
            let j0 = snap(p.y0, d.y0, hy, gy)?;
            let j1 = snap(p.y1, d.y0, hy, gy)?;
            (i0 < i1 && j0 < j1).then_some([i0, i1, j0, j1])
        })();
        let Some(g) = grid else {
            return Err(Error::PerforationNotAligned {
                index,
                rect: format!("({}, {}) x ({}, {})", p.x0, p.x1, p.y0, p.y1),
                h: hx.max(hy).to_f64_lossy(),
            });
        };
        if let Some(k) = holes.iter().position(|h| g[0] < h[1] && h[0] < g[1] && g[2] < h[3] && h[2] < g[3]) {
            return Err(Error::InvalidMeshSpec(format!("perforations {k} and {index} overlap")));
        }
        holes.push(g);
    }

    let cell = |i: usize, j: usize| j * gx + i;
    let mut active = vec![true; gx * gy];
    for h in &holes {
        for j in h[2]..h[3] {
            for i in h[0]..h[1] {
                active[cell(i, j)] = false;
            }
        }
    }
    let components = count_components(&active, gx, gy);
    if components != 1 {
        return Err(Error::DisconnectedDomain { components });
    }

    let vx = gx + 1;
    let vid = |i: usize, j: usize| j * vx + i;
    let mut used = vec![false; vx * (gy + 1)];
    let mut on_hole = vec![false; vx * (gy + 1)];
    for j in 0..gy {
        for i in 0..gx {
            let flags = if active[cell(i, j)] { &mut used } else { &mut on_hole };
            for (a, b) in [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)] {
                flags[vid(a, b)] = true;
            }
        }
    }

    let mut new_id = vec![usize::MAX; used.len()];
    let mut nodes = Vec::new();
    let mut dirichlet = Vec::new();
    let mut perforation_boundary = Vec::new();
    let mut outer_neumann = Vec::new();
    for j in 0..=gy {
        for i in 0..=gx {
            let v = vid(i, j);
            if !used[v] {
                continue;
            }
            let id = nodes.len();
            new_id[v] = id;
            nodes.push([
                d.x0 + d.width() * T::from_usize_lossy(i) / T::from_usize_lossy(gx),
                d.y0 + d.height() * T::from_usize_lossy(j) / T::from_usize_lossy(gy),
            ]);
            let (l, r, b, t) = (i == 0, i == gx, j == 0, j == gy);
            let s = spec.dirichlet;
            if on_hole[v] {
                perforation_boundary.push(id);
            } else if (l && s.left) || (r && s.right) || (b && s.bottom) || (t && s.top) {
                dirichlet.push(id);
            } else if l || r || b || t {
                outer_neumann.push(id);
            }
        }
    }

    let mut triangles = Vec::with_capacity(2 * gx * gy);
    for j in 0..gy {
        for i in 0..gx {
            if !active[cell(i, j)] {
                continue;
            }
            let a = new_id[vid(i, j)];
            let b = new_id[vid(i + 1, j)];
            let c = new_id[vid(i + 1, j + 1)];
            let e = new_id[vid(i, j + 1)];
            triangles.push([a, b, c]);
            triangles.push([a, c, e]);
        }
    }

    let perforations = spec.perforations.iter().map(|p| p.polygon()).collect();
    TriMesh::new(nodes, triangles, dirichlet, perforation_boundary, outer_neumann, perforations, d)
}

/// Number of 4-connected components of active cells.
fn count_components(active: &[bool], gx: usize, gy: usize) -> usize {
    let mut seen = vec![false; active.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..active.len() {
        if !active[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(c) = stack.pop() {
            let (i, j) = (c % gx, c / gx);
            let mut nbrs = [usize::MAX; 4];
            if i > 0 {
                nbrs[0] = c - 1;
            }
            if i + 1 < gx {
                nbrs[1] = c + 1;
            }
            if j > 0 {
                nbrs[2] = c - gx;
            }
            if j + 1 < gy {
                nbrs[3] = c + gx;
            }
            for n in nbrs {
                if n != usize::MAX && active[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
    }
    count
}
