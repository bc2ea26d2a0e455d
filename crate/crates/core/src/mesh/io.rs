//! Triangle ASCII `.node` / `.ele` files.
//!
//! Boundary markers: 1 outer Dirichlet, 2 outer Neumann, 3 perforation
//! boundary, 0 interior.

use std::fmt::Write as _;
use std::path::Path;

use super::{signed_area, Rect, TriMesh};
use crate::error::{Error, Result};
use crate::scalar::Real;

const DIRICHLET: i64 = 1;
const OUTER_NEUMANN: i64 = 2;
const PERFORATION: i64 = 3;

struct Lines<'a> {
    path: &'a Path,
    inner: Box<dyn Iterator<Item = (usize, Vec<&'a str>)> + 'a>,
}

impl<'a> Lines<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        let inner = text.lines().enumerate().filter_map(|(i, l)| {
            let l = l.split('#').next().unwrap_or("");
            let tok: Vec<&str> = l.split_whitespace().collect();
            (!tok.is_empty()).then_some((i + 1, tok))
        });
        Lines { path, inner: Box::new(inner) }
    }

    fn next(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        self.inner.next().ok_or_else(|| Error::Parse {
            path: self.path.to_path_buf(),
            line: 0,
            message: format!("unexpected end of file, expected {what}"),
        })
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse { path: self.path.to_path_buf(), line, message: message.into() }
    }

    fn field<V: std::str::FromStr>(&self, line: usize, tok: &[&str], k: usize, what: &str) -> Result<V> {
        tok.get(k)
            .ok_or_else(|| self.err(line, format!("missing {what}")))?
            .parse()
            .map_err(|_| self.err(line, format!("invalid {what} `{}`", tok[k])))
    }
}

/// Reads a mesh from Triangle's `.node` and `.ele` files. Indices may be
/// 0- or 1-based (taken from the first node). Without a marker column all
/// boundary nodes are treated as outer Neumann nodes.
pub fn load_mesh<T: Real>(node_path: &Path, ele_path: &Path) -> Result<TriMesh<T>> {
    let node_text = std::fs::read_to_string(node_path)?;
    let ele_text = std::fs::read_to_string(ele_path)?;

    let mut lines = Lines::new(node_path, &node_text);
    let (hl, header) = lines.next("node header")?;
    let n: usize = lines.field(hl, &header, 0, "node count")?;
    let dim: usize = lines.field(hl, &header, 1, "dimension")?;
    let attrs: usize = lines.field(hl, &header, 2, "attribute count")?;
    let markers: usize = lines.field(hl, &header, 3, "marker count")?;
    if dim != 2 || markers > 1 {
        return Err(lines.err(hl, "malformed header: expected `<n> 2 <attrs> <0|1>`"));
    }
    let mut nodes = Vec::with_capacity(n);
    let mut marks = Vec::with_capacity(n);
    let mut base = 0;
    for k in 0..n {
        let (l, tok) = lines.next("node line")?;
        let idx: usize = lines.field(l, &tok, 0, "node index")?;
        if k == 0 {
            base = idx;
            if base > 1 {
                return Err(lines.err(l, "first node index must be 0 or 1"));
            }
        }
        if idx != k + base {
            return Err(lines.err(l, format!("expected node index {}", k + base)));
        }
        let x: T = lines.field(l, &tok, 1, "x coordinate")?;
        let y: T = lines.field(l, &tok, 2, "y coordinate")?;
        nodes.push([x, y]);
        let mark: i64 = if markers == 1 { lines.field(l, &tok, 3 + attrs, "boundary marker")? } else { 0 };
        if !(0..=3).contains(&mark) {
            return Err(lines.err(l, format!("unknown boundary marker {mark}")));
        }
        marks.push(mark);
    }

    let mut lines = Lines::new(ele_path, &ele_text);
    let (hl, header) = lines.next("element header")?;
    let nt: usize = lines.field(hl, &header, 0, "triangle count")?;
    let per: usize = lines.field(hl, &header, 1, "nodes per triangle")?;
    if per != 3 {
        return Err(lines.err(hl, "only 3-node triangles are supported"));
    }
    let mut triangles = Vec::with_capacity(nt);
    for k in 0..nt {
        let (l, tok) = lines.next("element line")?;
        let idx: usize = lines.field(l, &tok, 0, "triangle index")?;
        if idx != k + base {
            return Err(lines.err(l, format!("expected triangle index {}", k + base)));
        }
        let mut tri = [0usize; 3];
        for (a, v) in tri.iter_mut().enumerate() {
            let raw: usize = lines.field(l, &tok, 1 + a, "vertex index")?;
            if raw < base || raw - base >= n {
                return Err(lines.err(l, format!("vertex index {raw} out of range")));
            }
            *v = raw - base;
        }
        if signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]) <= T::zero() {
            return Err(lines.err(l, "triangle has non-positive area"));
        }
        triangles.push(tri);
    }

    let mut dirichlet = Vec::new();
    let mut perforation = Vec::new();
    let mut neumann = Vec::new();
    if markers == 1 {
        for (v, &m) in marks.iter().enumerate() {
            match m {
                DIRICHLET => dirichlet.push(v),
                OUTER_NEUMANN => neumann.push(v),
                PERFORATION => perforation.push(v),
                _ => {}
            }
        }
    }
    let mut bbox = Rect::new(T::infinity(), T::infinity(), T::neg_infinity(), T::neg_infinity());
    for p in &nodes {
        bbox = Rect::new(bbox.x0.min(p[0]), bbox.y0.min(p[1]), bbox.x1.max(p[0]), bbox.y1.max(p[1]));
    }
    let mut mesh = TriMesh::new(nodes, triangles, dirichlet, perforation, neumann, Vec::new(), bbox)?;
    if markers == 0 {
        let mut b: Vec<usize> = mesh.boundary_edges().into_iter().flatten().collect();
        b.sort_unstable();
        b.dedup();
        mesh.outer_neumann = b;
    }
    Ok(mesh)
}

/// Writes 1-based `.node` (with markers) and `.ele` files. Coordinates use
/// the shortest representation that parses back to the same value.
pub fn write_mesh<T: Real>(mesh: &TriMesh<T>, node_path: &Path, ele_path: &Path) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "{} 2 0 1", mesh.node_count());
    for (i, p) in mesh.nodes().iter().enumerate() {
        let mark = if mesh.is_dirichlet(i) {
            DIRICHLET
        } else if mesh.is_perforation_boundary(i) {
            PERFORATION
        } else if mesh.outer_neumann_nodes().binary_search(&i).is_ok() {
            OUTER_NEUMANN
        } else {
            0
        };
        let _ = writeln!(out, "{} {} {} {}", i + 1, p[0], p[1], mark);
    }
    std::fs::write(node_path, out)?;
    let mut out = String::new();
    let _ = writeln!(out, "{} 3 0", mesh.triangles().len());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let _ = writeln!(out, "{} {} {} {}", t + 1, tri[0] + 1, tri[1] + 1, tri[2] + 1);
    }
    std::fs::write(ele_path, out)?;
    Ok(())
}
