//! Coarse nonoverlapping partitions and their overlapping extensions.
//!
//! Subdomain `j` owns the triangles whose centroid lies in coarse cell
//! `D_j`. Interface nodes shared by `k` subdomains get weight `1/k` in the
//! nonoverlapping partition of unity; the overlapping (RAS) weights keep
//! those values on `Ω_j` and are zero on the added layers.

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::mesh::{Connectivity, Rect, TriMesh};
use crate::scalar::{Real, Scalar};

#[derive(Clone, Debug)]
pub struct Decomposition<T> {
    grid: [usize; 2],
    cells: Vec<Rect<T>>,
    cell_index: Vec<usize>,
    element_owner: Vec<usize>,
    nonoverlap_elements: Vec<Vec<usize>>,
    nonoverlap_dofs: Vec<Vec<usize>>,
    overlap_elements: Vec<Vec<usize>>,
    overlap_dofs: Vec<Vec<usize>>,
    share: Vec<u32>,
    h: Vec<T>,
    layers: Vec<usize>,
    overlap_fraction: T,
}

fn sorted_nodes<T: Real>(mesh: &TriMesh<T>, elements: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = elements.iter().flat_map(|&t| mesh.triangles()[t]).collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn ones<S: Scalar>(k: u32) -> S {
    (0..k).fold(S::zero(), |acc, _| acc + S::one())
}

/// Partitions the mesh along an `nx x ny` grid over its domain box.
/// Cells without elements are dropped.
pub fn build_partition<T: Real>(mesh: &TriMesh<T>, nx: usize, ny: usize) -> Result<Decomposition<T>> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidParameter("partition must have at least one cell per direction".into()));
    }
    let d = mesh.domain_box();
    let locate = |v: T, origin: T, len: T, n: usize| -> usize {
        let s = ((v - origin) / len).to_f64_lossy() * n as f64;
        let frac = s - s.round();
        assert!(frac.abs() > 1e-9 || s.round() == 0.0 || s.round() == n as f64, "centroid on a coarse grid line");
        (s.floor().max(0.0) as usize).min(n - 1)
    };
    let mut by_cell: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
    for t in 0..mesh.triangles().len() {
        let c = mesh.centroid(t);
        let i = locate(c[0], d.x0, d.width(), nx);
        let j = locate(c[1], d.y0, d.height(), ny);
        by_cell[j * nx + i].push(t);
    }
    let mut cells = Vec::new();
    let mut cell_index = Vec::new();
    let mut nonoverlap_elements = Vec::new();
    let mut element_owner = vec![usize::MAX; mesh.triangles().len()];
    for (c, elems) in by_cell.into_iter().enumerate() {
        if elems.is_empty() {
            continue;
        }
        let (i, j) = (c % nx, c / nx);
        let frac = |k: usize, n: usize| T::from_usize_lossy(k) / T::from_usize_lossy(n);
        cells.push(Rect::new(
            d.x0 + d.width() * frac(i, nx),
            d.y0 + d.height() * frac(j, ny),
            d.x0 + d.width() * frac(i + 1, nx),
            d.y0 + d.height() * frac(j + 1, ny),
        ));
        for &t in &elems {
            element_owner[t] = cell_index.len();
        }
        cell_index.push(c);
        nonoverlap_elements.push(elems);
    }
    let nonoverlap_dofs: Vec<Vec<usize>> = nonoverlap_elements.iter().map(|e| sorted_nodes(mesh, e)).collect();
    let mut share = vec![0u32; mesh.node_count()];
    for dofs in &nonoverlap_dofs {
        for &v in dofs {
            share[v] += 1;
        }
    }
    let h = nonoverlap_dofs
        .iter()
        .map(|dofs| {
            let (mut lo, mut hi) = ([T::infinity(); 2], [T::neg_infinity(); 2]);
            for &v in dofs {
                let p = mesh.nodes()[v];
                for k in 0..2 {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
            (hi[0] - lo[0]).max(hi[1] - lo[1])
        })
        .collect();
    let ns = cells.len();
    Ok(Decomposition {
        grid: [nx, ny],
        cells,
        cell_index,
        element_owner,
        overlap_elements: nonoverlap_elements.clone(),
        overlap_dofs: nonoverlap_dofs.clone(),
        nonoverlap_elements,
        nonoverlap_dofs,
        share,
        h,
        layers: vec![0; ns],
        overlap_fraction: T::zero(),
    })
}

/// Grows each subdomain by whole element layers until every node on the
/// growth front lies at distance `>= fraction * H_j` from the coarse cell;
/// at least one layer is always added.
pub fn extend_overlap<T: Real>(decomp: &Decomposition<T>, mesh: &TriMesh<T>, fraction: T) -> Result<Decomposition<T>> {
    if !(fraction > T::zero()) {
        return Err(Error::InvalidParameter(format!("overlap fraction must be positive, got {fraction}")));
    }
    let conn = Connectivity::build(mesh);
    let n = mesh.node_count();
    let mut out = decomp.clone();
    out.overlap_fraction = fraction;
    for j in 0..decomp.len() {
        let target = fraction * decomp.h[j];
        let rect = decomp.cells[j];
        let mut in_elem = vec![false; mesh.triangles().len()];
        let mut in_node = vec![false; n];
        for &t in &decomp.nonoverlap_elements[j] {
            in_elem[t] = true;
        }
        for &v in &decomp.nonoverlap_dofs[j] {
            in_node[v] = true;
        }
        let mut nodes = decomp.nonoverlap_dofs[j].clone();
        let mut layers = 0;
        loop {
            let mut added = Vec::new();
            for &v in &nodes {
                for &t in &conn.node_triangles[v] {
                    if !in_elem[t] {
                        in_elem[t] = true;
                        added.push(t);
                    }
                }
            }
            if added.is_empty() {
                break;
            }
            layers += 1;
            for &t in &added {
                for v in mesh.triangles()[t] {
                    if !in_node[v] {
                        in_node[v] = true;
                        nodes.push(v);
                    }
                }
            }
            let front = nodes
                .iter()
                .filter(|&&v| conn.node_neighbors[v].iter().any(|&l| !in_node[l]))
                .map(|&v| rect.distance(mesh.nodes()[v]))
                .fold(None, |m: Option<T>, d| Some(m.map_or(d, |m| m.min(d))));
            match front {
                None => {
                    log::warn!("overlapping subdomain {j} covers the whole domain");
                    break;
                }
                Some(dist) if dist >= target => break,
                Some(_) => {}
            }
        }
        let elements: Vec<usize> = (0..in_elem.len()).filter(|&t| in_elem[t]).collect();
        out.overlap_dofs[j] = (0..n).filter(|&v| in_node[v]).collect();
        out.overlap_elements[j] = elements;
        out.layers[j] = layers;
    }
    Ok(out)
}

impl<T: Real> Decomposition<T> {
    /// Number of nonempty subdomains `N_s`.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn grid(&self) -> [usize; 2] {
        self.grid
    }

    /// Coarse cell `D_j`.
    pub fn cell(&self, j: usize) -> Rect<T> {
        self.cells[j]
    }

    /// Row-major index of subdomain `j` in the full coarse grid.
    pub fn cell_index(&self, j: usize) -> usize {
        self.cell_index[j]
    }

    pub fn element_owner(&self) -> &[usize] {
        &self.element_owner
    }

    pub fn nonoverlap_elements(&self, j: usize) -> &[usize] {
        &self.nonoverlap_elements[j]
    }

    pub fn nonoverlap_dofs(&self, j: usize) -> &[usize] {
        &self.nonoverlap_dofs[j]
    }

    pub fn overlap_elements(&self, j: usize) -> &[usize] {
        &self.overlap_elements[j]
    }

    pub fn overlap_dofs(&self, j: usize) -> &[usize] {
        &self.overlap_dofs[j]
    }

    /// Number of nonoverlapping subdomains containing each node.
    pub fn share(&self) -> &[u32] {
        &self.share
    }

    pub fn h(&self, j: usize) -> T {
        self.h[j]
    }

    pub fn layers(&self, j: usize) -> usize {
        self.layers[j]
    }

    pub fn overlap_fraction(&self) -> T {
        self.overlap_fraction
    }

    /// `P̄_j`, aligned with [`nonoverlap_dofs`](Self::nonoverlap_dofs).
    pub fn nonoverlap_pou<S: Scalar>(&self, j: usize) -> Vec<S> {
        self.nonoverlap_dofs[j].iter().map(|&v| S::one() / ones::<S>(self.share[v])).collect()
    }

    /// RAS weights `P_j`, aligned with [`overlap_dofs`](Self::overlap_dofs).
    pub fn pou_weights<S: Scalar>(&self, j: usize) -> Vec<S> {
        let owned = &self.nonoverlap_dofs[j];
        self.overlap_dofs[j]
            .iter()
            .map(|&v| {
                if owned.binary_search(&v).is_ok() {
                    S::one() / ones::<S>(self.share[v])
                } else {
                    S::zero()
                }
            })
            .collect()
    }

    /// Boolean restriction onto the given sorted index list.
    pub fn restriction<S: Scalar>(dofs: &[usize], n: usize) -> CsrMatrix<S> {
        let row_ptr = (0..=dofs.len()).collect();
        CsrMatrix::new(dofs.len(), n, row_ptr, dofs.to_vec(), vec![S::one(); dofs.len()])
            .expect("valid restriction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_perforated_mesh, MeshSpec, Sides};

    fn square(h: f64, coarse: [usize; 2]) -> TriMesh<f64> {
        generate_perforated_mesh(&MeshSpec {
            domain: Rect::new(0.0, 0.0, 1.0, 1.0),
            perforations: vec![],
            target_h: h,
            coarse,
            dirichlet: Sides::ALL,
        })
        .unwrap()
    }

    #[test]
    fn single_cell_owns_everything() {
        let mesh = square(0.25, [1, 1]);
        let d = build_partition(&mesh, 1, 1).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.nonoverlap_dofs(0).len(), mesh.node_count());
        assert!(d.nonoverlap_pou::<f64>(0).iter().all(|&w| w == 1.0));
    }

    #[test]
    fn interface_weights_are_halves() {
        let mesh = square(0.25, [2, 1]);
        let d = build_partition(&mesh, 2, 1).unwrap();
        for j in 0..2 {
            for (&v, w) in d.nonoverlap_dofs(j).iter().zip(d.nonoverlap_pou::<f64>(j)) {
                let on_interface = (mesh.nodes()[v][0] - 0.5).abs() < 1e-12;
                assert_eq!(w, if on_interface { 0.5 } else { 1.0 });
            }
        }
    }

    #[test]
    fn tiny_fraction_adds_exactly_one_layer() {
        let mesh = square(0.125, [2, 2]);
        let d = extend_overlap(&build_partition(&mesh, 2, 2).unwrap(), &mesh, 1e-6).unwrap();
        for j in 0..4 {
            assert_eq!(d.layers(j), 1);
            // 4x4 block of cells plus one ring of neighbours inside the square
            assert!(d.overlap_dofs(j).len() > d.nonoverlap_dofs(j).len());
        }
    }
}
