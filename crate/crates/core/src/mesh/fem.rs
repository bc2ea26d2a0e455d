use super::{Connectivity, TriMesh};
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::scalar::Real;

/// P1 finite element data of a mesh.
#[derive(Clone, Debug)]
pub struct FemOperators<T> {
    /// Row sums of the consistent mass matrix.
    pub lumped_mass: Vec<T>,
    /// Stiffness matrix on the node-neighbour pattern.
    pub stiffness: CsrMatrix<T>,
    /// Per triangle, `gradients[t][k]` is the constant gradient of the hat
    /// function of local vertex `k`; `∇u|_T = Σ_k u_k gradients[t][k]`.
    pub gradients: Vec<[[T; 2]; 3]>,
    pub areas: Vec<T>,
}

impl<T: Real> FemOperators<T> {
    /// Element gradient of the nodal field `u` on triangle `t`.
    pub fn gradient(&self, tri: &[usize; 3], t: usize, u: &[T]) -> [T; 2] {
        let g = &self.gradients[t];
        let mut out = [T::zero(); 2];
        for k in 0..3 {
            out[0] += u[tri[k]] * g[k][0];
            out[1] += u[tri[k]] * g[k][1];
        }
        out
    }
}

/// Assembles lumped mass, stiffness and element gradients.
pub fn assemble_fem<T: Real>(mesh: &TriMesh<T>) -> Result<FemOperators<T>> {
    let conn = Connectivity::build(mesh);
    let pattern = conn.pattern();
    let mut stiffness = CsrMatrix::from_pattern(&pattern, vec![T::zero(); pattern.nnz()]);
    let mut lumped_mass = vec![T::zero(); mesh.node_count()];
    let mut gradients = Vec::with_capacity(mesh.triangles().len());
    let mut areas = Vec::with_capacity(mesh.triangles().len());
    let third = T::one() / T::lit(3.0);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let [p0, p1, p2] = tri.map(|v| mesh.nodes()[v]);
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let area = det / T::lit(2.0);
        if !(area > T::zero()) {
            return Err(Error::DegenerateTriangle { triangle: t, area: area.to_f64_lossy() });
        }
        let g = [
            [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
            [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
            [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
        ];
        for a in 0..3 {
            lumped_mass[tri[a]] += area * third;
            for b in 0..3 {
                let pos = pattern.position(tri[a], tri[b]).expect("neighbour pattern");
                stiffness.values_mut()[pos] += area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
            }
        }
        gradients.push(g);
        areas.push(area);
    }
    Ok(FemOperators { lumped_mass, stiffness, gradients, areas })
}
