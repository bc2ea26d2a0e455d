use super::TriMesh;
use crate::linalg::SparsityPattern;
use crate::scalar::Real;

/// Incident triangles `T_i` and neighbour sets `N_i` (which contain `i`).
#[derive(Clone, Debug)]
pub struct Connectivity {
    pub node_triangles: Vec<Vec<usize>>,
    pub node_neighbors: Vec<Vec<usize>>,
}

impl Connectivity {
    pub fn build<T: Real>(mesh: &TriMesh<T>) -> Self {
        let n = mesh.node_count();
        let mut node_triangles = vec![Vec::new(); n];
        let mut node_neighbors = vec![Vec::new(); n];
        for (t, tri) in mesh.triangles().iter().enumerate() {
            for &a in tri {
                node_triangles[a].push(t);
                node_neighbors[a].extend_from_slice(tri);
            }
        }
        for nb in &mut node_neighbors {
            nb.sort_unstable();
            nb.dedup();
        }
        Connectivity { node_triangles, node_neighbors }
    }

    /// Node-to-node pattern; row `i` is `N_i`.
    pub fn pattern(&self) -> SparsityPattern {
        let n = self.node_neighbors.len();
        SparsityPattern::from_rows(n, self.node_neighbors.clone())
    }
}
