//! Fill-reducing ordering for sparse LU.
//!
//! Plain minimum degree on the elimination graph of `A + A^T`, ties broken
//! by index so the ordering is deterministic.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::csr::SparsityPattern;

/// Returns `perm` with `perm[k]` the index eliminated at step `k`.
pub fn minimum_degree(pattern: &SparsityPattern) -> Vec<usize> {
    let n = pattern.nrows();
    assert_eq!(n, pattern.ncols(), "ordering needs a square pattern");
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for &j in pattern.row(i) {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }

    let mut eliminated = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        (0..n).map(|i| Reverse((adj[i].len(), i))).collect();
    let mut order = Vec::with_capacity(n);
    let mut merged = Vec::new();
    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || adj[v].len() != deg {
            continue;
        }
        eliminated[v] = true;
        order.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &u in &nbrs {
            merge_excluding(&adj[u], &nbrs, u, v, &mut merged);
            std::mem::swap(&mut adj[u], &mut merged);
            heap.push(Reverse((adj[u].len(), u)));
        }
    }
    debug_assert_eq!(order.len(), n);
    order
}

/// Sorted union of `a` and `b` without `skip1`, `skip2`.
fn merge_excluding(a: &[usize], b: &[usize], skip1: usize, skip2: usize, out: &mut Vec<usize>) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(_), Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        if next != skip1 && next != skip2 {
            out.push(next);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_is_a_permutation() {
        let rows: Vec<Vec<usize>> = (0..20)
            .map(|i| {
                let mut r = vec![i];
                if i > 0 {
                    r.push(i - 1);
                }
                if i + 1 < 20 {
                    r.push(i + 1);
                }
                if i + 5 < 20 {
                    r.push(i + 5);
                }
                r
            })
            .collect();
        let p = minimum_degree(&SparsityPattern::from_rows(20, rows));
        let mut sorted = p.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn star_graph_eliminates_leaves_first() {
        // Hub 0 connected to everyone: eliminating it first would create a clique.
        let mut rows = vec![(0..6).collect::<Vec<_>>()];
        rows.extend((1..6).map(|i| vec![0, i]));
        let p = minimum_degree(&SparsityPattern::from_rows(6, rows));
        assert_ne!(p[0], 0);
    }
}
