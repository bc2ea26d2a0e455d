mod common;

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use nlschwarz::coarsespace::{build_skeleton, build_trefftz, harmonic_extension, HarmonicExtension, Skeleton, TrefftzSpace};
use nlschwarz::decomposition::{build_partition, Decomposition};
use nlschwarz::mesh::{assemble_fem, generate_perforated_mesh, FemOperators, MeshSpec, Rect, Sides, TriMesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Setup {
    mesh: TriMesh<f64>,
    fem: FemOperators<f64>,
    decomp: Decomposition<f64>,
    skeleton: Skeleton<f64>,
}

fn setup(mesh: TriMesh<f64>, nx: usize, ny: usize, p: usize) -> Setup {
    let fem = assemble_fem(&mesh).unwrap();
    let decomp = build_partition(&mesh, nx, ny).unwrap();
    let skeleton = build_skeleton(&mesh, &decomp, p).unwrap();
    Setup { mesh, fem, decomp, skeleton }
}

fn coarse_points(s: &Setup) -> BTreeSet<(i64, i64)> {
    s.skeleton
        .coarse_nodes
        .iter()
        .map(|&v| {
            let p = s.mesh.nodes()[v];
            ((p[0] * 1e6).round() as i64, (p[1] * 1e6).round() as i64)
        })
        .collect()
}

/// Grid crossings, grid-line/hole intersections, box/hole intersections and
/// box corners that are mesh nodes.
fn geometric_oracle(mesh: &TriMesh<f64>, b: Rect<f64>, holes: &[Rect<f64>], nx: usize, ny: usize) -> BTreeSet<(i64, i64)> {
    let xs: Vec<f64> = (0..=nx).map(|i| b.x0 + b.width() * i as f64 / nx as f64).collect();
    let ys: Vec<f64> = (0..=ny).map(|j| b.y0 + b.height() * j as f64 / ny as f64).collect();
    let mut cand = Vec::new();
    for &x in &xs {
        for &y in &ys {
            cand.push([x, y]);
        }
    }
    for h in holes {
        for &x in xs.iter().chain(&[b.x0, b.x1]) {
            if x >= h.x0 && x <= h.x1 {
                cand.push([x, h.y0]);
                cand.push([x, h.y1]);
            }
        }
        for &y in ys.iter().chain(&[b.y0, b.y1]) {
            if y >= h.y0 && y <= h.y1 {
                cand.push([h.x0, y]);
                cand.push([h.x1, y]);
            }
        }
    }
    let key = |p: [f64; 2]| ((p[0] * 1e6).round() as i64, (p[1] * 1e6).round() as i64);
    let nodes: BTreeSet<_> = mesh.nodes().iter().map(|&p| key(p)).collect();
    cand.into_iter().map(key).filter(|k| nodes.contains(k)).collect()
}

#[test]
fn split_square_skeleton() {
    let s = setup(common::square(0.125, [2, 1]), 2, 1, 1);
    // four box corners plus the two ends of the interface
    assert_eq!(s.skeleton.coarse_nodes.len(), 6);
    assert_eq!(s.skeleton.edges.len(), 7);
    let interface: Vec<_> = s
        .skeleton
        .edges
        .iter()
        .filter(|e| e.nodes.iter().all(|&v| (s.mesh.nodes()[v][0] - 0.5).abs() < 1e-12))
        .collect();
    assert_eq!(interface.len(), 1);
    assert_eq!(interface[0].nodes.len(), 9);
}

#[test]
fn l_shape_coarse_nodes_match_geometry() {
    let b = Rect::new(-1.0, -1.0, 1.0, 1.0);
    let holes = [Rect::new(0.0, 0.0, 1.0, 1.0)];
    for n in [2, 3, 5] {
        let s = setup(common::l_shape(1.0 / 30.0, [n, n]), n, n, 1);
        let oracle = geometric_oracle(&s.mesh, b, &holes, n, n);
        assert_eq!(coarse_points(&s), oracle, "{n}x{n}");
        let has_origin = oracle.contains(&(0, 0));
        assert_eq!(has_origin, n % 2 == 0);
    }
    let s = setup(common::l_shape(1.0 / 30.0, [3, 3]), 3, 3, 1);
    assert_eq!(s.skeleton.coarse_nodes.len(), 16);
}

#[test]
fn straddling_perforation_splits_interface_edge() {
    let plain = setup(common::square(0.125, [2, 1]), 2, 1, 1);
    let hole = Rect::new(0.375, 0.25, 0.625, 0.5);
    let mesh = generate_perforated_mesh(&MeshSpec {
        domain: Rect::new(0.0, 0.0, 1.0, 1.0),
        perforations: vec![hole],
        target_h: 0.125,
        coarse: [2, 1],
        dirichlet: Sides::ALL,
    })
    .unwrap();
    let holed = setup(mesh, 2, 1, 1);
    assert_eq!(holed.skeleton.coarse_nodes.len(), plain.skeleton.coarse_nodes.len() + 2);
    assert_eq!(holed.skeleton.edges.len(), plain.skeleton.edges.len() + 1);
    let pts = coarse_points(&holed);
    assert!(pts.contains(&(500_000, 250_000)) && pts.contains(&(500_000, 500_000)));
    assert_eq!(pts, geometric_oracle(&holed.mesh, Rect::new(0.0, 0.0, 1.0, 1.0), &[hole], 2, 1));
}

#[test]
fn extension_reproduces_constants_and_linears() {
    let s = setup(common::square(0.125, [2, 2]), 2, 2, 1);
    let ones = vec![1.0; s.mesh.node_count()];
    let lin: Vec<f64> = s.mesh.nodes().iter().map(|p| 0.3 * p[0] - 1.7 * p[1] + 0.25).collect();
    for j in 0..s.decomp.len() {
        let e = harmonic_extension(&s.mesh, &s.fem, &s.decomp, &s.skeleton, j, &ones).unwrap();
        assert!(e.iter().all(|v| (v - 1.0).abs() < 1e-13));
        let e = harmonic_extension(&s.mesh, &s.fem, &s.decomp, &s.skeleton, j, &lin).unwrap();
        for (k, &v) in s.decomp.nonoverlap_dofs(j).iter().enumerate() {
            assert!((e[k] - lin[v]).abs() < 1e-12);
        }
    }
}

#[test]
fn random_trace_matches_dense_solve() {
    // one 4x4-element subdomain
    let s = setup(common::square(0.25, [1, 1]), 1, 1, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trace: Vec<f64> = (0..s.mesh.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let got = harmonic_extension(&s.mesh, &s.fem, &s.decomp, &s.skeleton, 0, &trace).unwrap();

    let n = s.mesh.node_count();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for tri in s.mesh.triangles() {
        let p = tri.map(|v| s.mesh.nodes()[v]);
        let area = ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])) / 2.0;
        // edge-vector form of the P1 stiffness
        for a in 0..3 {
            for b in 0..3 {
                let ea = [p[(a + 2) % 3][0] - p[(a + 1) % 3][0], p[(a + 2) % 3][1] - p[(a + 1) % 3][1]];
                let eb = [p[(b + 2) % 3][0] - p[(b + 1) % 3][0], p[(b + 2) % 3][1] - p[(b + 1) % 3][1]];
                k[(tri[a], tri[b])] += (ea[0] * eb[0] + ea[1] * eb[1]) / (4.0 * area);
            }
        }
    }
    let interior: Vec<usize> = (0..n).filter(|&v| !s.skeleton.contains(v)).collect();
    assert_eq!(interior.len(), 9);
    let boundary: Vec<usize> = (0..n).filter(|&v| s.skeleton.contains(v)).collect();
    let kii = DMatrix::from_fn(interior.len(), interior.len(), |a, b| k[(interior[a], interior[b])]);
    let rhs = DVector::from_fn(interior.len(), |a, _| -boundary.iter().map(|&b| k[(interior[a], b)] * trace[b]).sum::<f64>());
    let x = kii.lu().solve(&rhs).unwrap();
    for (a, &v) in interior.iter().enumerate() {
        assert!((got[v] - x[a]).abs() < 1e-12);
    }
    for &v in &boundary {
        assert_eq!(got[v], trace[v]);
    }
}

fn check_space(s: &Setup, space: &TrefftzSpace<f64>) {
    let n = s.mesh.node_count();
    let total = space.restriction().transpose_mul_vec(&vec![1.0; space.dim()]);
    for v in 0..n {
        assert!((total[v] - 1.0).abs() < 1e-12, "sum of basis at node {v}: {}", total[v]);
    }
    let exts: Vec<HarmonicExtension<f64>> =
        (0..s.decomp.len()).map(|j| HarmonicExtension::new(&s.mesh, &s.fem, &s.decomp, &s.skeleton, j).unwrap()).collect();
    for sdof in 0..space.dim() {
        let phi = space.basis_vector(sdof);
        let scale = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for ext in &exts {
            let local: Vec<f64> = ext.nodes().iter().map(|&v| phi[v]).collect();
            for r in ext.interior_residual(&local) {
                assert!(r.abs() <= 1e-10 * scale);
            }
        }
    }
}

#[test]
fn l_shape_basis_is_a_harmonic_partition_of_unity() {
    for n in [3, 5] {
        let s = setup(common::l_shape(1.0 / 30.0, [n, n]), n, n, 1);
        let space = build_trefftz(&s.mesh, &s.fem, &s.decomp, &s.skeleton).unwrap();
        assert_eq!(space.dim(), s.skeleton.coarse_nodes.len());
        check_space(&s, &space);
        // locality: row s lives in the subdomains touching coarse node s
        for (sdof, &node) in s.skeleton.coarse_nodes.iter().enumerate() {
            let touching: Vec<usize> =
                (0..s.decomp.len()).filter(|&j| s.decomp.nonoverlap_dofs(j).binary_search(&node).is_ok()).collect();
            let (cols, _) = space.restriction().row(sdof);
            for c in cols {
                assert!(touching.iter().any(|&j| s.decomp.nonoverlap_dofs(j).binary_search(c).is_ok()));
            }
        }
    }
}

#[test]
fn interface_basis_is_affine_along_the_edge() {
    let s = setup(common::square(0.125, [2, 1]), 2, 1, 1);
    let space = build_trefftz(&s.mesh, &s.fem, &s.decomp, &s.skeleton).unwrap();
    let bottom = s.skeleton.coarse_nodes.iter().position(|&v| s.mesh.nodes()[v] == [0.5, 0.0]).unwrap();
    let top = s.skeleton.coarse_nodes.iter().position(|&v| s.mesh.nodes()[v] == [0.5, 1.0]).unwrap();
    let (pb, pt) = (space.basis_vector(bottom), space.basis_vector(top));
    for (v, p) in s.mesh.nodes().iter().enumerate() {
        if (p[0] - 0.5).abs() < 1e-12 {
            assert!((pb[v] - (1.0 - p[1])).abs() < 1e-14);
            assert!((pt[v] - p[1]).abs() < 1e-14);
        }
    }
}

#[test]
fn quadratic_traces() {
    let s = setup(common::random_perforated(3, 24, [3, 2]), 3, 2, 2);
    let space = build_trefftz(&s.mesh, &s.fem, &s.decomp, &s.skeleton).unwrap();
    assert_eq!(space.dim(), s.skeleton.coarse_nodes.len() + s.skeleton.edges.len());
    check_space(&s, &space);
}

#[test]
fn perforated_basis_sums_to_one() {
    for seed in 0..6 {
        let s = setup(common::random_perforated(seed, 24, [3, 3]), 3, 3, 1);
        let space = build_trefftz(&s.mesh, &s.fem, &s.decomp, &s.skeleton).unwrap();
        check_space(&s, &space);
    }
}
