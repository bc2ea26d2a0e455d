use std::collections::BTreeSet;

use nlschwarz::mesh::{assemble_fem, generate_perforated_mesh, load_mesh, write_mesh, Connectivity, MeshSpec, Rect, Sides};
use nlschwarz::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(domain: Rect<f64>, holes: Vec<Rect<f64>>, h: f64, coarse: [usize; 2]) -> MeshSpec<f64> {
    MeshSpec { domain, perforations: holes, target_h: h, coarse, dirichlet: Sides::ALL }
}

/// Counts active cells and the grid points they touch.
fn cell_count_oracle(nx: usize, ny: usize, hole: impl Fn(f64, f64) -> bool, h: f64, x0: f64, y0: f64) -> (usize, usize) {
    let mut points = BTreeSet::new();
    let mut cells = 0;
    for j in 0..ny {
        for i in 0..nx {
            let (cx, cy) = (x0 + (i as f64 + 0.5) * h, y0 + (j as f64 + 0.5) * h);
            if hole(cx, cy) {
                continue;
            }
            cells += 1;
            for (a, b) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                points.insert((i + a, j + b));
            }
        }
    }
    (points.len(), 2 * cells)
}

#[test]
fn rectangle_with_hole_matches_cell_enumeration() {
    let s = spec(Rect::new(0.0, 0.0, 2.0, 1.0), vec![Rect::new(0.5, 0.25, 1.0, 0.75)], 0.25, [1, 1]);
    let mesh = generate_perforated_mesh(&s).unwrap();
    let (nodes, tris) = cell_count_oracle(8, 4, |x, y| x > 0.5 && x < 1.0 && y > 0.25 && y < 0.75, 0.25, 0.0, 0.0);
    assert_eq!(mesh.node_count(), nodes);
    assert_eq!(mesh.triangles().len(), tris);
}

#[test]
fn round_trip_through_triangle_files() {
    let s = MeshSpec {
        domain: Rect::new(-1.0, -1.0, 1.0, 1.0),
        perforations: vec![Rect::new(0.0, 0.0, 1.0, 1.0)],
        target_h: 1.0 / 9.0,
        coarse: [3, 3],
        dirichlet: Sides { top: true, right: true, ..Sides::NONE },
    };
    let mesh = generate_perforated_mesh(&s).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (np, ep) = (dir.path().join("m.node"), dir.path().join("m.ele"));
    write_mesh(&mesh, &np, &ep).unwrap();
    let back = load_mesh::<f64>(&np, &ep).unwrap();
    assert_eq!(back.nodes(), mesh.nodes());
    assert_eq!(back.triangles(), mesh.triangles());
    assert_eq!(back.dirichlet_nodes(), mesh.dirichlet_nodes());
    assert_eq!(back.perforation_boundary_nodes(), mesh.perforation_boundary_nodes());
    assert_eq!(back.outer_neumann_nodes(), mesh.outer_neumann_nodes());
}

fn write_square(dir: &std::path::Path, markers: [u8; 4]) -> (std::path::PathBuf, std::path::PathBuf) {
    let np = dir.join("sq.node");
    let ep = dir.join("sq.ele");
    let pts = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    let mut node = String::from("# unit square\n4 2 0 1\n");
    for (i, ((x, y), m)) in pts.iter().zip(markers).enumerate() {
        node += &format!("{} {x} {y} {m}\n", i + 1);
    }
    std::fs::write(&np, node).unwrap();
    std::fs::write(&ep, "2 3 0\n1 1 2 3\n2 1 3 4 # second\n").unwrap();
    (np, ep)
}

#[test]
fn loads_unit_square_markers() {
    let dir = tempfile::tempdir().unwrap();
    let (np, ep) = write_square(dir.path(), [1, 1, 1, 1]);
    let mesh = load_mesh::<f64>(&np, &ep).unwrap();
    assert_eq!(mesh.dirichlet_nodes(), &[0, 1, 2, 3]);

    let (np, ep) = write_square(dir.path(), [1, 3, 3, 1]);
    let mesh = load_mesh::<f64>(&np, &ep).unwrap();
    assert_eq!(mesh.dirichlet_nodes(), &[0, 3]);
    assert_eq!(mesh.perforation_boundary_nodes(), &[1, 2]);
}

#[test]
fn loader_reports_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let (np, ep) = write_square(dir.path(), [1, 1, 1, 1]);
    std::fs::write(&ep, "2 3 0\n1 1 2 3\n2 1 4 3\n").unwrap();
    match load_mesh::<f64>(&np, &ep) {
        Err(Error::Parse { line: 3, .. }) => {}
        other => panic!("{other:?}"),
    }
    std::fs::write(&ep, "2 3 0\n1 1 2 9\n2 1 3 4\n").unwrap();
    assert!(matches!(load_mesh::<f64>(&np, &ep), Err(Error::Parse { line: 2, .. })));
    std::fs::write(&np, "4 3 0 1\n").unwrap();
    assert!(matches!(load_mesh::<f64>(&np, &ep), Err(Error::Parse { line: 1, .. })));
}

#[test]
fn zero_based_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let np = dir.path().join("z.node");
    let ep = dir.path().join("z.ele");
    std::fs::write(&np, "3 2 0 0\n0 0 0\n1 1 0\n2 0 1\n").unwrap();
    std::fs::write(&ep, "1 3 0\n0 0 1 2\n").unwrap();
    let mesh = load_mesh::<f64>(&np, &ep).unwrap();
    assert_eq!(mesh.triangles(), &[[0, 1, 2]]);
    assert_eq!(mesh.outer_neumann_nodes(), &[0, 1, 2]);
}

/// Random rectangle with a handful of grid-aligned holes on a 16x16 grid.
fn random_spec(seed: u64) -> Option<MeshSpec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1.0 / 16.0;
    let mut holes: Vec<[usize; 4]> = Vec::new();
    for _ in 0..rng.gen_range(0..4) {
        let i0 = rng.gen_range(1..12);
        let j0 = rng.gen_range(1..12);
        let c = [i0, i0 + rng.gen_range(1..4), j0, j0 + rng.gen_range(1..4)];
        // keep a one-cell gap so holes never touch and never cut the domain
        if holes.iter().all(|o| c[1] + 1 <= o[0] || o[1] + 1 <= c[0] || c[3] + 1 <= o[2] || o[3] + 1 <= c[2]) {
            holes.push(c);
        }
    }
    let rects = holes.iter().map(|c| Rect::new(c[0] as f64 * h, c[2] as f64 * h, c[1] as f64 * h, c[3] as f64 * h)).collect();
    Some(spec(Rect::new(0.0, 0.0, 1.0, 1.0), rects, h, [4, 4]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fem_invariants(seed in any::<u64>()) {
        let s = random_spec(seed).unwrap();
        let mesh = generate_perforated_mesh(&s).unwrap();
        let fem = assemble_fem(&mesh).unwrap();
        let area = s.domain.area() - s.perforations.iter().map(|p| p.area()).sum::<f64>();
        let mass: f64 = fem.lumped_mass.iter().sum();
        prop_assert!((mass - area).abs() <= 1e-12 * area);

        let a = &fem.stiffness;
        let n = mesh.node_count();
        for i in 0..n {
            let (cols, vals) = a.row(i);
            let sum: f64 = vals.iter().sum();
            prop_assert!(sum.abs() < 1e-12);
            for (&j, &v) in cols.iter().zip(vals) {
                prop_assert!((v - a.get(j, i)).abs() < 1e-14);
                if j != i {
                    prop_assert!(v <= 1e-14, "positive off-diagonal {v}");
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        for _ in 0..100 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ax = a.mul_vec(&x);
            let q: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
            prop_assert!(q >= -1e-12);
        }

        for tri in mesh.triangles() {
            let p = tri.map(|v| mesh.nodes()[v]);
            for k in 0..3 {
                let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
                let dot = (b[0] - a[0]) * (c[0] - a[0]) + (b[1] - a[1]) * (c[1] - a[1]);
                prop_assert!(dot >= -1e-14, "obtuse angle");
            }
        }
        for hole in &s.perforations {
            prop_assert!(mesh.nodes().iter().all(|&p| !hole.contains_strict(p)));
        }
        for &d in mesh.dirichlet_nodes() {
            prop_assert!(!mesh.is_perforation_boundary(d));
        }
    }

    #[test]
    fn neighbour_sets_are_symmetric(seed in any::<u64>()) {
        let mesh = generate_perforated_mesh(&random_spec(seed).unwrap()).unwrap();
        let c = Connectivity::build(&mesh);
        for (i, nb) in c.node_neighbors.iter().enumerate() {
            prop_assert!(nb.contains(&i));
            for &l in nb {
                prop_assert!(c.node_neighbors[l].binary_search(&i).is_ok());
            }
        }
    }
}
