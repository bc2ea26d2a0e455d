#![allow(dead_code)]

use nlschwarz::mesh::{generate_perforated_mesh, MeshSpec, Rect, Sides, TriMesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn square(h: f64, coarse: [usize; 2]) -> TriMesh<f64> {
    generate_perforated_mesh(&MeshSpec {
        domain: Rect::new(0.0, 0.0, 1.0, 1.0),
        perforations: vec![],
        target_h: h,
        coarse,
        dirichlet: Sides::ALL,
    })
    .unwrap()
}

/// `(-1,1)^2` minus `(0,1)^2`, Dirichlet on the top and right sides.
pub fn l_shape(h: f64, coarse: [usize; 2]) -> TriMesh<f64> {
    generate_perforated_mesh(&MeshSpec {
        domain: Rect::new(-1.0, -1.0, 1.0, 1.0),
        perforations: vec![Rect::new(0.0, 0.0, 1.0, 1.0)],
        target_h: h,
        coarse,
        dirichlet: Sides { top: true, right: true, ..Sides::NONE },
    })
    .unwrap()
}

/// Unit square on a `g x g` grid with up to three separated holes.
pub fn random_perforated(seed: u64, g: usize, coarse: [usize; 2]) -> TriMesh<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1.0 / g as f64;
    let mut holes: Vec<[usize; 4]> = Vec::new();
    for _ in 0..rng.gen_range(0..4) {
        let i0 = rng.gen_range(1..g - 4);
        let j0 = rng.gen_range(1..g - 4);
        let c = [i0, i0 + rng.gen_range(1..4), j0, j0 + rng.gen_range(1..4)];
        if holes.iter().all(|o| c[1] < o[0] || o[1] < c[0] || c[3] < o[2] || o[3] < c[2]) {
            holes.push(c);
        }
    }
    let rects = holes
        .iter()
        .map(|c| Rect::new(c[0] as f64 * h, c[2] as f64 * h, c[1] as f64 * h, c[3] as f64 * h))
        .collect();
    generate_perforated_mesh(&MeshSpec {
        domain: Rect::new(0.0, 0.0, 1.0, 1.0),
        perforations: rects,
        target_h: h,
        coarse,
        dirichlet: Sides { left: true, right: true, ..Sides::NONE },
    })
    .unwrap()
}
