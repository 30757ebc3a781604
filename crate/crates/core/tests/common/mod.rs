#![allow(dead_code)]

use bridgecat::geometry::{wrap_into_cell, Lattice, Structure, StructurePair, Vec3};
use rand::Rng;

pub fn random_oblique_lattice<R: Rng>(rng: &mut R) -> Lattice {
    let a = rng.gen_range(6.0..10.0);
    let b = rng.gen_range(6.0..10.0);
    let gamma: f64 = rng.gen_range(60f64..120.0).to_radians();
    Lattice::slab([[a, 0.0, 0.0], [b * gamma.cos(), b * gamma.sin(), 0.0], [0.0, 0.0, 25.0]]).unwrap()
}

/// Slab-like random structure: a third fixed, the last two atoms adsorbate.
pub fn random_structure<R: Rng>(rng: &mut R, n: usize) -> Structure {
    let lattice = random_oblique_lattice(rng);
    let positions = (0..n)
        .map(|_| lattice.to_cart(&Vec3::new(rng.gen(), rng.gen(), rng.gen_range(0.1..0.5))))
        .collect();
    let fixed: Vec<bool> = (0..n).map(|i| i < n / 3).collect();
    let adsorbate: Vec<bool> = (0..n).map(|i| i + 2 >= n && i >= n / 3).collect();
    Structure::new(
        "random",
        (0..n).map(|i| [78, 28, 8, 1][i % 4]).collect(),
        positions,
        fixed,
        adsorbate,
        lattice,
    )
    .unwrap()
}

/// Relaxed structure plus an initial guess with free atoms moved by up to `shift`.
pub fn random_pair<R: Rng>(rng: &mut R, n: usize, shift: f64) -> StructurePair {
    let relaxed = wrap_into_cell(&random_structure(rng, n));
    let mut initial = relaxed.clone();
    for i in 0..n {
        if !initial.fixed[i] {
            initial.positions[i] += Vec3::new(
                rng.gen_range(-shift..shift),
                rng.gen_range(-shift..shift),
                rng.gen_range(-shift..shift),
            );
        }
    }
    StructurePair::new(wrap_into_cell(&initial), relaxed, "O", "111").unwrap()
}

pub fn brute_min_image(lattice: &Lattice, from: &Vec3, to: &Vec3) -> f64 {
    let mut best = f64::INFINITY;
    for k1 in -1..=1 {
        for k2 in -1..=1 {
            let img = to + lattice.vector(0) * k1 as f64 + lattice.vector(1) * k2 as f64;
            best = best.min((img - from).norm());
        }
    }
    best
}

pub fn max_dev(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn shuffled<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    perm
}
