use super::{Structure, Vec3};
use crate::error::{Error, Result};

/// Directed edge from centre atom `i` to neighbour image `j + shift`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub shift: [i32; 3],
    pub distance: f64,
    /// (r_j + shift·L − r_i) / distance
    pub unit: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    pub edges: Vec<Edge>,
    pub cutoff: f64,
}

impl NeighborGraph {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Keep only edges accepted by `keep`.
    pub fn filtered(&self, keep: impl Fn(&Edge) -> bool) -> NeighborGraph {
        NeighborGraph {
            edges: self.edges.iter().filter(|e| keep(e)).cloned().collect(),
            cutoff: self.cutoff,
        }
    }

    /// Edges whose endpoints are both non-adsorbate atoms.
    pub fn slab_only(&self, adsorbate: &[bool]) -> NeighborGraph {
        self.filtered(|e| !adsorbate[e.i] && !adsorbate[e.j])
    }
}

const COINCIDENT_TOL: f64 = 1e-8;

/// All (i, j, k1, k2) with 0 < |r_j + k1·a + k2·b − r_i| < cutoff and
/// k1, k2 ∈ {−1, 0, 1}; no shifts along the vacuum axis.
pub fn build_neighbor_multigraph(structure: &Structure, cutoff: f64) -> Result<NeighborGraph> {
    if !(cutoff > 0.0) {
        return Err(Error::InvalidArgument(format!("cutoff must be > 0, got {cutoff}")));
    }
    let lat = &structure.lattice;
    let periodic = lat.periodic();
    let mut shifts = Vec::with_capacity(9);
    for k1 in -1..=1 {
        for k2 in -1..=1 {
            if (k1 != 0 && !periodic[0]) || (k2 != 0 && !periodic[1]) {
                continue;
            }
            shifts.push(([k1, k2, 0], lat.shift_vector([k1, k2, 0])));
        }
    }
    let cutoff_sq = cutoff * cutoff;
    let pos = &structure.positions;
    let mut edges = Vec::new();
    for i in 0..pos.len() {
        for j in 0..pos.len() {
            let base = pos[j] - pos[i];
            for (shift, sv) in &shifts {
                let r = base + sv;
                let d2 = r.norm_squared();
                if d2 >= cutoff_sq {
                    continue;
                }
                let d = d2.sqrt();
                if d < COINCIDENT_TOL {
                    if i != j {
                        return Err(Error::CoincidentAtoms(i.min(j), i.max(j)));
                    }
                    continue;
                }
                edges.push(Edge {
                    i,
                    j,
                    shift: *shift,
                    distance: d,
                    unit: r / d,
                });
            }
        }
    }
    Ok(NeighborGraph { edges, cutoff })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::random_structure;
    use super::super::{wrap_into_cell, Lattice};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    /// Independent oracle: materialise every image position explicitly and
    /// compare all pairs.
    pub(crate) fn brute_edges(s: &Structure, cutoff: f64) -> BTreeSet<(usize, usize, i32, i32)> {
        let mut out = BTreeSet::new();
        let (a, b) = (s.lattice.vector(0), s.lattice.vector(1));
        let mut images = Vec::new();
        for (j, p) in s.positions.iter().enumerate() {
            for k1 in -1..=1 {
                for k2 in -1..=1 {
                    images.push((j, k1, k2, p + a * k1 as f64 + b * k2 as f64));
                }
            }
        }
        for (i, p) in s.positions.iter().enumerate() {
            for (j, k1, k2, q) in &images {
                let d = (q - p).norm();
                if d > 0.0 && d < cutoff {
                    out.insert((i, *j, *k1, *k2));
                }
            }
        }
        out
    }

    fn edge_keys(g: &NeighborGraph) -> BTreeSet<(usize, usize, i32, i32)> {
        g.edges.iter().map(|e| (e.i, e.j, e.shift[0], e.shift[1])).collect()
    }

    #[test]
    fn single_atom_square_cell() {
        let lat = Lattice::slab([[3.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 20.0]]).unwrap();
        let s = Structure::new(
            "one",
            vec![29],
            vec![Vec3::new(1.0, 1.0, 5.0)],
            vec![false],
            vec![false],
            lat,
        )
        .unwrap();
        let g = build_neighbor_multigraph(&s, 4.0).unwrap();
        assert_eq!(g.len(), 4);
        for e in &g.edges {
            assert!((e.distance - 3.0).abs() < 1e-12);
            assert_eq!(e.i, 0);
            assert_eq!(e.j, 0);
        }
    }

    #[test]
    fn isolated_dimer() {
        let lat = Lattice::slab([[20.0, 0.0, 0.0], [0.0, 20.0, 0.0], [0.0, 0.0, 20.0]]).unwrap();
        let s = Structure::new(
            "dimer",
            vec![8, 8],
            vec![Vec3::new(5.0, 5.0, 5.0), Vec3::new(6.0, 5.0, 5.0)],
            vec![false; 2],
            vec![false; 2],
            lat,
        )
        .unwrap();
        let g = build_neighbor_multigraph(&s, 4.0).unwrap();
        assert_eq!(g.len(), 2);
        assert!(g.edges.iter().all(|e| e.shift == [0, 0, 0]));
    }

    #[test]
    fn coincident_atoms_error() {
        let lat = Lattice::slab([[10.0, 0.0, 0.0], [0.0, 10.0, 0.0], [0.0, 0.0, 20.0]]).unwrap();
        let p = Vec3::new(1.0, 1.0, 1.0);
        let s = Structure::new("c", vec![8, 8], vec![p, p], vec![false; 2], vec![false; 2], lat).unwrap();
        let err = build_neighbor_multigraph(&s, 4.0).unwrap_err();
        assert!(err.to_string().contains("coincident atoms"));
    }

    #[test]
    fn matches_brute_force_on_random_slabs() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let s = wrap_into_cell(&random_structure(&mut rng, 20));
            let g = build_neighbor_multigraph(&s, 4.0).unwrap();
            assert_eq!(edge_keys(&g), brute_edges(&s, 4.0));
            for e in &g.edges {
                assert!(e.distance > 0.0 && e.distance < 4.0);
                assert_eq!(e.shift[2], 0);
                let r = s.positions[e.j] + s.lattice.shift_vector(e.shift) - s.positions[e.i];
                assert!((r.norm() - e.distance).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn permutation_relabels_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = wrap_into_cell(&random_structure(&mut rng, 12));
        let perm: Vec<usize> = (0..12).rev().collect();
        let p = s.permuted(&perm);
        let g = build_neighbor_multigraph(&s, 4.0).unwrap();
        let gp = build_neighbor_multigraph(&p, 4.0).unwrap();
        // new index k holds old atom perm[k]
        let mapped: BTreeSet<_> = edge_keys(&gp)
            .into_iter()
            .map(|(i, j, k1, k2)| (perm[i], perm[j], k1, k2))
            .collect();
        assert_eq!(mapped, edge_keys(&g));
    }

    #[test]
    fn large_cell_equals_open_boundary_search() {
        let lat = Lattice::slab([[30.0, 0.0, 0.0], [0.0, 30.0, 0.0], [0.0, 0.0, 30.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let positions: Vec<Vec3> = (0..15)
            .map(|_| {
                use rand::Rng;
                Vec3::new(
                    rng.gen_range(10.0..16.0),
                    rng.gen_range(10.0..16.0),
                    rng.gen_range(5.0..9.0),
                )
            })
            .collect();
        let s = Structure::new(
            "open",
            vec![6; 15],
            positions.clone(),
            vec![false; 15],
            vec![false; 15],
            lat,
        )
        .unwrap();
        let g = build_neighbor_multigraph(&s, 4.0).unwrap();
        let mut naive = BTreeSet::new();
        for i in 0..15 {
            for j in 0..15 {
                let d = (positions[j] - positions[i]).norm();
                if i != j && d < 4.0 {
                    naive.insert((i, j, 0, 0));
                }
            }
        }
        assert_eq!(edge_keys(&g), naive);
    }
}
