//! Distance-matrix error and success ratio.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{min_image_distance_matrix, Structure};

/// Mean absolute difference of the minimum-image distance matrices,
/// normalised by N² (the zero diagonal is counted).
pub fn dmae(a: &Structure, b: &Structure) -> Result<f64> {
    if a.len() != b.len() || a.atomic_numbers != b.atomic_numbers {
        return Err(Error::Mismatch(format!(
            "dmae needs the same atoms ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.lattice != b.lattice {
        return Err(Error::Mismatch("dmae needs the same lattice".into()));
    }
    let da = min_image_distance_matrix(a);
    let db = min_image_distance_matrix(b);
    let n = a.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += (da[i][j] - db[i][j]).abs();
        }
    }
    Ok(total / (n * n) as f64)
}

/// Fraction of `errors` that are ≤ `epsilon`.
pub fn success_ratio(errors: &[f64], epsilon: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::InvalidArgument("success ratio of an empty list".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    let hits = errors.iter().filter(|e| e.abs() <= epsilon).count();
    Ok(hits as f64 / errors.len() as f64)
}

/// Linear-interpolation percentile of unsorted data, `q` in [0, 100].
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub id: String,
    pub dmae: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub count: usize,
    pub mean_dmae: Option<f64>,
    pub p50: Option<f64>,
    pub p90: Option<f64>,
    pub p99: Option<f64>,
    pub eta: Option<f64>,
    pub epsilon: Option<f64>,
    pub counts_by_label: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub entries: Vec<EvalEntry>,
    /// η and ε when energy errors were supplied.
    pub eta: Option<f64>,
    pub epsilon: Option<f64>,
}

impl EvalReport {
    pub fn new(entries: Vec<EvalEntry>) -> Self {
        EvalReport {
            entries,
            eta: None,
            epsilon: None,
        }
    }

    pub fn with_energy_errors(mut self, errors: &[f64], epsilon: f64) -> Result<Self> {
        self.eta = Some(success_ratio(errors, epsilon)?);
        self.epsilon = Some(epsilon);
        Ok(self)
    }

    pub fn mean_dmae(&self) -> Option<f64> {
        if self.entries.is_empty() {
            return None;
        }
        Some(self.entries.iter().map(|e| e.dmae).sum::<f64>() / self.entries.len() as f64)
    }

    pub fn summary(&self) -> EvalSummary {
        let d: Vec<f64> = self.entries.iter().map(|e| e.dmae).collect();
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.label.clone()).or_insert(0) += 1;
        }
        EvalSummary {
            count: d.len(),
            mean_dmae: self.mean_dmae(),
            p50: percentile(&d, 50.0),
            p90: percentile(&d, 90.0),
            p99: percentile(&d, 99.0),
            eta: self.eta,
            epsilon: self.epsilon,
            counts_by_label: counts,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::testutil::{brute_min_image, random_structure};
    use crate::geometry::{wrap_into_cell, z_rotation, Lattice, Vec3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_dmae(a: &Structure, b: &Structure) -> f64 {
        let n = a.len();
        let mut t = 0.0;
        for i in 0..n {
            for j in 0..n {
                let da = if i == j {
                    0.0
                } else {
                    brute_min_image(&a.lattice, &a.positions[i], &a.positions[j])
                };
                let db = if i == j {
                    0.0
                } else {
                    brute_min_image(&b.lattice, &b.positions[i], &b.positions[j])
                };
                t += (da - db).abs();
            }
        }
        t / (n * n) as f64
    }

    fn perturbed(rng: &mut ChaCha8Rng, s: &Structure, amp: f64) -> Structure {
        s.with_positions(
            s.positions
                .iter()
                .map(|p| {
                    p + Vec3::new(
                        rng.gen_range(-amp..amp),
                        rng.gen_range(-amp..amp),
                        rng.gen_range(-amp..amp),
                    )
                })
                .collect(),
        )
    }

    #[test]
    fn two_atom_arithmetic() {
        let lat = Lattice::slab([[30.0, 0.0, 0.0], [0.0, 30.0, 0.0], [0.0, 0.0, 30.0]]).unwrap();
        let a = Structure::new(
            "a",
            vec![8, 8],
            vec![Vec3::new(10.0, 10.0, 10.0), Vec3::new(12.0, 10.0, 10.0)],
            vec![false; 2],
            vec![false; 2],
            lat,
        )
        .unwrap();
        let mut b = a.clone();
        b.positions[1].x += 0.1;
        assert!((dmae(&a, &b).unwrap() - 0.05).abs() < 1e-12);
        assert_eq!(dmae(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn boundary_crossing_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let a = wrap_into_cell(&random_structure(&mut rng, 10));
            let b = wrap_into_cell(&perturbed(&mut rng, &a, 1.5));
            assert!((dmae(&a, &b).unwrap() - brute_dmae(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_systems_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_structure(&mut rng, 6);
        let b = random_structure(&mut rng, 7);
        assert!(matches!(dmae(&a, &b), Err(Error::Mismatch(_))));
    }

    #[test]
    fn success_ratio_cases() {
        assert_eq!(success_ratio(&[0.05, 0.2, 0.08], 0.1).unwrap(), 2.0 / 3.0);
        assert_eq!(success_ratio(&[0.0; 5], 0.1).unwrap(), 1.0);
        assert!(success_ratio(&[], 0.1).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let errs: Vec<f64> = (0..100_000).map(|_| rng.gen::<f64>()).collect();
        let eta = success_ratio(&errs, 0.1).unwrap();
        assert!((eta - 0.1).abs() < 0.01);
    }

    #[test]
    fn report_summary() {
        let r = EvalReport::new(vec![
            EvalEntry {
                id: "a".into(),
                dmae: 0.1,
                label: "O".into(),
            },
            EvalEntry {
                id: "b".into(),
                dmae: 0.3,
                label: "OH".into(),
            },
            EvalEntry {
                id: "c".into(),
                dmae: 0.2,
                label: "O".into(),
            },
        ]);
        let s = r.summary();
        assert!((s.mean_dmae.unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(s.p50, Some(0.2));
        assert_eq!(s.counts_by_label["O"], 2);
        assert_eq!(EvalReport::default().summary().mean_dmae, None);
    }

    proptest! {
        #[test]
        fn dmae_invariances(seed in 0u64..1000, angle in 0.0f64..6.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_structure(&mut rng, 8);
            let b = perturbed(&mut rng, &a, 0.5);
            let d = dmae(&a, &b).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert!((d - dmae(&b, &a).unwrap()).abs() < 1e-14);
            let perm: Vec<usize> = (0..8).rev().collect();
            prop_assert!((d - dmae(&a.permuted(&perm), &b.permuted(&perm)).unwrap()).abs() < 1e-12);
            prop_assert!((d - dmae(&wrap_into_cell(&a), &wrap_into_cell(&b)).unwrap()).abs() < 1e-10);
            let shift = a.lattice.vector(0) - a.lattice.vector(1) * 2.0;
            prop_assert!((d - dmae(&a.translated(&shift), &b.translated(&shift)).unwrap()).abs() < 1e-10);
            let r = z_rotation(angle);
            prop_assert!((d - dmae(&a.rotated(&r).unwrap(), &b.rotated(&r).unwrap()).unwrap()).abs() < 1e-10);
        }
    }
}
