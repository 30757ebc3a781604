//! Synthetic surrogate-oracle datasets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::oracle::{oracle_relax, SurrogateOracle};
use super::sites::{enumerate_sites, place_adsorbate, AdsorbateTemplate, AdsorptionSite};
use super::slab::{build_slab, Facet, SlabSpec, FCC_LATTICE_CONSTANTS};
use crate::error::{Error, Result};
use crate::geometry::{Lattice, Structure, StructurePair, Vec3};
use crate::train::{clean_dataset, DEFAULT_MAX_DMAE, DEFAULT_MIN_DMAE};

pub const PLACEMENT_HEIGHT: f64 = 1.5;

/// `count` 2×2 three-layer slabs over the built-in metals: pure metals
/// and random binary alloys, alternating (111) and (100).
pub fn desk_surfaces(count: usize, seed: u64) -> Result<Vec<SlabSpec>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let metals: Vec<u32> = FCC_LATTICE_CONSTANTS.iter().map(|&(z, _)| z).collect();
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let facet = if k % 2 == 0 { Facet::Fcc111 } else { Facet::Fcc100 };
        let species = if k % 3 == 0 {
            vec![metals[rng.gen_range(0..metals.len())]]
        } else {
            let pick: Vec<u32> = metals.choose_multiple(&mut rng, 2).copied().collect();
            let mut pattern: Vec<u32> = (0..12).map(|i| pick[i % 2]).collect();
            pattern.shuffle(&mut rng);
            pattern
        };
        let mut spec = SlabSpec::new("", facet, (2, 2), species)?;
        let mut symbols: Vec<u32> = spec.species.clone();
        symbols.sort();
        symbols.dedup();
        let name: String = symbols
            .iter()
            .map(|&z| crate::elements::symbol(z).unwrap_or("X"))
            .collect();
        spec.id = format!("s{k:03}-{name}-{}", facet.label());
        out.push(spec);
    }
    Ok(out)
}

/// Build and oracle-relax a clean slab.
pub fn relaxed_slab(spec: &SlabSpec, oracle: &SurrogateOracle) -> Result<(Structure, Structure)> {
    let ideal = build_slab(spec)?;
    let relaxed = oracle_relax(&ideal, oracle)?.structure;
    Ok((ideal, relaxed))
}

/// Move a site found on `ideal` with its anchors onto `relaxed`.
pub fn follow_site(site: &AdsorptionSite, ideal: &Structure, relaxed: &Structure) -> AdsorptionSite {
    let mut shift = Vec3::zeros();
    for &a in &site.anchors {
        shift += ideal
            .lattice
            .mic_displacement(&ideal.positions[a], &relaxed.positions[a]);
    }
    let mut out = site.clone();
    if !site.anchors.is_empty() {
        out.position += shift / site.anchors.len() as f64;
    }
    out
}

/// Isolated adsorbate in a 20 Å box, oracle-relaxed.
pub fn gas_reference(template: &AdsorbateTemplate, oracle: &SurrogateOracle) -> Result<Structure> {
    let lattice = Lattice::slab([[20.0, 0.0, 0.0], [0.0, 20.0, 0.0], [0.0, 0.0, 20.0]])?;
    let origin = template.positions[template.anchor];
    let centre = Vec3::new(10.0, 10.0, 10.0);
    let n = template.len();
    let s = Structure::new(
        format!("gas-{}", template.name),
        template.atomic_numbers.clone(),
        template.positions.iter().map(|p| centre + (p - origin)).collect(),
        vec![false; n],
        vec![true; n],
        lattice,
    )?;
    Ok(oracle_relax(&s, oracle)?.structure)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSettings {
    pub height: f64,
    /// Uniform in-plane offset of the initial placement (Å).
    pub lateral_jitter: f64,
    /// Keep at most this many sites per surface (random subset).
    pub max_sites: Option<usize>,
    pub min_dmae: f64,
    pub max_dmae: f64,
}

impl Default for SyntheticSettings {
    fn default() -> Self {
        SyntheticSettings {
            height: PLACEMENT_HEIGHT,
            lateral_jitter: 0.0,
            max_sites: None,
            min_dmae: DEFAULT_MIN_DMAE,
            max_dmae: DEFAULT_MAX_DMAE,
        }
    }
}

/// Placement on every (site, adsorbate) of every surface, relaxed by the
/// oracle and cleaned.
pub fn make_synthetic_dataset(
    surfaces: &[SlabSpec],
    adsorbates: &[AdsorbateTemplate],
    oracle: &SurrogateOracle,
    seed: u64,
    settings: &SyntheticSettings,
) -> Result<Vec<StructurePair>> {
    if adsorbates.is_empty() {
        return Err(Error::InvalidArgument("no adsorbate templates".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for spec in surfaces {
        let (ideal, slab) = relaxed_slab(spec, oracle)?;
        let mut sites = enumerate_sites(&ideal)?;
        if let Some(k) = settings.max_sites {
            sites.shuffle(&mut rng);
            sites.truncate(k);
        }
        for (si, site) in sites.iter().enumerate() {
            let site = follow_site(site, &ideal, &slab);
            for ads in adsorbates {
                let mut s = site.clone();
                if settings.lateral_jitter > 0.0 {
                    let j = settings.lateral_jitter;
                    s.position += Vec3::new(rng.gen_range(-j..=j), rng.gen_range(-j..=j), 0.0);
                }
                let mut initial = place_adsorbate(&slab, &s, ads, settings.height)?;
                initial.id = format!("{}-{}-{}{si:02}", spec.id, ads.name, site.kind.label());
                let relaxed = oracle_relax(&initial, oracle)?;
                let mut relaxed = relaxed.structure;
                relaxed.id = initial.id.clone();
                pairs.push(StructurePair::new(
                    initial,
                    relaxed,
                    ads.name.clone(),
                    spec.facet.label(),
                )?);
            }
        }
    }
    clean_dataset(pairs, settings.min_dmae, settings.max_dmae)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::dmae;

    #[test]
    fn desk_surfaces_are_deterministic_and_varied() {
        let a = desk_surfaces(6, 1).unwrap();
        assert_eq!(a, desk_surfaces(6, 1).unwrap());
        let comps: std::collections::BTreeSet<String> = a.iter().map(|s| s.id[5..].to_string()).collect();
        assert!(comps.len() >= 3);
        for s in &a {
            assert_eq!(build_slab(s).unwrap().len(), 12);
        }
    }

    #[test]
    fn gas_hydroxyl_keeps_bond() {
        let oracle = SurrogateOracle::default();
        let g = gas_reference(&AdsorbateTemplate::hydroxyl(), &oracle).unwrap();
        let d = g.lattice.mic_distance(&g.positions[0], &g.positions[1]);
        assert!((d - 0.97).abs() < 0.01, "{d}");
    }

    #[test]
    fn synthetic_pairs_are_valid_and_reproducible() {
        let oracle = SurrogateOracle::default();
        let surfaces = desk_surfaces(2, 3).unwrap();
        let ads = [AdsorbateTemplate::atomic_oxygen(), AdsorbateTemplate::hydroxyl()];
        let settings = SyntheticSettings {
            max_sites: Some(4),
            lateral_jitter: 0.2,
            ..SyntheticSettings::default()
        };
        let pairs = make_synthetic_dataset(&surfaces, &ads, &oracle, 5, &settings).unwrap();
        assert!(!pairs.is_empty() && pairs.len() <= 2 * 4 * 2);
        for p in &pairs {
            p.validate().unwrap();
            let d = dmae(&p.initial, &p.relaxed).unwrap();
            assert!((DEFAULT_MIN_DMAE..=DEFAULT_MAX_DMAE).contains(&d));
            assert_eq!(
                p.initial.adsorbate.iter().filter(|&&a| a).count(),
                if p.adsorbate_label == "O" { 1 } else { 2 }
            );
            let (_, f) = oracle.energy_forces(&p.relaxed).unwrap();
            assert!(oracle.max_free_force(&p.relaxed, &f) < oracle.relax.force_tol);
        }
        assert_eq!(
            pairs,
            make_synthetic_dataset(&surfaces, &ads, &oracle, 5, &settings).unwrap()
        );
    }
}
