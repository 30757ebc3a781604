//! Energy-window screening of surfaces.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{follow_site, gas_reference, relaxed_slab, PLACEMENT_HEIGHT};
use super::oracle::{adsorption_energy, oracle_relax, SurrogateOracle};
use super::sites::{enumerate_sites, place_adsorbate, AdsorbateTemplate, SiteKind};
use super::slab::SlabSpec;
use crate::bridge::{generate, BridgeSchedule, SamplerConfig};
use crate::error::{Error, Result};
use crate::geometry::Structure;
use crate::nn::DenoiserModel;
use crate::outlier::{detect, run_heuristics, HeuristicSettings, DEFAULT_CONFIDENCE_THRESHOLD};
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenConfig {
    pub adsorbate: AdsorbateTemplate,
    /// Open interval (lo, hi) on the offset from the reference (eV).
    pub window: (f64, f64),
    pub height: f64,
    pub confidence_threshold: f64,
    pub heuristics: HeuristicSettings,
    pub sampler: SamplerConfig,
    pub jobs: usize,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        ScreenConfig {
            adsorbate: AdsorbateTemplate::hydroxyl(),
            window: (-0.2, 0.4),
            height: PLACEMENT_HEIGHT,
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            heuristics: HeuristicSettings::default(),
            sampler: SamplerConfig::default(),
            jobs: 1,
        }
    }
}

impl ScreenConfig {
    /// Midpoint of the window; a half-open window uses its finite bound and
    /// an unbounded one uses 0.
    pub fn window_center(&self) -> f64 {
        let (lo, hi) = self.window;
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => 0.0,
        }
    }

    pub fn in_window(&self, offset: f64) -> bool {
        offset > self.window.0 && offset < self.window.1
    }
}

/// Best site of one surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub surface_id: String,
    pub composition: String,
    pub facet: String,
    pub site_index: usize,
    pub site_kind: SiteKind,
    /// ΔE = E(system) − E(slab) − E(gas), eV.
    pub adsorption_energy: f64,
    /// ΔE − ΔE(reference), eV.
    pub offset: f64,
    /// Flagged by triage (and therefore oracle-refined).
    pub outlier: bool,
    pub sites_evaluated: usize,
    pub sites_refined: usize,
    #[serde(skip)]
    pub structure: Option<Structure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenResult {
    pub reference_id: String,
    pub reference_energy: f64,
    /// Every surface in input order.
    pub evaluated: Vec<Candidate>,
    /// Inside the window, sorted by |offset − window centre|.
    pub ranked: Vec<Candidate>,
}

/// Per-site generation, triage and energy; returns the lowest-energy site.
pub fn best_site(
    spec: &SlabSpec,
    model: &DenoiserModel,
    schedule: &BridgeSchedule,
    classifier: Option<&DenoiserModel>,
    oracle: &SurrogateOracle,
    gas: &Structure,
    config: &ScreenConfig,
) -> Result<Candidate> {
    let (ideal, slab) = relaxed_slab(spec, oracle)?;
    let sites = enumerate_sites(&ideal)?;
    let mut best: Option<Candidate> = None;
    let mut refined = 0;
    for (k, site) in sites.iter().enumerate() {
        let site = follow_site(site, &ideal, &slab);
        let mut initial = place_adsorbate(&slab, &site, &config.adsorbate, config.height)?;
        initial.id = format!("{}-{}{k:02}", spec.id, site.kind.label());
        let generated = generate(&initial, model, schedule, &config.sampler)?;
        let outlier = match classifier {
            Some(c) => detect(&generated, c, config.confidence_threshold, &initial, &config.heuristics)?.is_outlier,
            None => run_heuristics(&generated, &initial, &config.heuristics)?.any(),
        };
        let final_structure = if outlier {
            refined += 1;
            oracle_relax(&generated, oracle)?.structure
        } else {
            generated
        };
        let e = adsorption_energy(&final_structure, &slab, gas, oracle)?;
        if best.as_ref().is_none_or(|b| e < b.adsorption_energy) {
            best = Some(Candidate {
                surface_id: spec.id.clone(),
                composition: spec.composition(),
                facet: spec.facet.label().to_string(),
                site_index: k,
                site_kind: site.kind,
                adsorption_energy: e,
                offset: 0.0,
                outlier,
                sites_evaluated: 0,
                sites_refined: 0,
                structure: Some(final_structure),
            });
        }
    }
    let mut best = best.ok_or_else(|| Error::Sites(format!("no sites on {}", spec.id)))?;
    best.sites_evaluated = sites.len();
    best.sites_refined = refined;
    Ok(best)
}

pub fn screen(
    surfaces: &[SlabSpec],
    reference: &SlabSpec,
    model: &DenoiserModel,
    schedule: &BridgeSchedule,
    classifier: Option<&DenoiserModel>,
    oracle: &SurrogateOracle,
    config: &ScreenConfig,
) -> Result<ScreenResult> {
    if !(config.window.0 < config.window.1) {
        return Err(Error::InvalidArgument(format!("empty window {:?}", config.window)));
    }
    let gas = gas_reference(&config.adsorbate, oracle)?;
    let reference_best = best_site(reference, model, schedule, classifier, oracle, &gas, config)?;
    let reference_energy = reference_best.adsorption_energy;
    let mut evaluated = par::map(surfaces, config.jobs, |_, spec| {
        best_site(spec, model, schedule, classifier, oracle, &gas, config)
    })?;
    for c in &mut evaluated {
        c.offset = c.adsorption_energy - reference_energy;
    }
    let center = config.window_center();
    let mut ranked: Vec<Candidate> = evaluated
        .iter()
        .filter(|c| config.in_window(c.offset))
        .cloned()
        .collect();
    ranked.sort_by(|a, b| {
        (a.offset - center)
            .abs()
            .total_cmp(&(b.offset - center).abs())
            .then_with(|| a.surface_id.cmp(&b.surface_id))
    });
    Ok(ScreenResult {
        reference_id: reference.id.clone(),
        reference_energy,
        evaluated,
        ranked,
    })
}

pub const CANDIDATE_COLUMNS: [&str; 11] = [
    "rank",
    "surface_id",
    "composition",
    "facet",
    "site_index",
    "site_kind",
    "adsorption_energy_ev",
    "offset_ev",
    "outlier",
    "sites_evaluated",
    "sites_refined",
];

pub fn write_candidates_csv<W: std::io::Write>(candidates: &[Candidate], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CANDIDATE_COLUMNS)?;
    for (rank, c) in candidates.iter().enumerate() {
        w.write_record([
            (rank + 1).to_string(),
            c.surface_id.clone(),
            c.composition.clone(),
            c.facet.clone(),
            c.site_index.to_string(),
            c.site_kind.label().to_string(),
            format!("{:.6}", c.adsorption_energy),
            format!("{:.6}", c.offset),
            c.outlier.to_string(),
            c.sites_evaluated.to_string(),
            c.sites_refined.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_candidates_csv(candidates: &[Candidate], path: impl AsRef<Path>) -> Result<()> {
    write_candidates_csv(candidates, std::fs::File::create(path)?)
}

/// Oracle re-verification: relax the candidate and the reference best
/// structures and recompute the offset.
pub fn verify_offset(
    candidate: &Candidate,
    spec: &SlabSpec,
    reference: &Candidate,
    reference_spec: &SlabSpec,
    oracle: &SurrogateOracle,
    adsorbate: &AdsorbateTemplate,
) -> Result<f64> {
    let gas = gas_reference(adsorbate, oracle)?;
    let energy = |c: &Candidate, s: &SlabSpec| -> Result<f64> {
        let structure = c
            .structure
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("candidate {} has no structure", c.surface_id)))?;
        let relaxed = oracle_relax(structure, oracle)?.structure;
        let (_, slab) = relaxed_slab(s, oracle)?;
        adsorption_energy(&relaxed, &slab, &gas, oracle)
    };
    Ok(energy(candidate, spec)? - energy(reference, reference_spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{MtMode, ZeroDenoiser};
    use crate::nn::DenoiserConfig;
    use crate::screening::dataset::desk_surfaces;

    struct Fixture {
        model: DenoiserModel,
        schedule: BridgeSchedule,
    }

    fn fixture() -> Fixture {
        let cfg = DenoiserConfig {
            hidden: 8,
            layers: 1,
            num_rbf: 6,
            n_frequencies: 2,
            time_embed_dim: 4,
            ..DenoiserConfig::default()
        };
        Fixture {
            model: DenoiserModel::new(cfg, 0).unwrap(),
            schedule: BridgeSchedule::with_max_var(100, MtMode::Linear, 0.05).unwrap(),
        }
    }

    #[test]
    fn self_reference_has_zero_offset() {
        let f = fixture();
        let surfaces = desk_surfaces(3, 2).unwrap();
        let config = ScreenConfig {
            window: (-0.1, 0.1),
            ..ScreenConfig::default()
        };
        let r = screen(
            &surfaces,
            &surfaces[1],
            &f.model,
            &f.schedule,
            None,
            &SurrogateOracle::default(),
            &config,
        )
        .unwrap();
        assert_eq!(r.evaluated[1].offset, 0.0);
        assert!(r.ranked.iter().any(|c| c.surface_id == surfaces[1].id));
    }

    #[test]
    fn unbounded_window_keeps_all_and_ranks() {
        let f = fixture();
        let surfaces = desk_surfaces(4, 3).unwrap();
        let config = ScreenConfig {
            window: (f64::NEG_INFINITY, f64::INFINITY),
            adsorbate: AdsorbateTemplate::atomic_oxygen(),
            ..ScreenConfig::default()
        };
        let oracle = SurrogateOracle::default();
        let r = screen(&surfaces, &surfaces[0], &f.model, &f.schedule, None, &oracle, &config).unwrap();
        assert_eq!(r.ranked.len(), 4);
        for w in r.ranked.windows(2) {
            assert!(w[0].offset.abs() <= w[1].offset.abs());
        }
        let parallel = screen(
            &surfaces,
            &surfaces[0],
            &f.model,
            &f.schedule,
            None,
            &oracle,
            &ScreenConfig { jobs: 3, ..config },
        )
        .unwrap();
        assert_eq!(parallel, r);
        let mut buf = Vec::new();
        write_candidates_csv(&r.ranked, &mut buf).unwrap();
        let mut rd = csv::Reader::from_reader(buf.as_slice());
        assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), CANDIDATE_COLUMNS);
        assert_eq!(rd.records().count(), 4);
    }

    #[test]
    fn best_site_is_lowest_energy() {
        let surfaces = desk_surfaces(1, 4).unwrap();
        let oracle = SurrogateOracle::default();
        let config = ScreenConfig::default();
        let gas = gas_reference(&config.adsorbate, &oracle).unwrap();
        let f = fixture();
        let best = best_site(&surfaces[0], &f.model, &f.schedule, None, &oracle, &gas, &config).unwrap();
        assert!(best.adsorption_energy < 0.0, "{}", best.adsorption_energy);
        assert!(best.sites_evaluated >= 3);
        // the zero denoiser leaves every placement in place; refinement of
        // flagged ones can only lower the energy
        let z = best_site_with(&surfaces[0], &ZeroDenoiser, &f.schedule, &oracle, &gas, &config);
        assert!(z.is_finite());
    }

    fn best_site_with(
        spec: &SlabSpec,
        d: &ZeroDenoiser,
        schedule: &BridgeSchedule,
        oracle: &SurrogateOracle,
        gas: &Structure,
        config: &ScreenConfig,
    ) -> f64 {
        let (ideal, slab) = relaxed_slab(spec, oracle).unwrap();
        enumerate_sites(&ideal)
            .unwrap()
            .iter()
            .map(|s| {
                let site = follow_site(s, &ideal, &slab);
                let init = place_adsorbate(&slab, &site, &config.adsorbate, config.height).unwrap();
                let g = generate(&init, d, schedule, &config.sampler).unwrap();
                adsorption_energy(&g, &slab, gas, oracle).unwrap()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn window_helpers() {
        let c = ScreenConfig::default();
        assert!((c.window_center() - 0.1).abs() < 1e-15);
        assert!(c.in_window(0.0) && !c.in_window(0.4) && !c.in_window(-0.2));
    }
}
