//! Slab building, adsorption sites, the surrogate oracle and screening.

pub mod dataset;
pub mod oracle;
pub mod screen;
pub mod sites;
pub mod slab;

pub use dataset::{
    desk_surfaces, follow_site, gas_reference, make_synthetic_dataset, relaxed_slab, SyntheticSettings,
    PLACEMENT_HEIGHT,
};
pub use oracle::{adsorption_energy, oracle_relax, Morse, PairOverride, RelaxResult, RelaxSettings, SurrogateOracle};
pub use screen::{
    best_site, save_candidates_csv, screen, verify_offset, write_candidates_csv, Candidate, ScreenConfig, ScreenResult,
    CANDIDATE_COLUMNS,
};
pub use sites::{enumerate_sites, place_adsorbate, AdsorbateTemplate, AdsorptionSite, SiteKind};
pub use slab::{build_slab, top_layer, Facet, SlabSpec};
