use serde::{Deserialize, Serialize};

use crate::elements;
use crate::error::{Error, Result};
use crate::geometry::{wrap_into_cell, Lattice, Structure, Vec3};

/// fcc lattice constants (Å) of the metals the slab builder knows.
pub const FCC_LATTICE_CONSTANTS: [(u32, f64); 10] = [
    (13, 4.05),
    (27, 3.54),
    (28, 3.52),
    (29, 3.61),
    (45, 3.80),
    (46, 3.89),
    (47, 4.09),
    (77, 3.84),
    (78, 3.92),
    (79, 4.08),
];

pub fn fcc_lattice_constant(z: u32) -> Option<f64> {
    FCC_LATTICE_CONSTANTS.iter().find(|(k, _)| *k == z).map(|(_, a)| *a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Facet {
    Fcc111,
    Fcc100,
}

impl Facet {
    pub fn label(&self) -> &'static str {
        match self {
            Facet::Fcc111 => "111",
            Facet::Fcc100 => "100",
        }
    }
}

impl std::str::FromStr for Facet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().trim_start_matches("fcc") {
            "111" => Ok(Facet::Fcc111),
            "100" => Ok(Facet::Fcc100),
            other => Err(Error::Config(format!("unknown facet '{other}'"))),
        }
    }
}

/// Recipe for a simple fcc-type slab.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabSpec {
    pub id: String,
    pub facet: Facet,
    /// Cubic lattice constant (Å).
    pub lattice_constant: f64,
    pub size: (usize, usize),
    pub layers: usize,
    pub fixed_layers: usize,
    pub vacuum: f64,
    /// Atomic numbers assigned cyclically over atoms (layer-major order).
    pub species: Vec<u32>,
}

impl SlabSpec {
    /// Three layers, bottom two fixed, 10 Å vacuum; lattice constant from
    /// the mean of the species' fcc constants.
    pub fn new(id: impl Into<String>, facet: Facet, size: (usize, usize), species: Vec<u32>) -> Result<Self> {
        if species.is_empty() {
            return Err(Error::InvalidArgument("slab needs at least one species".into()));
        }
        let mut total = 0.0;
        for &z in &species {
            total += fcc_lattice_constant(z)
                .ok_or_else(|| Error::InvalidArgument(format!("no fcc lattice constant for Z = {z}")))?;
        }
        Ok(SlabSpec {
            id: id.into(),
            facet,
            lattice_constant: total / species.len() as f64,
            size,
            layers: 3,
            fixed_layers: 2,
            vacuum: 10.0,
            species,
        })
    }

    /// Species labels joined, e.g. "Pt3Ni" style counts are not computed;
    /// this is the ordered symbol list.
    pub fn composition(&self) -> String {
        self.species
            .iter()
            .map(|&z| elements::symbol(z).unwrap_or("X"))
            .collect::<Vec<_>>()
            .join("")
    }
}

/// In-plane nearest-neighbour spacing and interlayer spacing.
pub fn facet_spacings(facet: Facet, a: f64) -> (f64, f64) {
    match facet {
        Facet::Fcc111 => (a / 2f64.sqrt(), a / 3f64.sqrt()),
        Facet::Fcc100 => (a / 2f64.sqrt(), a / 2.0),
    }
}

pub fn build_slab(spec: &SlabSpec) -> Result<Structure> {
    let (nx, ny) = spec.size;
    if nx == 0 || ny == 0 || spec.layers == 0 {
        return Err(Error::InvalidArgument("slab size and layer count must be >= 1".into()));
    }
    if spec.fixed_layers >= spec.layers {
        return Err(Error::InvalidArgument("at least the top layer must be free".into()));
    }
    if !(spec.lattice_constant > 0.0) || !(spec.vacuum >= 0.0) {
        return Err(Error::InvalidArgument(
            "lattice constant must be > 0 and vacuum >= 0".into(),
        ));
    }
    if spec.species.is_empty() {
        return Err(Error::InvalidArgument("slab needs at least one species".into()));
    }
    let (d, dz) = facet_spacings(spec.facet, spec.lattice_constant);
    let (a1, a2) = match spec.facet {
        Facet::Fcc111 => (Vec3::new(d, 0.0, 0.0), Vec3::new(0.5 * d, 0.5 * 3f64.sqrt() * d, 0.0)),
        Facet::Fcc100 => (Vec3::new(d, 0.0, 0.0), Vec3::new(0.0, d, 0.0)),
    };
    let thickness = dz * (spec.layers - 1) as f64;
    let height = thickness + spec.vacuum;
    let lattice = Lattice::slab([
        (a1 * nx as f64).into(),
        (a2 * ny as f64).into(),
        [0.0, 0.0, height.max(1.0)],
    ])?;
    let mut numbers = Vec::new();
    let mut positions = Vec::new();
    let mut fixed = Vec::new();
    for layer in 0..spec.layers {
        let offset = match spec.facet {
            Facet::Fcc111 => (a1 + a2) * ((layer % 3) as f64 / 3.0),
            Facet::Fcc100 => (a1 + a2) * ((layer % 2) as f64 / 2.0),
        };
        for i in 0..nx {
            for j in 0..ny {
                let k = numbers.len();
                numbers.push(spec.species[k % spec.species.len()]);
                positions.push(a1 * i as f64 + a2 * j as f64 + offset + Vec3::new(0.0, 0.0, dz * layer as f64));
                fixed.push(layer < spec.fixed_layers);
            }
        }
    }
    let n = numbers.len();
    let s = Structure::new(spec.id.clone(), numbers, positions, fixed, vec![false; n], lattice)?;
    Ok(wrap_into_cell(&s))
}

/// Indices of non-adsorbate atoms within `tol` of the highest one.
pub fn top_layer(slab: &Structure, tol: f64) -> Vec<usize> {
    let zmax = (0..slab.len())
        .filter(|&i| !slab.adsorbate[i])
        .map(|i| slab.positions[i].z)
        .fold(f64::NEG_INFINITY, f64::max);
    (0..slab.len())
        .filter(|&i| !slab.adsorbate[i] && slab.positions[i].z >= zmax - tol)
        .collect()
}
