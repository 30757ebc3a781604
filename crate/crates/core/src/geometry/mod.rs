//! Periodic-cell arithmetic for slab structures.
//!
//! Positions are Cartesian (Å) row vectors; the cell stores the lattice
//! vectors a, b, c as rows, so `cart = frac · cell`. Slabs are periodic
//! along a and b only, with vacuum along c.

mod neighbors;
pub mod xyz;

pub use neighbors::{build_neighbor_multigraph, Edge, NeighborGraph};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const DET_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    cell: Matrix3<f64>,
    periodic: [bool; 3],
    /// (cellᵀ)⁻¹, maps a Cartesian column vector to fractional coordinates.
    to_frac: Matrix3<f64>,
}

impl Lattice {
    /// `rows` are the lattice vectors a, b, c.
    pub fn new(rows: [[f64; 3]; 3], periodic: [bool; 3]) -> Result<Self> {
        let cell = Matrix3::from_fn(|r, c| rows[r][c]);
        Self::from_matrix(cell, periodic)
    }

    pub fn from_matrix(cell: Matrix3<f64>, periodic: [bool; 3]) -> Result<Self> {
        let det = cell.determinant();
        if !det.is_finite() || det.abs() <= DET_TOL {
            return Err(Error::DegenerateLattice(det.abs()));
        }
        let to_frac = cell
            .transpose()
            .try_inverse()
            .ok_or(Error::DegenerateLattice(det.abs()))?;
        Ok(Lattice {
            cell,
            periodic,
            to_frac,
        })
    }

    /// Slab lattice periodic along a and b.
    pub fn slab(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::new(rows, [true, true, false])
    }

    pub fn cell(&self) -> &Matrix3<f64> {
        &self.cell
    }

    pub fn periodic(&self) -> [bool; 3] {
        self.periodic
    }

    pub fn vector(&self, axis: usize) -> Vec3 {
        self.cell.row(axis).transpose()
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.cell[(r, c)];
            }
        }
        out
    }

    pub fn to_frac(&self, cart: &Vec3) -> Vec3 {
        self.to_frac * cart
    }

    pub fn to_cart(&self, frac: &Vec3) -> Vec3 {
        self.cell.transpose() * frac
    }

    /// Cartesian translation for integer image shift (k1, k2, k3).
    pub fn shift_vector(&self, shift: [i32; 3]) -> Vec3 {
        self.to_cart(&Vec3::new(shift[0] as f64, shift[1] as f64, shift[2] as f64))
    }

    /// Minimum-image displacement `to − from`.
    ///
    /// Fractional components along periodic axes are reduced with
    /// round-half-to-even, then the ±1 in-plane neighbours of that image are
    /// scanned so the shortest vector is returned even for oblique cells.
    pub fn mic_displacement(&self, from: &Vec3, to: &Vec3) -> Vec3 {
        let mut f = self.to_frac(&(to - from));
        for axis in 0..3 {
            if self.periodic[axis] {
                f[axis] -= f[axis].round_ties_even();
            }
        }
        let base = self.to_cart(&f);
        let mut best = base;
        let mut best_norm = base.norm_squared();
        let range = |axis: usize| if self.periodic[axis] { -1..=1 } else { 0..=0 };
        for k1 in range(0) {
            for k2 in range(1) {
                if k1 == 0 && k2 == 0 {
                    continue;
                }
                let cand = base + self.shift_vector([k1, k2, 0]);
                let n = cand.norm_squared();
                if n < best_norm {
                    best_norm = n;
                    best = cand;
                }
            }
        }
        best
    }

    pub fn mic_distance(&self, from: &Vec3, to: &Vec3) -> f64 {
        self.mic_displacement(from, to).norm()
    }

    /// Perpendicular height of the cell along `axis` (distance between the
    /// two lattice planes spanned by the other vectors).
    pub fn height(&self, axis: usize) -> f64 {
        let a = self.vector((axis + 1) % 3);
        let b = self.vector((axis + 2) % 3);
        let normal = a.cross(&b);
        self.cell.determinant().abs() / normal.norm()
    }

    /// Apply a rotation to every lattice vector.
    pub fn rotated(&self, rotation: &Matrix3<f64>) -> Result<Self> {
        let cell = (rotation * self.cell.transpose()).transpose();
        Self::from_matrix(cell, self.periodic)
    }
}

impl Serialize for Lattice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        (self.rows(), self.periodic).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Lattice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (rows, periodic) = <([[f64; 3]; 3], [bool; 3])>::deserialize(d)?;
        Lattice::new(rows, periodic).map_err(serde::de::Error::custom)
    }
}

pub fn cart_to_frac(positions: &[Vec3], lattice: &Lattice) -> Vec<Vec3> {
    positions.iter().map(|p| lattice.to_frac(p)).collect()
}

pub fn frac_to_cart(frac: &[Vec3], lattice: &Lattice) -> Vec<Vec3> {
    frac.iter().map(|f| lattice.to_cart(f)).collect()
}

/// Wrap a single position into the cell along periodic axes.
///
/// Integer lattice shifts are subtracted in Cartesian space, so positions
/// that are already inside the cell come back bit-identical.
pub fn wrap_position(p: &Vec3, lattice: &Lattice) -> Vec3 {
    let periodic = lattice.periodic();
    let mut out = *p;
    // a second pass catches fractions that land on exactly 1.0 after rounding
    for _ in 0..2 {
        let f = lattice.to_frac(&out);
        let mut shift = [0i32; 3];
        for axis in 0..3 {
            if periodic[axis] && !(0.0..1.0).contains(&f[axis]) {
                shift[axis] = f[axis].floor() as i32;
            }
        }
        if shift == [0, 0, 0] {
            break;
        }
        out -= lattice.shift_vector(shift);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    pub id: String,
    pub atomic_numbers: Vec<u32>,
    pub positions: Vec<Vec3>,
    pub fixed: Vec<bool>,
    pub adsorbate: Vec<bool>,
    pub lattice: Lattice,
}

impl Structure {
    pub fn new(
        id: impl Into<String>,
        atomic_numbers: Vec<u32>,
        positions: Vec<Vec3>,
        fixed: Vec<bool>,
        adsorbate: Vec<bool>,
        lattice: Lattice,
    ) -> Result<Self> {
        let s = Structure {
            id: id.into(),
            atomic_numbers,
            positions,
            fixed,
            adsorbate,
            lattice,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.atomic_numbers.len();
        if n == 0 {
            return Err(Error::InvalidStructure("structure has no atoms".into()));
        }
        if self.positions.len() != n || self.fixed.len() != n || self.adsorbate.len() != n {
            return Err(Error::InvalidStructure(format!(
                "array lengths differ (numbers {n}, positions {}, fixed {}, adsorbate {})",
                self.positions.len(),
                self.fixed.len(),
                self.adsorbate.len()
            )));
        }
        if self.atomic_numbers.contains(&0) {
            return Err(Error::InvalidStructure("atomic number 0".into()));
        }
        if self.positions.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidStructure("non-finite position".into()));
        }
        if let Some(i) = (0..n).find(|&i| self.fixed[i] && self.adsorbate[i]) {
            return Err(Error::InvalidStructure(format!("adsorbate atom {i} is fixed")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.atomic_numbers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atomic_numbers.is_empty()
    }

    pub fn has_adsorbate(&self) -> bool {
        self.adsorbate.iter().any(|&a| a)
    }

    pub fn free_count(&self) -> usize {
        self.fixed.iter().filter(|&&f| !f).count()
    }

    pub fn with_positions(&self, positions: Vec<Vec3>) -> Structure {
        Structure {
            positions,
            ..self.clone()
        }
    }

    pub fn frac_positions(&self) -> Vec<Vec3> {
        cart_to_frac(&self.positions, &self.lattice)
    }

    /// Same atoms, masks and cell (positions may differ).
    pub fn same_system(&self, other: &Structure) -> bool {
        self.atomic_numbers == other.atomic_numbers
            && self.fixed == other.fixed
            && self.adsorbate == other.adsorbate
            && self.lattice == other.lattice
    }

    /// Apply a rotation to positions and lattice jointly.
    pub fn rotated(&self, rotation: &Matrix3<f64>) -> Result<Structure> {
        Ok(Structure {
            positions: self.positions.iter().map(|p| rotation * p).collect(),
            lattice: self.lattice.rotated(rotation)?,
            ..self.clone()
        })
    }

    /// Reorder atoms so that new index `k` holds old atom `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Structure {
        Structure {
            id: self.id.clone(),
            atomic_numbers: perm.iter().map(|&i| self.atomic_numbers[i]).collect(),
            positions: perm.iter().map(|&i| self.positions[i]).collect(),
            fixed: perm.iter().map(|&i| self.fixed[i]).collect(),
            adsorbate: perm.iter().map(|&i| self.adsorbate[i]).collect(),
            lattice: self.lattice.clone(),
        }
    }

    pub fn translated(&self, shift: &Vec3) -> Structure {
        self.with_positions(self.positions.iter().map(|p| p + shift).collect())
    }
}

/// Fractional coordinates of the output lie in [0, 1) along periodic axes.
pub fn wrap_into_cell(structure: &Structure) -> Structure {
    structure.with_positions(
        structure
            .positions
            .iter()
            .map(|p| wrap_position(p, &structure.lattice))
            .collect(),
    )
}

pub fn mic_displacement(from: &Vec3, to: &Vec3, lattice: &Lattice) -> Vec3 {
    lattice.mic_displacement(from, to)
}

pub fn min_image_distance_matrix(structure: &Structure) -> Vec<Vec<f64>> {
    let n = structure.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = structure
                .lattice
                .mic_distance(&structure.positions[i], &structure.positions[j]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Fixed atoms may differ by at most this much between the members of a pair.
pub const FIXED_ATOM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct StructurePair {
    /// Initial guess (the bridge endpoint y).
    pub initial: Structure,
    /// Relaxed geometry (the bridge start x).
    pub relaxed: Structure,
    pub adsorbate_label: String,
    pub facet: String,
}

impl StructurePair {
    pub fn new(
        initial: Structure,
        relaxed: Structure,
        adsorbate_label: impl Into<String>,
        facet: impl Into<String>,
    ) -> Result<Self> {
        let pair = StructurePair {
            initial,
            relaxed,
            adsorbate_label: adsorbate_label.into(),
            facet: facet.into(),
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn id(&self) -> &str {
        &self.initial.id
    }

    pub fn validate(&self) -> Result<()> {
        self.initial.validate()?;
        self.relaxed.validate()?;
        if !self.initial.same_system(&self.relaxed) {
            return Err(Error::Mismatch(format!(
                "pair '{}': initial and relaxed differ in atoms, masks or lattice",
                self.initial.id
            )));
        }
        for i in 0..self.initial.len() {
            if self.initial.fixed[i] {
                let d = self.initial.positions[i] - self.relaxed.positions[i];
                if d.norm() > FIXED_ATOM_TOL {
                    return Err(Error::Mismatch(format!(
                        "pair '{}': fixed atom {i} moved by {:.3e} Å",
                        self.initial.id,
                        d.norm()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Minimum-image displacement y − x per atom.
    pub fn displacement(&self) -> Vec<Vec3> {
        let lat = &self.initial.lattice;
        self.relaxed
            .positions
            .iter()
            .zip(&self.initial.positions)
            .map(|(x, y)| lat.mic_displacement(x, y))
            .collect()
    }
}

/// Rotation about the z axis by `angle` radians.
pub fn z_rotation(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}
