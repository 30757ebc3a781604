//! Surrogate energy model: shifted-force Morse pairs under minimum-image
//! periodicity, plus a steepest-descent relaxer.
//!
//! Parameters are chosen so adsorption wells are of order 1 eV; they are
//! not fitted to any reference data.

use serde::{Deserialize, Serialize};

use super::slab::fcc_lattice_constant;
use crate::error::{Error, Result};
use crate::geometry::{wrap_position, Structure, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Morse {
    /// Well depth (eV).
    pub depth: f64,
    /// Equilibrium distance (Å).
    pub r0: f64,
    /// Stiffness (1/Å).
    pub alpha: f64,
}

impl Morse {
    pub fn energy(&self, r: f64) -> f64 {
        let e = (-self.alpha * (r - self.r0)).exp();
        self.depth * (e * e - 2.0 * e)
    }

    pub fn derivative(&self, r: f64) -> f64 {
        let e = (-self.alpha * (r - self.r0)).exp();
        2.0 * self.alpha * self.depth * (e - e * e)
    }

    /// Shifted-force form: energy and slope both vanish at `rc`.
    pub fn energy_sf(&self, r: f64, rc: f64) -> f64 {
        if r >= rc {
            return 0.0;
        }
        self.energy(r) - self.energy(rc) - (r - rc) * self.derivative(rc)
    }

    pub fn derivative_sf(&self, r: f64, rc: f64) -> f64 {
        if r >= rc {
            return 0.0;
        }
        self.derivative(r) - self.derivative(rc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairOverride {
    pub z1: u32,
    pub z2: u32,
    pub morse: Morse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxSettings {
    pub max_steps: usize,
    /// Largest per-atom force component norm at convergence (eV/Å).
    pub force_tol: f64,
    /// Initial step (Å per eV/Å).
    pub initial_step: f64,
    /// Cap on a single atom's move per step (Å).
    pub max_move: f64,
}

impl Default for RelaxSettings {
    fn default() -> Self {
        RelaxSettings {
            max_steps: 500,
            force_tol: 0.05,
            initial_step: 0.02,
            max_move: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateOracle {
    pub cutoff: f64,
    pub metal_metal_depth: f64,
    pub metal_metal_alpha: f64,
    /// Metal–oxygen well depth per metal (eV).
    pub metal_oxygen_depth: Vec<(u32, f64)>,
    pub metal_oxygen: Morse,
    pub metal_hydrogen: Morse,
    pub oxygen_hydrogen: Morse,
    pub fallback: Morse,
    pub overrides: Vec<PairOverride>,
    pub relax: RelaxSettings,
}

impl Default for SurrogateOracle {
    fn default() -> Self {
        SurrogateOracle {
            cutoff: 5.0,
            metal_metal_depth: 0.5,
            metal_metal_alpha: 1.6,
            metal_oxygen_depth: vec![
                (13, 1.6),
                (27, 1.45),
                (28, 1.4),
                (29, 1.1),
                (45, 1.3),
                (46, 1.0),
                (47, 0.7),
                (77, 1.2),
                (78, 1.05),
                (79, 0.6),
            ],
            metal_oxygen: Morse {
                depth: 1.0,
                r0: 2.0,
                alpha: 1.8,
            },
            metal_hydrogen: Morse {
                depth: 0.05,
                r0: 2.6,
                alpha: 1.2,
            },
            oxygen_hydrogen: Morse {
                depth: 4.6,
                r0: 0.97,
                alpha: 2.2,
            },
            fallback: Morse {
                depth: 0.05,
                r0: 3.0,
                alpha: 1.0,
            },
            overrides: Vec::new(),
            relax: RelaxSettings::default(),
        }
    }
}

fn is_metal(z: u32) -> bool {
    fcc_lattice_constant(z).is_some()
}

impl SurrogateOracle {
    pub fn pair(&self, z1: u32, z2: u32) -> Morse {
        if let Some(o) = self
            .overrides
            .iter()
            .find(|o| (o.z1 == z1 && o.z2 == z2) || (o.z1 == z2 && o.z2 == z1))
        {
            return o.morse;
        }
        let (a, b) = (z1.min(z2), z1.max(z2));
        match (is_metal(a), is_metal(b)) {
            (true, true) => {
                let nn = 0.5 * (fcc_lattice_constant(a).unwrap() + fcc_lattice_constant(b).unwrap()) / 2f64.sqrt();
                Morse {
                    depth: self.metal_metal_depth,
                    r0: nn,
                    alpha: self.metal_metal_alpha,
                }
            }
            (false, true) if a == 8 => Morse {
                depth: self
                    .metal_oxygen_depth
                    .iter()
                    .find(|(z, _)| *z == b)
                    .map(|(_, d)| *d)
                    .unwrap_or(self.metal_oxygen.depth),
                ..self.metal_oxygen
            },
            (false, true) if a == 1 => self.metal_hydrogen,
            _ if (a, b) == (1, 8) => self.oxygen_hydrogen,
            _ => self.fallback,
        }
    }

    /// Number of cell repeats along each periodic axis needed to see every
    /// image within the cutoff.
    fn image_range(&self, s: &Structure) -> [i32; 2] {
        let mut out = [0; 2];
        for (axis, o) in out.iter_mut().enumerate() {
            if s.lattice.periodic()[axis] {
                *o = (self.cutoff / s.lattice.height(axis)).ceil() as i32 + 1;
            }
        }
        out
    }

    /// Total energy (eV) and forces (eV/Å).
    pub fn energy_forces(&self, s: &Structure) -> Result<(f64, Vec<Vec3>)> {
        let n = s.len();
        let [r1, r2] = self.image_range(s);
        let mut shifts = Vec::new();
        for k1 in -r1..=r1 {
            for k2 in -r2..=r2 {
                shifts.push(s.lattice.shift_vector([k1, k2, 0]));
            }
        }
        let rc = self.cutoff;
        let mut energy = 0.0;
        let mut forces = vec![Vec3::zeros(); n];
        for i in 0..n {
            for j in i..n {
                let pot = self.pair(s.atomic_numbers[i], s.atomic_numbers[j]);
                let base = s.positions[j] - s.positions[i];
                for sv in &shifts {
                    let r = base + sv;
                    let d = r.norm();
                    if d >= rc {
                        continue;
                    }
                    if d < 1e-8 {
                        if i == j {
                            continue;
                        }
                        return Err(Error::CoincidentAtoms(i, j));
                    }
                    let (e, de) = (pot.energy_sf(d, rc), pot.derivative_sf(d, rc));
                    if i == j {
                        // each self-image pair is visited twice (±shift)
                        energy += 0.5 * e;
                        continue;
                    }
                    energy += e;
                    let f = r * (de / d);
                    forces[i] += f;
                    forces[j] -= f;
                }
            }
        }
        if !energy.is_finite() || forces.iter().any(|f| !f.iter().all(|v| v.is_finite())) {
            return Err(Error::OracleBlowUp);
        }
        Ok((energy, forces))
    }

    pub fn energy(&self, s: &Structure) -> Result<f64> {
        Ok(self.energy_forces(s)?.0)
    }

    /// Largest force norm on a free atom.
    pub fn max_free_force(&self, s: &Structure, forces: &[Vec3]) -> f64 {
        forces
            .iter()
            .zip(&s.fixed)
            .filter(|(_, &f)| !f)
            .map(|(f, _)| f.norm())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxResult {
    pub structure: Structure,
    /// Accepted steps.
    pub steps: usize,
    pub energy: f64,
    pub max_force: f64,
    pub converged: bool,
    /// Energy after every accepted step, starting with the input energy.
    pub trace: Vec<f64>,
}

/// Steepest descent on free atoms with an adaptive step: grow by 1.2 after
/// an accepted step, halve and retry after an energy increase.
pub fn oracle_relax(structure: &Structure, oracle: &SurrogateOracle) -> Result<RelaxResult> {
    let cfg = &oracle.relax;
    let mut current = structure.clone();
    let (mut energy, mut forces) = oracle.energy_forces(&current)?;
    let mut trace = vec![energy];
    let mut step = cfg.initial_step;
    let mut steps = 0;
    let mut attempts = 0;
    let mut fmax = oracle.max_free_force(&current, &forces);
    while fmax >= cfg.force_tol && steps < cfg.max_steps && attempts < 20 * cfg.max_steps.max(1) {
        attempts += 1;
        let scale = step.min(cfg.max_move / fmax);
        let trial = current.with_positions(
            current
                .positions
                .iter()
                .zip(&forces)
                .zip(&current.fixed)
                .map(|((p, f), &fixed)| {
                    if fixed {
                        *p
                    } else {
                        wrap_position(&(p + f * scale), &current.lattice)
                    }
                })
                .collect(),
        );
        let (e_new, f_new) = oracle.energy_forces(&trial)?;
        if e_new <= energy {
            current = trial;
            energy = e_new;
            forces = f_new;
            fmax = oracle.max_free_force(&current, &forces);
            trace.push(energy);
            steps += 1;
            step *= 1.2;
        } else {
            step *= 0.5;
            if step < 1e-12 {
                break;
            }
        }
    }
    Ok(RelaxResult {
        structure: current,
        steps,
        energy,
        max_force: fmax,
        converged: fmax < cfg.force_tol,
        trace,
    })
}

/// ΔE = E(system) − E(slab) − E(gas) from three single-point energies.
pub fn adsorption_energy(
    system: &Structure,
    slab: &Structure,
    adsorbate_gas: &Structure,
    oracle: &SurrogateOracle,
) -> Result<f64> {
    Ok(oracle.energy(system)? - oracle.energy(slab)? - oracle.energy(adsorbate_gas)?)
}
