//! Element symbols and covalent radii.

use crate::error::{Error, Result};

const SYMBOLS: [&str; 86] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",
    "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce",
    "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir",
    "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn",
];

// Covalent radii in Å from B. Cordero et al., "Covalent radii revisited",
// Dalton Trans. (2008) 2832-2838. Carbon uses the sp3 value; Mn, Fe and Co
// use the low-spin values.
const COVALENT_RADII: [f64; 86] = [
    0.31, 0.28, 1.28, 0.96, 0.84, 0.76, 0.71, 0.66, 0.57, 0.58, 1.66, 1.41, 1.21, 1.11, 1.07, 1.05, 1.02, 1.06, 2.03,
    1.76, 1.70, 1.60, 1.53, 1.39, 1.39, 1.32, 1.26, 1.24, 1.32, 1.22, 1.22, 1.20, 1.19, 1.20, 1.20, 1.16, 2.20, 1.95,
    1.90, 1.75, 1.64, 1.54, 1.47, 1.46, 1.42, 1.39, 1.45, 1.44, 1.42, 1.39, 1.39, 1.38, 1.39, 1.40, 2.44, 2.15, 2.07,
    2.04, 2.03, 2.01, 1.99, 1.98, 1.98, 1.96, 1.94, 1.92, 1.92, 1.89, 1.90, 1.87, 1.87, 1.75, 1.70, 1.62, 1.51, 1.44,
    1.41, 1.36, 1.36, 1.32, 1.45, 1.46, 1.48, 1.40, 1.50, 1.50,
];

pub const MAX_ATOMIC_NUMBER: u32 = SYMBOLS.len() as u32;

pub fn atomic_number(symbol: &str) -> Result<u32> {
    SYMBOLS
        .iter()
        .position(|s| *s == symbol)
        .map(|i| i as u32 + 1)
        .ok_or_else(|| Error::UnknownSymbol(symbol.to_string()))
}

pub fn symbol(z: u32) -> Result<&'static str> {
    if z == 0 || z > MAX_ATOMIC_NUMBER {
        return Err(Error::UnknownSymbol(format!("Z={z}")));
    }
    Ok(SYMBOLS[z as usize - 1])
}

pub fn covalent_radius(z: u32) -> Result<f64> {
    if z == 0 || z > MAX_ATOMIC_NUMBER {
        return Err(Error::MissingRadius(z));
    }
    Ok(COVALENT_RADII[z as usize - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbols_round_trip() {
        for z in 1..=MAX_ATOMIC_NUMBER {
            assert_eq!(atomic_number(symbol(z).unwrap()).unwrap(), z);
        }
        assert!(atomic_number("Xx").is_err());
    }

    #[test]
    fn table_spot_checks() {
        assert_eq!(covalent_radius(1).unwrap(), 0.31);
        assert_eq!(covalent_radius(6).unwrap(), 0.76);
        assert_eq!(covalent_radius(8).unwrap(), 0.66);
        assert_eq!(covalent_radius(atomic_number("Pt").unwrap()).unwrap(), 1.36);
        assert!(covalent_radius(118).is_err());
    }
}
