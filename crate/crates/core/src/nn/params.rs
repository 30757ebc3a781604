use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.rows, self.cols), self.data.clone()).expect("tensor shape")
    }

    pub fn from_array(a: &Array2<f64>) -> Self {
        Tensor {
            rows: a.nrows(),
            cols: a.ncols(),
            data: a.iter().copied().collect(),
        }
    }
}

/// Named row-major matrices iterated in lexicographic name order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParameterSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Zero tensors with the given shapes.
    pub fn zeros_from_shapes(shapes: &[(String, usize, usize)]) -> Self {
        let mut p = ParameterSet::new();
        for (name, r, c) in shapes {
            p.insert(name.clone(), Tensor::zeros(*r, *c));
        }
        p
    }

    /// Glorot-uniform weights; tensors whose name ends in `.b` start at zero.
    pub fn glorot(shapes: &[(String, usize, usize)], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParameterSet::new();
        for (name, r, c) in shapes {
            let mut t = Tensor::zeros(*r, *c);
            if !name.ends_with(".b") {
                let limit = (6.0 / (*r + *c) as f64).sqrt();
                for v in t.data.iter_mut() {
                    *v = rng.gen_range(-limit..limit);
                }
            }
            p.insert(name.clone(), t);
        }
        p
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Shape(format!("missing parameter '{name}'")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Shape(format!("missing parameter '{name}'")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Position of `name` in iteration order.
    pub fn slot(&self, name: &str) -> Result<usize> {
        self.tensors
            .keys()
            .position(|k| k == name)
            .ok_or_else(|| Error::Shape(format!("missing parameter '{name}'")))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn shapes(&self) -> Vec<(String, usize, usize)> {
        self.tensors.iter().map(|(k, t)| (k.clone(), t.rows, t.cols)).collect()
    }

    pub fn same_shapes(&self, other: &ParameterSet) -> bool {
        self.shapes() == other.shapes()
    }

    /// Check every name and shape against `expected`.
    pub fn check_shapes(&self, expected: &[(String, usize, usize)]) -> Result<()> {
        let have = self.shapes();
        if have.as_slice() != expected {
            let first = expected
                .iter()
                .find(|e| !have.contains(e))
                .map(|(n, r, c)| format!("{n} {r}x{c}"))
                .unwrap_or_else(|| "extra tensors".into());
            return Err(Error::Shape(format!("parameter set does not match config: {first}")));
        }
        Ok(())
    }

    /// Flat view in iteration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.values().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors
            .values()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors.values_mut() {
            t.data.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// self += other (same shapes).
    pub fn add_assign(&mut self, other: &ParameterSet) -> Result<()> {
        if !self.same_shapes(other) {
            return Err(Error::Shape("parameter sets differ in shape".into()));
        }
        for (a, b) in self.tensors.values_mut().zip(other.tensors.values()) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shapes() -> Vec<(String, usize, usize)> {
        vec![("b.w".into(), 3, 4), ("a.b".into(), 1, 4), ("c".into(), 2, 2)]
    }

    #[test]
    fn deterministic_order_and_init() {
        let p = ParameterSet::glorot(&shapes(), 5);
        let names: Vec<_> = p.names().collect();
        assert_eq!(names, vec!["a.b", "b.w", "c"]);
        assert_eq!(p, ParameterSet::glorot(&shapes(), 5));
        assert_ne!(p, ParameterSet::glorot(&shapes(), 6));
        assert!(p.get("a.b").unwrap().data.iter().all(|&v| v == 0.0));
        let lim = (6.0f64 / 7.0).sqrt();
        assert!(p.get("b.w").unwrap().data.iter().all(|v| v.abs() < lim));
        assert_eq!(p.count(), 12 + 4 + 4);
        assert_eq!(p.slot("c").unwrap(), 2);
    }

    #[test]
    fn shape_check_reports_mismatch() {
        let p = ParameterSet::glorot(&shapes(), 0);
        let mut sorted = shapes();
        sorted.sort();
        assert!(p.check_shapes(&sorted).is_ok());
        sorted[2].1 = 9;
        assert!(p.check_shapes(&sorted).is_err());
    }
}
