//! Outlier labelling, the confidence classifier and triage.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bridge::{generate, BridgeSchedule, SamplerConfig};
use crate::elements::covalent_radius;
use crate::error::{Error, Result};
use crate::geometry::{Structure, StructurePair};
use crate::metrics::dmae;
use crate::nn::{DenoiserModel, ParameterSet};
use crate::train::{clip_grad_norm, split_dataset, AdamW, MICRO_BATCH};

pub const DEFAULT_NOISE_COEFFICIENTS: [f64; 3] = [0.0, 0.5, 1.0];
pub const DEFAULT_DMAE_THRESHOLD: f64 = 0.05;
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicSettings {
    /// Collision when d < factor·(r_i + r_j).
    pub collision_factor: f64,
    /// Bonded when d < factor·(r_i + r_j).
    pub bond_factor: f64,
    /// Largest allowed displacement of a free slab atom (Å).
    pub displacement_tol: f64,
}

impl Default for HeuristicSettings {
    fn default() -> Self {
        HeuristicSettings {
            collision_factor: 0.8,
            bond_factor: 1.25,
            displacement_tol: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomPair {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HeuristicReport {
    pub collision: bool,
    pub dissociation: bool,
    pub desorption: bool,
    pub reconstruction: bool,
    /// Pairs closer than the collision threshold.
    pub colliding_pairs: Vec<AtomPair>,
    /// Connected components of the adsorbate bond graph.
    pub adsorbate_fragments: usize,
    /// Shortest adsorbate–slab distance (Å).
    pub closest_surface_contact: Option<f64>,
    /// Largest free slab atom displacement from the reference (Å).
    pub max_slab_displacement: f64,
}

impl HeuristicReport {
    pub fn any(&self) -> bool {
        self.collision || self.dissociation || self.desorption || self.reconstruction
    }
}

fn radii(s: &Structure) -> Result<Vec<f64>> {
    s.atomic_numbers.iter().map(|&z| covalent_radius(z)).collect()
}

fn adsorbate_indices(s: &Structure) -> Result<Vec<usize>> {
    let idx: Vec<usize> = (0..s.len()).filter(|&i| s.adsorbate[i]).collect();
    if idx.is_empty() {
        return Err(Error::NoAdsorbate);
    }
    Ok(idx)
}

pub fn check_collision(s: &Structure, factor: f64) -> Result<(bool, Vec<AtomPair>)> {
    let r = radii(s)?;
    let mut pairs = Vec::new();
    for i in 0..s.len() {
        for j in (i + 1)..s.len() {
            let d = s.lattice.mic_distance(&s.positions[i], &s.positions[j]);
            if d < factor * (r[i] + r[j]) {
                pairs.push(AtomPair { i, j, distance: d });
            }
        }
    }
    Ok((!pairs.is_empty(), pairs))
}

/// Number of connected components of the adsorbate bond graph.
pub fn adsorbate_fragments(s: &Structure, bond_factor: f64) -> Result<usize> {
    let idx = adsorbate_indices(s)?;
    let r = radii(s)?;
    let n = idx.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for a in 0..n {
        for b in (a + 1)..n {
            let (i, j) = (idx[a], idx[b]);
            let d = s.lattice.mic_distance(&s.positions[i], &s.positions[j]);
            if d < bond_factor * (r[i] + r[j]) {
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                parent[ra] = rb;
            }
        }
    }
    Ok((0..n).filter(|&a| root(&mut parent, a) == a).count())
}

pub fn check_dissociation(s: &Structure, bond_factor: f64) -> Result<bool> {
    Ok(adsorbate_fragments(s, bond_factor)? > 1)
}

/// Shortest adsorbate–slab distance and whether any such pair is bonded.
fn surface_contact(s: &Structure, bond_factor: f64) -> Result<(Option<f64>, bool)> {
    let idx = adsorbate_indices(s)?;
    let r = radii(s)?;
    let mut closest: Option<f64> = None;
    let mut bonded = false;
    for &i in &idx {
        for j in (0..s.len()).filter(|&j| !s.adsorbate[j]) {
            let d = s.lattice.mic_distance(&s.positions[i], &s.positions[j]);
            closest = Some(closest.map_or(d, |c| c.min(d)));
            bonded |= d < bond_factor * (r[i] + r[j]);
        }
    }
    Ok((closest, bonded))
}

pub fn check_desorption(s: &Structure, bond_factor: f64) -> Result<bool> {
    Ok(!surface_contact(s, bond_factor)?.1)
}

/// Largest minimum-image displacement of a free slab atom.
pub fn max_slab_displacement(generated: &Structure, reference: &Structure) -> Result<f64> {
    if !generated.same_system(reference) {
        return Err(Error::Mismatch("reconstruction check needs the same system".into()));
    }
    let mut worst: f64 = 0.0;
    for i in 0..generated.len() {
        if !generated.adsorbate[i] && !generated.fixed[i] {
            let d = generated
                .lattice
                .mic_distance(&generated.positions[i], &reference.positions[i]);
            worst = worst.max(d);
        }
    }
    Ok(worst)
}

pub fn check_reconstruction(generated: &Structure, reference: &Structure, displacement_tol: f64) -> Result<bool> {
    Ok(max_slab_displacement(generated, reference)? > displacement_tol)
}

pub fn run_heuristics(
    generated: &Structure,
    reference: &Structure,
    settings: &HeuristicSettings,
) -> Result<HeuristicReport> {
    let (collision, colliding_pairs) = check_collision(generated, settings.collision_factor)?;
    let fragments = adsorbate_fragments(generated, settings.bond_factor)?;
    let (closest, bonded) = surface_contact(generated, settings.bond_factor)?;
    let disp = max_slab_displacement(generated, reference)?;
    Ok(HeuristicReport {
        collision,
        dissociation: fragments > 1,
        desorption: !bonded,
        reconstruction: disp > settings.displacement_tol,
        colliding_pairs,
        adsorbate_fragments: fragments,
        closest_surface_contact: closest,
        max_slab_displacement: disp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    DmaeThreshold,
    Heuristic,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierLabel {
    pub id: String,
    pub is_outlier: bool,
    /// Present when `is_outlier`.
    pub source: Option<LabelSource>,
    pub dmae: Option<f64>,
    pub noise_coefficient: f64,
    pub flags: HeuristicReport,
}

/// Union of the DMAE threshold and the heuristic flags.
pub fn make_label(
    id: &str,
    dmae: Option<f64>,
    threshold: f64,
    flags: HeuristicReport,
    coefficient: f64,
) -> OutlierLabel {
    let over = dmae.is_some_and(|d| d > threshold);
    let source = match (over, flags.any()) {
        (true, true) => Some(LabelSource::Both),
        (true, false) => Some(LabelSource::DmaeThreshold),
        (false, true) => Some(LabelSource::Heuristic),
        (false, false) => None,
    };
    OutlierLabel {
        id: id.to_string(),
        is_outlier: source.is_some(),
        source,
        dmae,
        noise_coefficient: coefficient,
        flags,
    }
}

/// A generated structure with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGeneration {
    pub structure: Structure,
    pub label: OutlierLabel,
}

/// Generate every pair once per noise coefficient (eta = coefficient) and
/// label against the relaxed reference. Pair `k` uses sampler seed
/// `seed + k`.
pub fn label_generations(
    model: &DenoiserModel,
    schedule: &BridgeSchedule,
    pairs: &[StructurePair],
    coefficients: &[f64],
    dmae_threshold: f64,
    sampler: &SamplerConfig,
    heuristics: &HeuristicSettings,
) -> Result<Vec<LabeledGeneration>> {
    let mut out = Vec::with_capacity(pairs.len() * coefficients.len());
    for (k, pair) in pairs.iter().enumerate() {
        for &c in coefficients {
            let cfg = SamplerConfig {
                eta: c,
                seed: sampler.seed.wrapping_add(k as u64),
                ..*sampler
            };
            let mut g = generate(&pair.initial, model, schedule, &cfg)?;
            g.id = format!("{}@{c}", pair.id());
            let d = dmae(&g, &pair.relaxed)?;
            let flags = run_heuristics(&g, &pair.initial, heuristics)?;
            let label = make_label(&g.id, Some(d), dmae_threshold, flags, c);
            out.push(LabeledGeneration { structure: g, label });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub train_ratio: f64,
    pub grad_clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 20,
            batch_size: 256,
            learning_rate: 1e-3,
            train_ratio: 0.8,
            grad_clip_norm: Some(1.0),
            seed: 0,
        }
    }
}

/// Per-class weights n / (2·n_c) for labels (outlier = true).
pub fn class_weights(outlier: &[bool]) -> Result<(f64, f64)> {
    let n = outlier.len() as f64;
    let pos = outlier.iter().filter(|&&o| o).count() as f64;
    let neg = n - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::SingleClass);
    }
    Ok((n / (2.0 * neg), n / (2.0 * pos)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub train_size: usize,
    pub validation_size: usize,
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
    pub validation_auc: Option<f64>,
}

/// Weighted BCE training of the confidence head; the target confidence is
/// 1 for sound structures and 0 for outliers.
pub fn train_classifier(
    model: &mut DenoiserModel,
    data: &[LabeledGeneration],
    config: &ClassifierConfig,
) -> Result<ClassifierReport> {
    if config.batch_size == 0 || config.epochs == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::Config("classifier needs batch_size, epochs and lr > 0".into()));
    }
    let all: Vec<bool> = data.iter().map(|d| d.label.is_outlier).collect();
    class_weights(&all)?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let (train, val) = split_dataset(&idx, config.train_ratio, config.seed)?;
    let train_labels: Vec<bool> = train.iter().map(|&i| all[i]).collect();
    let (w_neg, w_pos) = class_weights(&train_labels)?;
    let mut opt = AdamW::new(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order = train.clone();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut loss = 0.0;
            let mut grads: Option<ParameterSet> = None;
            for micro in chunk.chunks(MICRO_BATCH) {
                let items: Vec<(&Structure, f64)> = micro.iter().map(|&i| (&data[i].structure, 0.0)).collect();
                let batch = model.batch(&items)?;
                let labels: Vec<f64> = micro.iter().map(|&i| if all[i] { 0.0 } else { 1.0 }).collect();
                let weights: Vec<f64> = micro
                    .iter()
                    .map(|&i| if all[i] { w_pos } else { w_neg } / chunk.len() as f64)
                    .collect();
                let mut trace = model.trace_classifier(&batch);
                loss += trace.attach_bce_loss(&labels, &weights)?;
                let g = trace.gradient()?;
                match &mut grads {
                    Some(acc) => acc.add_assign(&g)?,
                    None => grads = Some(g),
                }
            }
            if !loss.is_finite() {
                return Err(Error::Diverged);
            }
            let mut grads = grads.expect("nonempty chunk");
            if let Some(c) = config.grad_clip_norm {
                clip_grad_norm(&mut grads, c);
            }
            opt.step(&mut model.params, &grads, config.learning_rate)?;
            total += loss * chunk.len() as f64;
        }
        epoch_losses.push(total / train.len() as f64);
    }
    let accuracy = |set: &[usize]| -> Result<(f64, Vec<f64>)> {
        let structs: Vec<&Structure> = set.iter().map(|&i| &data[i].structure).collect();
        let conf = model.classifier_batch(&structs)?;
        let hits = set
            .iter()
            .zip(&conf)
            .filter(|(&i, &c)| (c < DEFAULT_CONFIDENCE_THRESHOLD) == all[i])
            .count();
        Ok((hits as f64 / set.len() as f64, conf))
    };
    let (train_accuracy, _) = accuracy(&train)?;
    let (validation_accuracy, conf) = accuracy(&val)?;
    let scores: Vec<f64> = conf.iter().map(|c| 1.0 - c).collect();
    let val_labels: Vec<bool> = val.iter().map(|&i| all[i]).collect();
    Ok(ClassifierReport {
        train_size: train.len(),
        validation_size: val.len(),
        epoch_losses,
        train_accuracy,
        validation_accuracy,
        validation_auc: roc_auc(&scores, &val_labels),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub id: String,
    pub is_outlier: bool,
    pub confidence: f64,
    pub low_confidence: bool,
    pub report: HeuristicReport,
}

/// Outlier iff confidence < threshold or any heuristic flag.
pub fn detect(
    structure: &Structure,
    classifier: &DenoiserModel,
    confidence_threshold: f64,
    reference_initial: &Structure,
    heuristics: &HeuristicSettings,
) -> Result<Detection> {
    let confidence = classifier.classifier_forward(structure)?;
    let report = run_heuristics(structure, reference_initial, heuristics)?;
    let low = confidence < confidence_threshold;
    Ok(Detection {
        id: structure.id.clone(),
        is_outlier: low || report.any(),
        confidence,
        low_confidence: low,
        report,
    })
}

/// Average ranks (1-based), ties sharing their mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = mean;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `None` for fewer than two points or a
/// constant input.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Area under the ROC curve for `scores` (higher = more likely positive);
/// `None` unless both classes are present.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    if scores.len() != positive.len() {
        return None;
    }
    let r = ranks(scores);
    let np = positive.iter().filter(|&&p| p).count() as f64;
    let nn = positive.len() as f64 - np;
    if np == 0.0 || nn == 0.0 {
        return None;
    }
    let sum: f64 = r.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    Some((sum - np * (np + 1.0) / 2.0) / (np * nn))
}
