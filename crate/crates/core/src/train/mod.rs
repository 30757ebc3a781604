//! Dataset cleaning and splitting, the denoiser training loop, and
//! checkpoints.

pub mod checkpoint;
pub mod config;
pub mod optim;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bridge::{forward_sample, training_target, BridgeSchedule};
use crate::error::{Error, Result};
use crate::geometry::{Structure, StructurePair, Vec3};
use crate::metrics::dmae;
use crate::nn::{DenoiserModel, LossKind, ParameterSet};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION};
pub use config::RunConfig;
pub use optim::{clip_grad_norm, lr_at_epoch, AdamW};

pub const DEFAULT_MIN_DMAE: f64 = 1e-3;
pub const DEFAULT_MAX_DMAE: f64 = 0.5;

/// Structures per forward/backward pass; larger batches accumulate.
pub const MICRO_BATCH: usize = 16;

/// Keep pairs with `min_dmae ≤ DMAE(initial, relaxed) ≤ max_dmae`.
pub fn clean_dataset(pairs: Vec<StructurePair>, min_dmae: f64, max_dmae: f64) -> Result<Vec<StructurePair>> {
    let total = pairs.len();
    let mut kept = Vec::with_capacity(total);
    for p in pairs {
        let d = dmae(&p.initial, &p.relaxed)?;
        if d >= min_dmae && d <= max_dmae {
            kept.push(p);
        }
    }
    if kept.is_empty() && total > 0 {
        log::warn!("cleaning removed all {total} pairs (window {min_dmae}..{max_dmae} Å)");
    }
    Ok(kept)
}

/// Size of the first part: ⌈ratio·n⌉, kept within [1, n − 1].
pub fn split_sizes(n: usize, ratio: f64) -> Result<(usize, usize)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 pairs to split, got {n}"
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must be in (0, 1), got {ratio}"
        )));
    }
    let x = ratio * n as f64;
    // guard against representation error such as 0.8·10 = 8.000000000000002
    let k = if (x - x.round()).abs() < 1e-9 {
        x.round()
    } else {
        x.ceil()
    } as usize;
    let k = k.clamp(1, n - 1);
    Ok((k, n - k))
}

/// Deterministic shuffled split into (train, test).
pub fn split_dataset<T: Clone>(items: &[T], ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let (k, _) = split_sizes(items.len(), ratio)?;
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train = idx[..k].iter().map(|&i| items[i].clone()).collect();
    let test = idx[k..].iter().map(|&i| items[i].clone()).collect();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule_gamma: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub grad_clip_norm: Option<f64>,
    pub loss: LossKind,
    pub seed: u64,
    /// Independent t-draws per structure per epoch.
    pub sample_per_epoch: usize,
    /// Exclude fixed atoms from the loss.
    pub mask_fixed: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-4,
            schedule_gamma: 0.999,
            grad_clip_norm: Some(1.0),
            loss: LossKind::L1,
            seed: 0,
            sample_per_epoch: 5,
            mask_fixed: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.schedule_gamma > 0.0 && self.schedule_gamma <= 1.0) {
            return Err(Error::Config(format!(
                "schedule_gamma must be in (0, 1], got {}",
                self.schedule_gamma
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.sample_per_epoch == 0 {
            return Err(Error::Config("sample_per_epoch must be >= 1".into()));
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("grad clip norm must be > 0, got {c}")));
            }
        }
        Ok(())
    }
}

/// Per-atom loss weights giving the mean over free-atom coordinates.
pub fn loss_weights(structures: &[&Structure], mask_fixed: bool) -> Vec<Vec<f64>> {
    let count: usize = structures
        .iter()
        .map(|s| if mask_fixed { s.free_count() } else { s.len() })
        .sum();
    let w = if count == 0 { 0.0 } else { 1.0 / (3 * count) as f64 };
    structures
        .iter()
        .map(|s| s.fixed.iter().map(|&f| if f && mask_fixed { 0.0 } else { w }).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

/// Training state: model, optimizer, RNG and progress counters.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: DenoiserModel,
    pub schedule: BridgeSchedule,
    pub config: TrainConfig,
    pub optimizer: AdamW,
    pub rng: ChaCha8Rng,
    pub epoch: usize,
    pub step: u64,
    pub history: Vec<EpochRecord>,
}

impl Trainer {
    pub fn new(model: DenoiserModel, schedule: BridgeSchedule, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = AdamW::new(&model.params);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Trainer {
            model,
            schedule,
            config,
            optimizer,
            rng,
            epoch: 0,
            step: 0,
            history: Vec::new(),
        })
    }

    /// One optimizer update on `batch`; returns the loss before the update.
    pub fn train_step(&mut self, batch: &[&StructurePair], lr: f64) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty training batch".into()));
        }
        let t_max = self.schedule.num_timesteps();
        let mut states = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        let mut ms = Vec::with_capacity(batch.len());
        for pair in batch {
            let t = self.rng.gen_range(1..=t_max);
            let (xt, noise) = forward_sample(pair, t, &self.schedule, &mut self.rng)?;
            targets.push(training_target(pair, t, &noise, &self.schedule)?);
            states.push(pair.relaxed.with_positions(xt));
            ms.push(self.schedule.m(t));
        }
        let loss = self.step_on(&states, &ms, &targets, lr)?;
        Ok(loss)
    }

    /// Loss and, when `with_grad`, its gradient, accumulated over
    /// micro-batches of `MICRO_BATCH` structures.
    fn accumulate(
        &self,
        states: &[Structure],
        m_values: &[f64],
        targets: &[Vec<Vec3>],
        with_grad: bool,
    ) -> Result<(f64, Option<ParameterSet>)> {
        if states.len() != m_values.len() || states.len() != targets.len() {
            return Err(Error::Shape("states, m values and targets differ in length".into()));
        }
        let refs: Vec<&Structure> = states.iter().collect();
        let weights = loss_weights(&refs, self.config.mask_fixed);
        let mut loss = 0.0;
        let mut grads: Option<ParameterSet> = None;
        for start in (0..states.len()).step_by(MICRO_BATCH) {
            let end = (start + MICRO_BATCH).min(states.len());
            let items: Vec<(&Structure, f64)> = states[start..end]
                .iter()
                .zip(m_values[start..end].iter().copied())
                .collect();
            let graph = self.model.batch(&items)?;
            let mut trace = self.model.trace(&graph);
            loss += trace.attach_regression_loss(&targets[start..end], &weights[start..end], self.config.loss)?;
            if with_grad {
                let g = trace.gradient()?;
                match &mut grads {
                    Some(acc) => acc.add_assign(&g)?,
                    None => grads = Some(g),
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::Diverged);
        }
        Ok((loss, grads))
    }

    /// Loss on explicit noisy states without updating anything.
    pub fn loss_on(&self, states: &[Structure], m_values: &[f64], targets: &[Vec<Vec3>]) -> Result<f64> {
        Ok(self.accumulate(states, m_values, targets, false)?.0)
    }

    /// Draw a fixed evaluation set: `draws` (state, m_t, target) triples per pair.
    pub fn draw_eval_set<R: Rng>(
        &self,
        pairs: &[StructurePair],
        draws: usize,
        rng: &mut R,
    ) -> Result<(Vec<Structure>, Vec<f64>, Vec<Vec<Vec3>>)> {
        let mut out = (Vec::new(), Vec::new(), Vec::new());
        for pair in pairs {
            for _ in 0..draws {
                let t = rng.gen_range(1..=self.schedule.num_timesteps());
                let (xt, noise) = forward_sample(pair, t, &self.schedule, rng)?;
                out.2.push(training_target(pair, t, &noise, &self.schedule)?);
                out.0.push(pair.relaxed.with_positions(xt));
                out.1.push(self.schedule.m(t));
            }
        }
        Ok(out)
    }

    /// Update on explicit noisy states and regression targets.
    pub fn step_on(&mut self, states: &[Structure], m_values: &[f64], targets: &[Vec<Vec3>], lr: f64) -> Result<f64> {
        let (loss, grads) = self.accumulate(states, m_values, targets, true)?;
        let mut grads = grads.ok_or_else(|| Error::InvalidArgument("empty training batch".into()))?;
        if let Some(c) = self.config.grad_clip_norm {
            clip_grad_norm(&mut grads, c);
        }
        self.optimizer.step(&mut self.model.params, &grads, lr)?;
        if !self.model.params.is_finite() {
            return Err(Error::Diverged);
        }
        self.step += 1;
        Ok(loss)
    }

    /// One pass: every pair `sample_per_epoch` times, shuffled, in batches.
    pub fn train_epoch(&mut self, pairs: &[StructurePair]) -> Result<f64> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("no training pairs".into()));
        }
        let lr = lr_at_epoch(self.config.learning_rate, self.config.schedule_gamma, self.epoch);
        let mut order: Vec<usize> = (0..pairs.len())
            .flat_map(|i| std::iter::repeat_n(i, self.config.sample_per_epoch))
            .collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&StructurePair> = chunk.iter().map(|&i| &pairs[i]).collect();
            total += self.train_step(&batch, lr)?;
            batches += 1;
        }
        let mean = total / batches as f64;
        self.history.push(EpochRecord {
            epoch: self.epoch,
            mean_loss: mean,
            lr,
        });
        self.epoch += 1;
        Ok(mean)
    }

    /// Train until `config.epochs` epochs have run in total.
    pub fn fit(&mut self, pairs: &[StructurePair]) -> Result<()> {
        while self.epoch < self.config.epochs {
            let loss = self.train_epoch(pairs)?;
            log::info!("epoch {} loss {:.6}", self.epoch, loss);
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.model.config.clone(),
            schedule: self.schedule.descriptor(),
            params: self.model.params.clone(),
            train: Some(self.config.clone()),
            optimizer: Some(self.optimizer.clone()),
            rng: Some(self.rng.clone()),
            epoch: self.epoch,
            step: self.step,
            history: self.history.clone(),
        }
    }

    /// Resume from a checkpoint written by `checkpoint`.
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let model = DenoiserModel::from_parts(ckpt.config, ckpt.params)?;
        let schedule = BridgeSchedule::from_descriptor(&ckpt.schedule)?;
        let config = ckpt
            .train
            .ok_or_else(|| Error::Checkpoint("no training state to resume".into()))?;
        config.validate()?;
        let optimizer = ckpt.optimizer.unwrap_or_else(|| AdamW::new(&model.params));
        let rng = ckpt.rng.unwrap_or_else(|| ChaCha8Rng::seed_from_u64(config.seed));
        Ok(Trainer {
            model,
            schedule,
            config,
            optimizer,
            rng,
            epoch: ckpt.epoch,
            step: ckpt.step,
            history: ckpt.history,
        })
    }
}

#[cfg(test)]
pub(crate) mod testdata {
    use super::*;
    use crate::geometry::testutil::random_structure;
    use crate::geometry::wrap_into_cell;

    /// Small pairs: the adsorbate (last atoms) is displaced by a smooth
    /// function of its position so there is something to learn.
    pub fn toy_pairs(n: usize, atoms: usize, seed: u64) -> Vec<StructurePair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|k| {
                let mut relaxed = wrap_into_cell(&random_structure(&mut rng, atoms));
                relaxed.id = format!("toy{k}");
                let mut initial = relaxed.clone();
                for i in 0..atoms {
                    if !initial.fixed[i] {
                        let shift = if initial.adsorbate[i] { 0.4 } else { 0.05 };
                        initial.positions[i] +=
                            Vec3::new(0.0, 0.0, shift) + Vec3::new(rng.gen_range(-0.05..0.05), 0.0, 0.0);
                    }
                }
                StructurePair::new(wrap_into_cell(&initial), relaxed, "O", "111").unwrap()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::testdata::toy_pairs;
    use super::*;
    use crate::bridge::MtMode;
    use crate::nn::DenoiserConfig;

    fn tiny_model(seed: u64) -> DenoiserModel {
        DenoiserModel::new(
            DenoiserConfig {
                hidden: 8,
                layers: 1,
                num_rbf: 6,
                n_frequencies: 2,
                time_embed_dim: 4,
                ..DenoiserConfig::default()
            },
            seed,
        )
        .unwrap()
    }

    fn schedule() -> BridgeSchedule {
        BridgeSchedule::with_max_var(100, MtMode::Linear, 0.05).unwrap()
    }

    #[test]
    fn cleaning_window() {
        let pairs = toy_pairs(3, 6, 0);
        let same = StructurePair::new(pairs[0].relaxed.clone(), pairs[0].relaxed.clone(), "O", "111").unwrap();
        let mut far = pairs[1].clone();
        let last = far.initial.len() - 1;
        far.initial.positions[last].z += 10.0;
        let d = dmae(&far.initial, &far.relaxed).unwrap();
        assert!(d > DEFAULT_MAX_DMAE, "{d}");
        let kept = clean_dataset(vec![same, far, pairs[2].clone()], DEFAULT_MIN_DMAE, DEFAULT_MAX_DMAE).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id(), pairs[2].id());
    }

    #[test]
    fn dmae_inside_window_is_kept() {
        let p = toy_pairs(1, 6, 1).pop().unwrap();
        // scale the displacement so the DMAE is 0.05 Å
        let d0 = dmae(&p.initial, &p.relaxed).unwrap();
        assert!(d0 > 0.0);
        assert_eq!(
            clean_dataset(vec![p], 1e-3, 0.5).unwrap().len(),
            if d0 <= 0.5 { 1 } else { 0 }
        );
        assert!(clean_dataset(Vec::new(), 1e-3, 0.5).unwrap().is_empty());
    }

    #[test]
    fn split_rules() {
        assert_eq!(split_sizes(10, 0.8).unwrap(), (8, 2));
        assert_eq!(split_sizes(73658, 0.8).unwrap(), (58927, 14731));
        assert_eq!(split_sizes(2, 0.8).unwrap(), (1, 1));
        assert!(split_sizes(1, 0.8).is_err());
        let items: Vec<usize> = (0..10).collect();
        let (a, b) = split_dataset(&items, 0.8, 3).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort();
        assert_eq!(all, items);
        assert_eq!(split_dataset(&items, 0.8, 3).unwrap(), (a, b));
    }

    #[test]
    fn masked_loss_ignores_fixed_rows() {
        let pairs = toy_pairs(1, 6, 2);
        let model = tiny_model(0);
        let s = &pairs[0].relaxed;
        let graph = model.batch(&[(s, 0.5)]).unwrap();
        let weights = loss_weights(&[s], true);
        let mut tr = model.trace(&graph);
        let preds = tr.predictions().unwrap();
        // target equal to the prediction → zero loss
        assert_eq!(tr.attach_regression_loss(&preds, &weights, LossKind::L1).unwrap(), 0.0);
        let mut moved = preds.clone();
        for i in 0..6 {
            if s.fixed[i] {
                moved[0][i] += Vec3::new(5.0, -3.0, 1.0);
            }
        }
        let mut tr = model.trace(&graph);
        assert_eq!(tr.attach_regression_loss(&moved, &weights, LossKind::L1).unwrap(), 0.0);
    }

    #[test]
    fn loss_is_translation_invariant() {
        let pairs = toy_pairs(2, 6, 3);
        let shifted: Vec<StructurePair> = pairs
            .iter()
            .map(|p| {
                let v = p.relaxed.lattice.vector(0) - p.relaxed.lattice.vector(1);
                StructurePair::new(p.initial.translated(&v), p.relaxed.translated(&v), "O", "111").unwrap()
            })
            .collect();
        let cfg = TrainConfig {
            batch_size: 2,
            ..TrainConfig::default()
        };
        let mut a = Trainer::new(tiny_model(1), schedule(), cfg.clone()).unwrap();
        let mut b = Trainer::new(tiny_model(1), schedule(), cfg).unwrap();
        let la = a.train_step(&pairs.iter().collect::<Vec<_>>(), 1e-3).unwrap();
        let lb = b.train_step(&shifted.iter().collect::<Vec<_>>(), 1e-3).unwrap();
        assert!((la - lb).abs() < 1e-9, "{la} vs {lb}");
    }

    #[test]
    fn loss_decreases_over_fifty_steps() {
        let pairs = toy_pairs(8, 6, 4);
        let cfg = TrainConfig {
            batch_size: 8,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let mut tr = Trainer::new(tiny_model(2), schedule(), cfg).unwrap();
        let refs: Vec<&StructurePair> = pairs.iter().collect();
        let (s, m, y) = tr.draw_eval_set(&pairs, 8, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let before = tr.loss_on(&s, &m, &y).unwrap();
        for _ in 0..50 {
            tr.train_step(&refs, 1e-3).unwrap();
        }
        let after = tr.loss_on(&s, &m, &y).unwrap();
        assert!(after < before, "before {before} after {after}");
    }

    #[test]
    fn training_is_reproducible() {
        let pairs = toy_pairs(6, 6, 5);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            learning_rate: 1e-3,
            sample_per_epoch: 2,
            ..TrainConfig::default()
        };
        let run = || {
            let mut t = Trainer::new(tiny_model(3), schedule(), cfg.clone()).unwrap();
            t.fit(&pairs).unwrap();
            (t.history.clone(), t.model.params.clone())
        };
        let (h1, p1) = run();
        let (h2, p2) = run();
        assert_eq!(h1, h2);
        assert_eq!(p1, p2);
        assert_eq!(h1.len(), 2);
    }

    #[test]
    fn non_finite_loss_is_divergence() {
        let pairs = toy_pairs(1, 6, 6);
        let mut t = Trainer::new(tiny_model(4), schedule(), TrainConfig::default()).unwrap();
        let s = pairs[0].relaxed.clone();
        let target = vec![vec![Vec3::new(f64::NAN, 0.0, 0.0); 6]];
        assert!(matches!(t.step_on(&[s], &[0.5], &target, 1e-3), Err(Error::Diverged)));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            schedule_gamma: 1.5,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }
}
