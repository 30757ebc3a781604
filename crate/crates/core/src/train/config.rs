//! `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Keys:
//! `flow` (bbdm), `coord` (cartesian), `epoch`, `batch_size`, `lr`,
//! `schedule_gamma`, `clip_grad`, `clip_norm`, `loss_type`, `fixed`,
//! `train_objective` (grad), `cutoff`, `hidden_channels`, `num_rbf`,
//! `num_layers`, `n_frequencies`, `num_timesteps`, `sample_mt_mode`,
//! `max_var`, `sample_steps`, `sample_mode`, `eta`, `sample_per_epoch`,
//! `seed`, `surface_mode`.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::bridge::{BridgeSchedule, MtMode, SamplerConfig, StepSelection};
use crate::error::{Error, Result};
use crate::nn::DenoiserConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: DenoiserConfig,
    pub train: TrainConfig,
    pub num_timesteps: usize,
    pub mt_mode: MtMode,
    pub max_var: f64,
    pub sampler: SamplerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: DenoiserConfig::default(),
            train: TrainConfig::default(),
            num_timesteps: 100,
            mt_mode: MtMode::Linear,
            max_var: 0.05,
            sampler: SamplerConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid value '{value}' for '{key}'"),
    })
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "t" | "1" | "yes" => Ok(true),
        "false" | "f" | "0" | "no" => Ok(false),
        _ => Err(Error::Parse {
            line,
            msg: format!("invalid boolean '{value}' for '{key}'"),
        }),
    }
}

fn expect(key: &str, value: &str, allowed: &str, line: usize) -> Result<()> {
    if value.eq_ignore_ascii_case(allowed) {
        Ok(())
    } else {
        Err(Error::Parse {
            line,
            msg: format!("'{key}' supports only '{allowed}', got '{value}'"),
        })
    }
}

impl RunConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        let mut clip = true;
        let mut clip_norm = c.train.grad_clip_norm.unwrap_or(1.0);
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected key = value, got '{body}'"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "flow" => expect(key, value, "bbdm", line)?,
                "coord" => expect(key, value, "cartesian", line)?,
                "train_objective" => expect(key, value, "grad", line)?,
                "epoch" | "epochs" => c.train.epochs = parse(key, value, line)?,
                "batch_size" => c.train.batch_size = parse(key, value, line)?,
                "lr" => c.train.learning_rate = parse(key, value, line)?,
                "schedule_gamma" => c.train.schedule_gamma = parse(key, value, line)?,
                "clip_grad" => clip = parse_bool(key, value, line)?,
                "clip_norm" => clip_norm = parse(key, value, line)?,
                "loss_type" => c.train.loss = parse(key, value, line)?,
                "fixed" => c.train.mask_fixed = parse_bool(key, value, line)?,
                "sample_per_epoch" => c.train.sample_per_epoch = parse(key, value, line)?,
                "seed" => {
                    let seed = parse(key, value, line)?;
                    c.train.seed = seed;
                    c.sampler.seed = seed;
                }
                "cutoff" => c.model.cutoff = parse(key, value, line)?,
                "hidden_channels" => c.model.hidden = parse(key, value, line)?,
                "num_rbf" => c.model.num_rbf = parse(key, value, line)?,
                "num_layers" => c.model.layers = parse(key, value, line)?,
                "n_frequencies" => c.model.n_frequencies = parse(key, value, line)?,
                "surface_mode" => c.model.surface_mode = parse(key, value, line)?,
                "num_timesteps" => c.num_timesteps = parse(key, value, line)?,
                "sample_mt_mode" => c.mt_mode = parse(key, value, line)?,
                "max_var" => c.max_var = parse(key, value, line)?,
                "sample_steps" => c.sampler.sample_steps = parse(key, value, line)?,
                "sample_mode" => c.sampler.step_selection = parse::<StepSelection>(key, value, line)?,
                "eta" => c.sampler.eta = parse(key, value, line)?,
                other => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown key '{other}'"),
                    })
                }
            }
        }
        c.train.grad_clip_norm = clip.then_some(clip_norm);
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        let schedule = self.schedule()?;
        self.sampler.validate(&schedule)
    }

    pub fn schedule(&self) -> Result<BridgeSchedule> {
        BridgeSchedule::with_max_var(self.num_timesteps, self.mt_mode, self.max_var)
    }

    /// Inverse of `parse_str`.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let m = &self.model;
        let s = &self.sampler;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("flow", "bbdm".into());
        kv("coord", "cartesian".into());
        kv("train_objective", "grad".into());
        kv("epoch", t.epochs.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("lr", t.learning_rate.to_string());
        kv("schedule_gamma", t.schedule_gamma.to_string());
        kv("clip_grad", t.grad_clip_norm.is_some().to_string());
        if let Some(n) = t.grad_clip_norm {
            kv("clip_norm", n.to_string());
        }
        kv("loss_type", t.loss.to_string());
        kv("fixed", t.mask_fixed.to_string());
        kv("sample_per_epoch", t.sample_per_epoch.to_string());
        kv("seed", t.seed.to_string());
        kv("cutoff", m.cutoff.to_string());
        kv("hidden_channels", m.hidden.to_string());
        kv("num_rbf", m.num_rbf.to_string());
        kv("num_layers", m.layers.to_string());
        kv("n_frequencies", m.n_frequencies.to_string());
        kv("surface_mode", m.surface_mode.to_string());
        kv("num_timesteps", self.num_timesteps.to_string());
        kv("sample_mt_mode", self.mt_mode.to_string());
        kv("max_var", self.max_var.to_string());
        kv("sample_steps", s.sample_steps.to_string());
        kv("sample_mode", s.step_selection.to_string());
        kv("eta", s.eta.to_string());
        out
    }
}
