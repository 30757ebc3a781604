//! Brownian bridge between relaxed (x, t = 0) and initial (y, t = T)
//! geometries under periodic boundary conditions.
//!
//! Marginal: `x_t ~ N(x + m_t·Δ, δ_t I)` where `Δ` is the minimum-image
//! displacement from x to y and `δ_t = 2s(m_t − m_t²)`. Every displacement
//! term goes through the minimum-image convention so the bridge endpoint is
//! y modulo the lattice.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_position, Structure, StructurePair, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MtMode {
    Linear,
    Cosine,
}

impl std::str::FromStr for MtMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(MtMode::Linear),
            "cosine" => Ok(MtMode::Cosine),
            other => Err(Error::Config(format!("unknown schedule mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for MtMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MtMode::Linear => "linear",
            MtMode::Cosine => "cosine",
        })
    }
}

/// Serializable description of a schedule; the arrays are rebuilt from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDescriptor {
    pub num_timesteps: usize,
    pub mode: MtMode,
    pub max_var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeSchedule {
    steps: usize,
    mode: MtMode,
    scale: f64,
    m: Vec<f64>,
    delta: Vec<f64>,
    delta_cond: Vec<f64>,
}

impl BridgeSchedule {
    /// `scale` is the bridge hyperparameter s; the largest variance is s/2.
    pub fn new(steps: usize, mode: MtMode, scale: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Schedule(format!("need T >= 2, got {steps}")));
        }
        if !(scale >= 0.0) || !scale.is_finite() {
            return Err(Error::Schedule(format!("noise scale must be >= 0, got {scale}")));
        }
        let t_max = steps as f64;
        let m: Vec<f64> = (0..=steps)
            .map(|t| {
                if t == 0 {
                    0.0
                } else if t == steps {
                    1.0
                } else {
                    let u = t as f64 / t_max;
                    match mode {
                        MtMode::Linear => u,
                        MtMode::Cosine => 0.5 * (1.0 - (std::f64::consts::PI * u).cos()),
                    }
                }
            })
            .collect();
        let delta: Vec<f64> = m.iter().map(|&mt| 2.0 * scale * (mt - mt * mt)).collect();
        let mut delta_cond = vec![0.0; steps + 1];
        for t in 1..=steps {
            delta_cond[t] = conditional_variance(&m, &delta, t, t - 1);
        }
        Ok(BridgeSchedule {
            steps,
            mode,
            scale,
            m,
            delta,
            delta_cond,
        })
    }

    /// Schedule whose peak variance (at m_t = 1/2) equals `max_var`.
    pub fn with_max_var(steps: usize, mode: MtMode, max_var: f64) -> Result<Self> {
        Self::new(steps, mode, 2.0 * max_var)
    }

    pub fn from_descriptor(d: &ScheduleDescriptor) -> Result<Self> {
        Self::with_max_var(d.num_timesteps, d.mode, d.max_var)
    }

    pub fn descriptor(&self) -> ScheduleDescriptor {
        ScheduleDescriptor {
            num_timesteps: self.steps,
            mode: self.mode,
            max_var: self.scale / 2.0,
        }
    }

    pub fn num_timesteps(&self) -> usize {
        self.steps
    }

    pub fn mode(&self) -> MtMode {
        self.mode
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn m(&self, t: usize) -> f64 {
        self.m[t]
    }

    pub fn delta(&self, t: usize) -> f64 {
        self.delta[t]
    }

    /// δ_{t|t−1}; zero at t = 0.
    pub fn delta_cond(&self, t: usize) -> f64 {
        self.delta_cond[t]
    }

    pub fn m_values(&self) -> &[f64] {
        &self.m
    }

    pub fn delta_values(&self) -> &[f64] {
        &self.delta
    }

    /// Conditional variance of x_from given x_to (to < from).
    pub fn delta_between(&self, t_from: usize, t_to: usize) -> f64 {
        conditional_variance(&self.m, &self.delta, t_from, t_to)
    }

    fn check(&self, t: usize) -> Result<()> {
        if t > self.steps {
            return Err(Error::Schedule(format!("timestep {t} outside [0, {}]", self.steps)));
        }
        Ok(())
    }
}

fn conditional_variance(m: &[f64], delta: &[f64], t_from: usize, t_to: usize) -> f64 {
    let ratio = (1.0 - m[t_from]) / (1.0 - m[t_to]);
    (delta[t_from] - delta[t_to] * ratio * ratio).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepSelection {
    Linear,
    Cosine,
}

impl std::str::FromStr for StepSelection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(StepSelection::Linear),
            "cosine" => Ok(StepSelection::Cosine),
            other => Err(Error::Config(format!("unknown step selection '{other}'"))),
        }
    }
}

impl std::fmt::Display for StepSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StepSelection::Linear => "linear",
            StepSelection::Cosine => "cosine",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub sample_steps: usize,
    pub eta: f64,
    pub step_selection: StepSelection,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            sample_steps: 20,
            eta: 0.0,
            step_selection: StepSelection::Linear,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self, schedule: &BridgeSchedule) -> Result<()> {
        if self.sample_steps < 2 || self.sample_steps > schedule.num_timesteps() {
            return Err(Error::InvalidArgument(format!(
                "sample_steps must be in [2, {}], got {}",
                schedule.num_timesteps(),
                self.sample_steps
            )));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidArgument(format!(
                "eta must be in [0, 1], got {}",
                self.eta
            )));
        }
        Ok(())
    }

    /// Strictly decreasing timesteps from T to 0 (inclusive); consecutive
    /// entries are the (t_from, t_to) pairs of the reverse chain.
    pub fn timesteps(&self, schedule: &BridgeSchedule) -> Vec<usize> {
        let t_max = schedule.num_timesteps() as f64;
        let n = self.sample_steps;
        let mut out: Vec<usize> = (0..=n)
            .map(|k| {
                let u = 1.0 - k as f64 / n as f64;
                let t = match self.step_selection {
                    StepSelection::Linear => u * t_max,
                    // denser near t = 0
                    StepSelection::Cosine => t_max * (1.0 - (0.5 * std::f64::consts::PI * u).cos()),
                };
                t.round() as usize
            })
            .collect();
        out.dedup();
        out
    }
}

/// Per-atom minimum-image displacement from the relaxed to the initial
/// geometry, zero on fixed atoms.
fn free_displacement(pair: &StructurePair) -> Vec<Vec3> {
    pair.displacement()
        .into_iter()
        .zip(&pair.initial.fixed)
        .map(|(d, &f)| if f { Vec3::zeros() } else { d })
        .collect()
}

fn draw_noise<R: Rng>(fixed: &[bool], rng: &mut R) -> Vec<Vec3> {
    fixed
        .iter()
        .map(|&f| {
            let v = Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            if f {
                Vec3::zeros()
            } else {
                v
            }
        })
        .collect()
}

/// Sample x_t from the bridge marginal. Returns wrapped positions and the
/// standard-normal draw (zero rows on fixed atoms).
pub fn forward_sample<R: Rng>(
    pair: &StructurePair,
    t: usize,
    schedule: &BridgeSchedule,
    rng: &mut R,
) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    schedule.check(t)?;
    let noise = draw_noise(&pair.relaxed.fixed, rng);
    let disp = free_displacement(pair);
    let (mt, sd) = (schedule.m(t), schedule.delta(t).sqrt());
    let lat = &pair.relaxed.lattice;
    let xt = pair
        .relaxed
        .positions
        .iter()
        .enumerate()
        .map(|(i, x)| {
            if pair.relaxed.fixed[i] {
                *x
            } else {
                wrap_position(&(x + disp[i] * mt + noise[i] * sd), lat)
            }
        })
        .collect();
    Ok((xt, noise))
}

/// Regression target m_t·Δ + sqrt(δ_t)·ε on free atoms, zero on fixed ones.
pub fn training_target(pair: &StructurePair, t: usize, noise: &[Vec3], schedule: &BridgeSchedule) -> Result<Vec<Vec3>> {
    schedule.check(t)?;
    if noise.len() != pair.relaxed.len() {
        return Err(Error::Shape(format!(
            "noise has {} rows, structure has {} atoms",
            noise.len(),
            pair.relaxed.len()
        )));
    }
    let (mt, sd) = (schedule.m(t), schedule.delta(t).sqrt());
    Ok(free_displacement(pair)
        .into_iter()
        .zip(noise)
        .zip(&pair.relaxed.fixed)
        .map(|((d, e), &f)| if f { Vec3::zeros() } else { d * mt + e * sd })
        .collect())
}

/// Predicts the training target from a noisy state.
pub trait Denoiser {
    /// `state` carries the positions x_t; returns one 3-vector per atom.
    fn predict(&self, state: &Structure, t: usize, schedule: &BridgeSchedule) -> Result<Vec<Vec3>>;
}

/// Denoiser that always predicts zero displacement.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn predict(&self, state: &Structure, _t: usize, _schedule: &BridgeSchedule) -> Result<Vec<Vec3>> {
        Ok(vec![Vec3::zeros(); state.len()])
    }
}

/// One reverse transition x_{t_from} → x_{t_to}.
///
/// `x̂ = x_t − ε̂` estimates the relaxed geometry, `r̃ = mic(y − x̂)`, and
/// `μ = x̂ + m_to·r̃ + c·mic(x_t − (x̂ + m_from·r̃))` with
/// `c = sqrt((δ_to − σ²)/δ_from)` (taken as 0 when δ_from = 0) and
/// `σ = η·sqrt(δ_{from|to}·δ_to/δ_from)`.
#[allow(clippy::too_many_arguments)]
pub fn reverse_step<R: Rng>(
    x_t: &[Vec3],
    t_from: usize,
    t_to: usize,
    eps_pred: &[Vec3],
    initial: &Structure,
    schedule: &BridgeSchedule,
    eta: f64,
    rng: &mut R,
) -> Result<Vec<Vec3>> {
    schedule.check(t_from)?;
    schedule.check(t_to)?;
    if t_to >= t_from {
        return Err(Error::Schedule(format!(
            "reverse step needs t_to < t_from, got {t_from} -> {t_to}"
        )));
    }
    let n = initial.len();
    if x_t.len() != n || eps_pred.len() != n {
        return Err(Error::Shape(format!(
            "reverse step: {} positions and {} predictions for {n} atoms",
            x_t.len(),
            eps_pred.len()
        )));
    }
    let lat = &initial.lattice;
    let (m_from, m_to) = (schedule.m(t_from), schedule.m(t_to));
    let (d_from, d_to) = (schedule.delta(t_from), schedule.delta(t_to));
    let (sigma, coef) = if d_from > 0.0 {
        let sigma = eta * (schedule.delta_between(t_from, t_to) * d_to / d_from).sqrt();
        let coef = ((d_to - sigma * sigma).max(0.0) / d_from).sqrt();
        (sigma, coef)
    } else {
        (0.0, 0.0)
    };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if initial.fixed[i] {
            out.push(initial.positions[i]);
            continue;
        }
        let x_hat = x_t[i] - eps_pred[i];
        if t_to == 0 {
            out.push(wrap_position(&x_hat, lat));
            continue;
        }
        let r = lat.mic_displacement(&x_hat, &initial.positions[i]);
        let drift = lat.mic_displacement(&(x_hat + r * m_from), &x_t[i]);
        let mut mu = x_hat + r * m_to + drift * coef;
        if sigma > 0.0 {
            let z = Vec3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            mu += z * sigma;
        }
        out.push(wrap_position(&mu, lat));
    }
    Ok(out)
}

/// Run the reverse chain from x_T = y down to t = 0.
pub fn generate<D: Denoiser + ?Sized>(
    initial: &Structure,
    denoiser: &D,
    schedule: &BridgeSchedule,
    sampler: &SamplerConfig,
) -> Result<Structure> {
    sampler.validate(schedule)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let steps = sampler.timesteps(schedule);
    let mut state = initial.clone();
    for w in steps.windows(2) {
        let (t_from, t_to) = (w[0], w[1]);
        let eps = denoiser.predict(&state, t_from, schedule)?;
        let next = reverse_step(
            &state.positions,
            t_from,
            t_to,
            &eps,
            initial,
            schedule,
            sampler.eta,
            &mut rng,
        )?;
        state.positions = next;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::testutil::random_structure;
    use crate::geometry::{wrap_into_cell, Lattice};
    use proptest::prelude::*;
    use rand::Rng;

    fn pair_from(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> StructurePair {
        let relaxed = wrap_into_cell(&random_structure(rng, n));
        let mut initial = relaxed.clone();
        for i in 0..n {
            if !initial.fixed[i] {
                initial.positions[i] += Vec3::new(
                    rng.gen_range(-shift..shift),
                    rng.gen_range(-shift..shift),
                    rng.gen_range(-shift..shift),
                );
            }
        }
        let initial = wrap_into_cell(&initial);
        StructurePair::new(initial, relaxed, "O", "111").unwrap()
    }

    fn mod_lattice_dist(lat: &Lattice, a: &[Vec3], b: &[Vec3]) -> f64 {
        a.iter().zip(b).map(|(p, q)| lat.mic_distance(p, q)).fold(0.0, f64::max)
    }

    #[test]
    fn linear_midpoint_and_peak_variance() {
        let s = BridgeSchedule::new(100, MtMode::Linear, 0.1).unwrap();
        assert_eq!(s.m(50), 0.5);
        assert!((s.delta(50) - 0.05).abs() < 1e-15);
        let peak = s.delta_values().iter().cloned().fold(0.0, f64::max);
        assert_eq!(peak, s.delta(50));
        assert_eq!(s.delta(0), 0.0);
        assert_eq!(s.delta(100), 0.0);
    }

    #[test]
    fn max_var_knob() {
        let s = BridgeSchedule::with_max_var(100, MtMode::Linear, 0.05).unwrap();
        assert!((s.scale() - 0.1).abs() < 1e-15);
        assert!((s.delta(50) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn cosine_schedule_scan() {
        let s = BridgeSchedule::new(100, MtMode::Cosine, 0.1).unwrap();
        assert_eq!(s.m(0), 0.0);
        assert_eq!(s.m(100), 1.0);
        assert!((s.m(50) - 0.5).abs() < 1e-15);
        assert!(s.m(25) < 0.25);
        for t in 1..=100 {
            assert!(s.m(t) >= s.m(t - 1));
            assert!(s.delta(t) >= 0.0);
            assert!(s.delta_cond(t) >= 0.0);
        }
    }

    #[test]
    fn schedule_errors() {
        assert!(BridgeSchedule::new(1, MtMode::Linear, 0.1).is_err());
        assert!(BridgeSchedule::new(10, MtMode::Linear, -0.1).is_err());
    }

    #[test]
    fn conditional_variance_matches_definition() {
        let s = BridgeSchedule::new(100, MtMode::Linear, 0.1).unwrap();
        for t in 1..100 {
            let r = (1.0 - s.m(t)) / (1.0 - s.m(t - 1));
            let expected = s.delta(t) - s.delta(t - 1) * r * r;
            assert!((s.delta_cond(t) - expected.max(0.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pair = pair_from(&mut rng, 10, 0.8);
        let s = BridgeSchedule::new(100, MtMode::Linear, 0.1).unwrap();
        let (x0, _) = forward_sample(&pair, 0, &s, &mut rng).unwrap();
        assert_eq!(x0, pair.relaxed.positions);
        let (xt, _) = forward_sample(&pair, 100, &s, &mut rng).unwrap();
        assert!(mod_lattice_dist(&pair.initial.lattice, &xt, &pair.initial.positions) < 1e-12);
    }

    #[test]
    fn targets_at_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pair = pair_from(&mut rng, 8, 0.5);
        let s = BridgeSchedule::new(100, MtMode::Linear, 0.1).unwrap();
        let (_, noise) = forward_sample(&pair, 30, &s, &mut rng).unwrap();
        let t0 = training_target(&pair, 0, &noise, &s).unwrap();
        assert!(t0.iter().all(|v| v.norm() == 0.0));
        let zero = vec![Vec3::zeros(); 8];
        let tt = training_target(&pair, 100, &zero, &s).unwrap();
        for (i, d) in pair.displacement().iter().enumerate() {
            let want = if pair.relaxed.fixed[i] { Vec3::zeros() } else { *d };
            assert!((tt[i] - want).norm() < 1e-15);
        }
        let same = StructurePair::new(pair.relaxed.clone(), pair.relaxed.clone(), "O", "111").unwrap();
        let tt = training_target(&same, 40, &noise, &s).unwrap();
        for (a, e) in tt.iter().zip(&noise) {
            assert!((a - e * s.delta(40).sqrt()).norm() < 1e-15);
        }
    }

    #[test]
    fn forward_keeps_fixed_atoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pair = pair_from(&mut rng, 12, 0.5);
        let s = BridgeSchedule::new(100, MtMode::Linear, 0.1).unwrap();
        let (xt, noise) = forward_sample(&pair, 37, &s, &mut rng).unwrap();
        for i in 0..12 {
            if pair.relaxed.fixed[i] {
                assert_eq!(xt[i], pair.relaxed.positions[i]);
                assert_eq!(noise[i], Vec3::zeros());
            }
        }
    }

    #[test]
    fn zero_denoiser_returns_initial() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pair = pair_from(&mut rng, 10, 0.6);
        let s = BridgeSchedule::new(100, MtMode::Linear, 0.1).unwrap();
        for eta_steps in [(0.0, 20), (0.0, 100), (0.0, 7)] {
            let cfg = SamplerConfig {
                sample_steps: eta_steps.1,
                eta: eta_steps.0,
                ..Default::default()
            };
            let out = generate(&pair.initial, &ZeroDenoiser, &s, &cfg).unwrap();
            assert!(mod_lattice_dist(&s_lat(&pair), &out.positions, &pair.initial.positions) < 1e-8);
        }
    }

    fn s_lat(pair: &StructurePair) -> Lattice {
        pair.initial.lattice.clone()
    }

    /// Denoiser that knows the relaxed structure and returns the noise-free
    /// target m_t·Δ.
    struct Oracle<'a>(&'a StructurePair);

    impl Denoiser for Oracle<'_> {
        fn predict(&self, _state: &Structure, t: usize, schedule: &BridgeSchedule) -> Result<Vec<Vec3>> {
            let zero = vec![Vec3::zeros(); self.0.relaxed.len()];
            training_target(self.0, t, &zero, schedule)
        }
    }

    #[test]
    fn exact_target_recovers_relaxed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for mode in [MtMode::Linear, MtMode::Cosine] {
            let pair = pair_from(&mut rng, 12, 1.5);
            let s = BridgeSchedule::new(100, mode, 0.1).unwrap();
            for steps in [20, 100, 3] {
                let cfg = SamplerConfig {
                    sample_steps: steps,
                    ..Default::default()
                };
                let out = generate(&pair.initial, &Oracle(&pair), &s, &cfg).unwrap();
                assert!(mod_lattice_dist(&pair.relaxed.lattice, &out.positions, &pair.relaxed.positions) < 1e-8);
            }
        }
    }

    #[test]
    fn last_step_returns_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pair = pair_from(&mut rng, 6, 0.3);
        let s = BridgeSchedule::new(100, MtMode::Linear, 0.1).unwrap();
        let eps: Vec<Vec3> = (0..6).map(|i| Vec3::new(0.01 * i as f64, 0.0, -0.02)).collect();
        let out = reverse_step(&pair.initial.positions, 5, 0, &eps, &pair.initial, &s, 1.0, &mut rng).unwrap();
        for i in 0..6 {
            let want = if pair.initial.fixed[i] {
                pair.initial.positions[i]
            } else {
                wrap_position(&(pair.initial.positions[i] - eps[i]), &pair.initial.lattice)
            };
            assert_eq!(out[i], want);
        }
    }

    #[test]
    fn reverse_step_rejects_bad_times() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pair = pair_from(&mut rng, 4, 0.3);
        let s = BridgeSchedule::new(10, MtMode::Linear, 0.1).unwrap();
        let eps = vec![Vec3::zeros(); 4];
        assert!(reverse_step(&pair.initial.positions, 11, 0, &eps, &pair.initial, &s, 0.0, &mut rng).is_err());
        assert!(reverse_step(&pair.initial.positions, 3, 3, &eps, &pair.initial, &s, 0.0, &mut rng).is_err());
    }

    #[test]
    fn eta_zero_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pair = pair_from(&mut rng, 10, 0.5);
        let s = BridgeSchedule::new(100, MtMode::Linear, 0.1).unwrap();
        let oracle = Oracle(&pair);
        let a = generate(
            &pair.initial,
            &oracle,
            &s,
            &SamplerConfig {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let b = generate(
            &pair.initial,
            &oracle,
            &s,
            &SamplerConfig {
                seed: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_step_sampler_matches_manual_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pair = pair_from(&mut rng, 8, 0.5);
        let s = BridgeSchedule::new(20, MtMode::Linear, 0.1).unwrap();
        let cfg = SamplerConfig {
            sample_steps: 20,
            eta: 0.5,
            seed: 3,
            ..Default::default()
        };
        assert_eq!(cfg.timesteps(&s), (0..=20).rev().collect::<Vec<_>>());
        let oracle = Oracle(&pair);
        let out = generate(&pair.initial, &oracle, &s, &cfg).unwrap();
        let mut chain_rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = pair.initial.positions.clone();
        for t in (1..=20).rev() {
            let state = pair.initial.with_positions(x.clone());
            let eps = oracle.predict(&state, t, &s).unwrap();
            x = reverse_step(&x, t, t - 1, &eps, &pair.initial, &s, 0.5, &mut chain_rng).unwrap();
        }
        assert_eq!(out.positions, x);
    }

    #[test]
    fn step_selection_endpoints() {
        let s = BridgeSchedule::new(100, MtMode::Linear, 0.1).unwrap();
        for sel in [StepSelection::Linear, StepSelection::Cosine] {
            let cfg = SamplerConfig {
                step_selection: sel,
                ..Default::default()
            };
            let ts = cfg.timesteps(&s);
            assert_eq!(ts[0], 100);
            assert_eq!(*ts.last().unwrap(), 0);
            assert!(ts.windows(2).all(|w| w[0] > w[1]));
        }
        let lin = SamplerConfig::default().timesteps(&s);
        assert_eq!(lin.len(), 21);
        assert_eq!(lin[1], 95);
    }

    #[test]
    fn forward_marginal_statistics() {
        // one free atom, many draws at the bridge midpoint
        let lat = Lattice::slab([[10.0, 0.0, 0.0], [0.0, 10.0, 0.0], [0.0, 0.0, 30.0]]).unwrap();
        let x = Structure::new(
            "m",
            vec![8],
            vec![Vec3::new(4.0, 4.0, 10.0)],
            vec![false],
            vec![true],
            lat,
        )
        .unwrap();
        let mut y = x.clone();
        y.positions[0] = Vec3::new(4.6, 3.8, 10.4);
        let pair = StructurePair::new(y, x, "O", "111").unwrap();
        let s = BridgeSchedule::new(100, MtMode::Linear, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 100_000;
        let t = 50;
        let mean_target = pair.relaxed.positions[0] + pair.displacement()[0] * s.m(t);
        let mut sum = Vec3::zeros();
        let mut sq = Vec3::zeros();
        for _ in 0..n {
            let (xt, _) = forward_sample(&pair, t, &s, &mut rng).unwrap();
            let d = pair.relaxed.lattice.mic_displacement(&mean_target, &xt[0]);
            sum += d;
            sq += d.component_mul(&d);
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean.component_mul(&mean);
        let tol = 4.0 * (s.delta(t) / n as f64).sqrt();
        for k in 0..3 {
            assert!(mean[k].abs() < tol, "mean {k}: {}", mean[k]);
            assert!((var[k] / s.delta(t) - 1.0).abs() < 0.05, "var {k}: {}", var[k]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn lattice_translation_leaves_sampler_unchanged(seed in 0u64..1000, k1 in -2i32..3, k2 in -2i32..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pair = pair_from(&mut rng, 8, 0.5);
            let s = BridgeSchedule::new(100, MtMode::Linear, 0.1).unwrap();
            let shift = pair.initial.lattice.shift_vector([k1, k2, 0]);
            let moved = StructurePair::new(
                pair.initial.translated(&shift),
                pair.relaxed.translated(&shift),
                "O",
                "111",
            ).unwrap();
            let mut r1 = ChaCha8Rng::seed_from_u64(seed);
            let mut r2 = ChaCha8Rng::seed_from_u64(seed);
            let (a, _) = forward_sample(&pair, 40, &s, &mut r1).unwrap();
            let (b, _) = forward_sample(&moved, 40, &s, &mut r2).unwrap();
            prop_assert!(mod_lattice_dist(&pair.initial.lattice, &a, &b) < 1e-9);
        }
    }
}
