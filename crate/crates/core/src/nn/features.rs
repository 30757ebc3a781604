//! Edge and time features fed to the message-passing blocks.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Polynomial cutoff envelope with u(0) = 1 and u(1) = u'(1) = u''(1) = 0.
/// Zero for x ≥ 1.
pub fn envelope(x: f64, p: u32) -> f64 {
    if x >= 1.0 {
        return 0.0;
    }
    let p = p as f64;
    let xp = x.powf(p);
    1.0 - (p + 1.0) * (p + 2.0) / 2.0 * xp + p * (p + 2.0) * xp * x - p * (p + 1.0) / 2.0 * xp * x * x
}

/// Gaussian centres μ_k = cutoff·(k+1)/num_rbf, k = 0..num_rbf.
pub fn rbf_centers(cutoff: f64, num_rbf: usize) -> Vec<f64> {
    (0..num_rbf).map(|k| cutoff * (k + 1) as f64 / num_rbf as f64).collect()
}

/// exp(−γ(d − μ_k)²)·u(d/cutoff) with γ = (num_rbf/cutoff)².
pub fn rbf_expand(d: f64, cutoff: f64, num_rbf: usize, envelope_exponent: u32) -> Result<Vec<f64>> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("rbf distance must be > 0, got {d}")));
    }
    if d >= cutoff {
        return Ok(vec![0.0; num_rbf]);
    }
    let gamma = (num_rbf as f64 / cutoff).powi(2);
    let env = envelope(d / cutoff, envelope_exponent);
    Ok(rbf_centers(cutoff, num_rbf)
        .into_iter()
        .map(|mu| (-gamma * (d - mu).powi(2)).exp() * env)
        .collect())
}

/// sin(2πk·f_c) for k = 1..n, then cos(2πk·f_c), for each component c.
pub fn fourier_frac_features(frac: [f64; 3], n_frequencies: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(6 * n_frequencies);
    for f in frac {
        // reduce to [-0.5, 0.5] before scaling by k
        let r = f - f.round();
        for k in 1..=n_frequencies {
            out.push((2.0 * PI * k as f64 * r).sin());
        }
        for k in 1..=n_frequencies {
            out.push((2.0 * PI * k as f64 * r).cos());
        }
    }
    out
}

/// Sinusoidal embedding of m_t ∈ [0, 1]; `dim` must be even.
pub fn time_embedding(m_t: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let arg = 1000.0 * m_t;
    let mut out = Vec::with_capacity(dim);
    let freq = |k: usize| (-(10000f64).ln() * k as f64 / half.max(1) as f64).exp();
    for k in 0..half {
        out.push((arg * freq(k)).sin());
    }
    for k in 0..half {
        out.push((arg * freq(k)).cos());
    }
    out
}
