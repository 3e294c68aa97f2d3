//! Gumbel-Max categorical sampling, the Gumbel-Softmax continuous
//! relaxation, and the temperature annealing schedule.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const SMOOTHING_EPS: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum GumbelError {
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("invalid categorical distribution: {0}")]
    InvalidDistribution(String),
}

/// A categorical distribution over K >= 2 classes.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDistribution {
    probs: Vec<f64>,
}

impl CategoricalDistribution {
    pub fn new(probs: Vec<f64>) -> Result<CategoricalDistribution, GumbelError> {
        if probs.len() < 2 {
            return Err(GumbelError::InvalidDistribution(format!(
                "need K >= 2 classes, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(GumbelError::InvalidDistribution(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(GumbelError::InvalidDistribution(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(CategoricalDistribution { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// (pi + eps) / sum(pi + eps), so zero entries survive the log.
    pub fn smoothed(&self) -> Vec<f64> {
        smooth(&self.probs)
    }
}

pub fn smooth(probs: &[f64]) -> Vec<f64> {
    let sum: f64 = probs.iter().map(|p| p + SMOOTHING_EPS).sum();
    probs.iter().map(|p| (p + SMOOTHING_EPS) / sum).collect()
}

/// Draws K i.i.d. Gumbel(0,1) values as -log(-log(u)).
pub fn gumbel_noise<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    (0..k)
        .map(|_| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            -(-u.ln()).ln()
        })
        .collect()
}

/// z = one-hot(argmax_i [g_i + log pi_i]) for a caller-supplied noise vector.
pub fn gumbel_max_with_noise(dist: &CategoricalDistribution, noise: &[f64]) -> Vec<f64> {
    let pi = dist.smoothed();
    let argmax = pi
        .iter()
        .zip(noise)
        .map(|(p, g)| g + p.ln())
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let mut z = vec![0.0; pi.len()];
    z[argmax] = 1.0;
    z
}

pub fn gumbel_max_sample<R: Rng + ?Sized>(
    dist: &CategoricalDistribution,
    rng: &mut R,
) -> Vec<f64> {
    let noise = gumbel_noise(rng, dist.len());
    gumbel_max_with_noise(dist, &noise)
}

/// y_i = exp((log pi_i + g_i)/tau) / sum_j exp((log pi_j + g_j)/tau),
/// computed with max-subtraction. Works on any non-negative weight vector,
/// smoothing zeros first.
pub fn gumbel_softmax_with_noise(
    probs: &[f64],
    tau: f64,
    noise: &[f64],
) -> Result<Vec<f64>, GumbelError> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(GumbelError::NonPositiveTemperature(tau));
    }
    let pi = smooth(probs);
    let logits: Vec<f64> = pi
        .iter()
        .zip(noise)
        .map(|(p, g)| (p.ln() + g) / tau)
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

pub fn gumbel_softmax_sample<R: Rng + ?Sized>(
    dist: &CategoricalDistribution,
    tau: f64,
    rng: &mut R,
) -> Result<Vec<f64>, GumbelError> {
    let noise = gumbel_noise(rng, dist.len());
    gumbel_softmax_with_noise(dist.probs(), tau, &noise)
}

/// Exponential decay from `tau_start` at epoch 0 down to `tau_min` at
/// `total_epochs`, clamped below at `tau_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub tau_start: f64,
    pub tau_min: f64,
    pub total_epochs: usize,
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        TemperatureSchedule {
            tau_start: 0.9,
            tau_min: 0.05,
            total_epochs: 500,
        }
    }
}

impl TemperatureSchedule {
    pub fn tau_at(&self, epoch: usize) -> f64 {
        if self.total_epochs == 0 {
            return self.tau_min;
        }
        let lambda = (self.tau_start / self.tau_min).ln() / self.total_epochs as f64;
        (self.tau_start * (-lambda * epoch as f64).exp()).max(self.tau_min)
    }
}
