//! Dual variables of the constrained problem: reward shaping, Monte-Carlo
//! constraint estimates, projected dual subgradient steps and the model
//! checkpoint test.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Commodity;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DualError {
    #[error("no episodes to estimate from")]
    NoEpisodes,
    #[error("expected {expected} commodities, got {got}")]
    Width { expected: usize, got: usize },
}

/// How the initial multipliers are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaInit {
    /// `λ₀ = scale · √(b̄ δ)` per commodity.
    RateScaled { scale: f64 },
    Fixed(Vec<f64>),
}

impl Default for LambdaInit {
    fn default() -> Self {
        LambdaInit::RateScaled { scale: 1.25 }
    }
}

impl LambdaInit {
    pub fn values(&self, commodities: &[Commodity]) -> Vec<f64> {
        match self {
            LambdaInit::RateScaled { scale } => {
                commodities.iter().map(|c| scale * (c.mean_rate * c.reliability).sqrt()).collect()
            }
            LambdaInit::Fixed(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DualConfig {
    /// Dual step size, shared by all commodities unless `eta_per_commodity` is set.
    pub eta: f64,
    pub eta_per_commodity: Option<Vec<f64>>,
    pub lambda_init: LambdaInit,
    /// Window length `K` for the checkpoint statistics.
    pub window: usize,
    /// Threshold on the per-commodity standard deviation of λ over the window.
    pub sigma_threshold: f64,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            eta: 0.005,
            eta_per_commodity: None,
            lambda_init: LambdaInit::default(),
            window: 100,
            sigma_threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
    /// Completed dual updates.
    pub iteration: u64,
    window: usize,
    sigma_threshold: f64,
    lambda_history: VecDeque<Vec<f64>>,
    reward_window: VecDeque<f64>,
    best_window_mean: f64,
}

impl DualState {
    pub fn new(lambda: Vec<f64>, eta: Vec<f64>, window: usize, sigma_threshold: f64) -> Self {
        assert_eq!(lambda.len(), eta.len(), "one step size per multiplier");
        Self {
            lambda,
            eta,
            iteration: 0,
            window: window.max(1),
            sigma_threshold,
            lambda_history: VecDeque::new(),
            reward_window: VecDeque::new(),
            best_window_mean: f64::NEG_INFINITY,
        }
    }

    pub fn init(commodities: &[Commodity], config: &DualConfig) -> Self {
        let lambda = config.lambda_init.values(commodities);
        let eta = config.eta_per_commodity.clone().unwrap_or_else(|| vec![config.eta; commodities.len()]);
        Self::new(lambda, eta, config.window, config.sigma_threshold)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn best_window_mean(&self) -> f64 {
        self.best_window_mean
    }

    /// `λ ← [λ − η m̂]⁺`, then record λ in the history window.
    pub fn dual_update(&mut self, mhat: &[f64]) -> Result<(), DualError> {
        if mhat.len() != self.lambda.len() {
            return Err(DualError::Width { expected: self.lambda.len(), got: mhat.len() });
        }
        for ((l, &eta), &m) in self.lambda.iter_mut().zip(&self.eta).zip(mhat) {
            *l = (*l - eta * m).max(0.0);
        }
        self.iteration += 1;
        push_bounded(&mut self.lambda_history, self.lambda.clone(), self.window);
        Ok(())
    }

    /// Record the mean reward of one policy iteration.
    pub fn record_reward(&mut self, mean_reward: f64) {
        push_bounded(&mut self.reward_window, mean_reward, self.window);
    }

    /// Standard deviation of each λ component over the history window.
    pub fn lambda_std(&self) -> Vec<f64> {
        let n = self.lambda_history.len();
        (0..self.lambda.len())
            .map(|c| {
                if n == 0 {
                    return 0.0;
                }
                let mean = self.lambda_history.iter().map(|h| h[c]).sum::<f64>() / n as f64;
                let var = self.lambda_history.iter().map(|h| (h[c] - mean).powi(2)).sum::<f64>() / n as f64;
                var.sqrt()
            })
            .collect()
    }

    pub fn reward_window_mean(&self) -> Option<f64> {
        (!self.reward_window.is_empty())
            .then(|| self.reward_window.iter().sum::<f64>() / self.reward_window.len() as f64)
    }

    /// Feasibility, λ stability and reward improvement. Needs a full window
    /// of history; a passing check raises the best-window record.
    pub fn checkpoint_ok(&mut self, mhat: &[f64]) -> bool {
        if self.lambda_history.len() < self.window || self.reward_window.len() < self.window {
            return false;
        }
        let feasible = mhat.iter().all(|&m| m >= 0.0);
        let stable = self.lambda_std().iter().all(|&s| s < self.sigma_threshold);
        let mean = self.reward_window_mean().unwrap();
        let improved = mean > self.best_window_mean;
        let ok = feasible && stable && improved;
        if ok {
            self.best_window_mean = mean;
        }
        ok
    }
}

fn push_bounded<T>(q: &mut VecDeque<T>, v: T, cap: usize) {
    if q.len() == cap {
        q.pop_front();
    }
    q.push_back(v);
}

/// Shaped per-step reward `−m0_norm + Σ λ^c m^c`.
pub fn reward(cost_normalized: f64, throughput: &[f64], lambda: &[f64]) -> f64 {
    -cost_normalized + lambda.iter().zip(throughput).map(|(l, m)| l * m).sum::<f64>()
}

pub fn discounted_sum(values: impl IntoIterator<Item = f64>, gamma: f64) -> f64 {
    let mut acc = 0.0;
    let mut weight = 1.0;
    for v in values {
        acc += weight * v;
        weight *= gamma;
    }
    acc
}

/// Mean over episodes of `Σ_t γ^t m^c(t)`; `episodes[e][t][c]`.
pub fn estimate_mhat(episodes: &[Vec<Vec<f64>>], gamma: f64) -> Result<Vec<f64>, DualError> {
    let first = episodes.first().ok_or(DualError::NoEpisodes)?;
    let width = first.first().map_or(0, |s| s.len());
    let mut total = vec![0.0; width];
    for ep in episodes {
        for c in 0..width {
            total[c] += discounted_sum(ep.iter().map(|step| step[c]), gamma);
        }
    }
    Ok(total.into_iter().map(|s| s / episodes.len() as f64).collect())
}
