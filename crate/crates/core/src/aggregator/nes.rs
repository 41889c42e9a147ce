use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::AggError;
use crate::linalg::{mean, norm2, std_pop};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NesConfig {
    pub alpha: f64,
    pub sigma: f64,
    /// Rollouts per update (`N`).
    pub population: usize,
    /// Subtract the mean return before weighting the noise vectors.
    pub center_returns: bool,
}

impl Default for NesConfig {
    fn default() -> Self {
        Self { alpha: 0.01, sigma: 0.01, population: 4, center_returns: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub eps: Vec<f64>,
    pub ret: f64,
}

/// Summary of one parameter update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NesUpdate {
    pub sigma_r: f64,
    pub step_norm: f64,
    pub returns: Vec<f64>,
    pub applied: bool,
}

/// `θ ← θ + α/(N·σ_R) Σ_d F_d ε_d`, where `σ_R` is the standard deviation
/// of the returns. Skipped when the returns are degenerate or when there
/// was no exploration noise.
pub fn nes_update(theta: &mut [f64], rollouts: &[Rollout], cfg: &NesConfig) -> Result<NesUpdate, AggError> {
    if rollouts.len() != cfg.population {
        return Err(AggError::RolloutCount { got: rollouts.len(), expected: cfg.population });
    }
    if let Some(r) = rollouts.iter().find(|r| r.eps.len() != theta.len()) {
        return Err(AggError::Dimension { got: r.eps.len(), expected: theta.len() });
    }
    let returns: Vec<f64> = rollouts.iter().map(|r| r.ret).collect();
    let sigma_r = std_pop(&returns);
    if sigma_r < 1e-9 || cfg.sigma == 0.0 {
        return Ok(NesUpdate { sigma_r, step_norm: 0.0, returns, applied: false });
    }
    let baseline = if cfg.center_returns { mean(&returns) } else { 0.0 };
    let scale = cfg.alpha / (cfg.population as f64 * sigma_r);
    let mut step = vec![0.0; theta.len()];
    for r in rollouts {
        let w = scale * (r.ret - baseline);
        for (s, e) in step.iter_mut().zip(&r.eps) {
            *s += w * e;
        }
    }
    for (t, s) in theta.iter_mut().zip(&step) {
        *t += s;
    }
    Ok(NesUpdate { sigma_r, step_norm: norm2(&step), returns, applied: true })
}

/// Exploration state: noise generator and rollouts awaiting an update.
#[derive(Debug, Clone)]
pub struct NesState {
    pub config: NesConfig,
    pub pending: Vec<Rollout>,
    pub updates: usize,
    rng: ChaCha8Rng,
}

/// Serializable form of [`NesState`], including the generator position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NesCheckpoint {
    pub config: NesConfig,
    pub pending: Vec<Rollout>,
    pub updates: usize,
    pub rng_seed: [u8; 32],
    pub rng_stream: u64,
    pub rng_word_pos: u128,
}

impl NesState {
    pub fn new(config: NesConfig, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { config, pending: Vec::new(), updates: 0, rng }
    }

    /// Standard-normal noise vector of length `dim`.
    pub fn sample(&mut self, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| StandardNormal.sample(&mut self.rng)).collect()
    }

    /// Records one rollout; fires an update on `theta` once `N` are pending.
    pub fn push(&mut self, theta: &mut [f64], rollout: Rollout) -> Result<Option<NesUpdate>, AggError> {
        self.pending.push(rollout);
        if self.pending.len() < self.config.population {
            return Ok(None);
        }
        let rollouts = std::mem::take(&mut self.pending);
        let up = nes_update(theta, &rollouts, &self.config)?;
        self.updates += 1;
        Ok(Some(up))
    }

    pub fn checkpoint(&self) -> NesCheckpoint {
        NesCheckpoint {
            config: self.config,
            pending: self.pending.clone(),
            updates: self.updates,
            rng_seed: self.rng.get_seed(),
            rng_stream: self.rng.get_stream(),
            rng_word_pos: self.rng.get_word_pos(),
        }
    }

    pub fn restore(c: &NesCheckpoint) -> Self {
        let mut rng = ChaCha8Rng::from_seed(c.rng_seed);
        rng.set_stream(c.rng_stream);
        rng.set_word_pos(c.rng_word_pos);
        Self { config: c.config, pending: c.pending.clone(), updates: c.updates, rng }
    }
}
