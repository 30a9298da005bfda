use serde::{Deserialize, Serialize};

use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};

/// Adam settings for the two inner optimization problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    /// Cosine decay from `learning_rate` down to this fraction of it.
    pub final_lr_fraction: f64,
}

impl OptimConfig {
    fn with(learning_rate: f64, iterations: usize) -> Self {
        Self {
            learning_rate,
            iterations,
            final_lr_fraction: 1.0,
        }
    }

    pub fn learning_rate_at(&self, step: usize) -> f64 {
        let progress = step as f64 / self.iterations.max(1) as f64;
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.learning_rate * (self.final_lr_fraction + (1.0 - self.final_lr_fraction) * cos)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!("{what}: bad learning rate {}", self.learning_rate)));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(Error::InvalidInput(format!("{what}: final_lr_fraction must lie in [0, 1]")));
        }
        Ok(())
    }
}

/// Weights of the fitting objective `λ_r L_recon + λ_m L_mag + λ_s L_smooth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitWeights {
    pub recon: f64,
    pub magnitude: f64,
    pub smoothness: f64,
}

impl Default for FitWeights {
    fn default() -> Self {
        Self {
            recon: 1.0,
            magnitude: 1.0,
            smoothness: 1.0,
        }
    }
}

/// Weights of the temporal-refinement objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalWeights {
    pub distance: f64,
    pub velocity: f64,
    pub e_parallel: f64,
    pub e_perpendicular: f64,
}

impl Default for TemporalWeights {
    fn default() -> Self {
        Self {
            distance: 1.0,
            velocity: 1.0,
            e_parallel: 1.0,
            e_perpendicular: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConfig {
    /// Diffusion steps for the canonical-trajectory stage.
    pub t_motion: usize,
    /// Diffusion steps for the spatial-relation stage.
    pub t_spatial: usize,
    /// Diffusion steps for the temporal-relation stage.
    pub t_temporal: usize,
    pub temporal_opt: OptimConfig,
    pub temporal_weights: TemporalWeights,
    pub fitting: OptimConfig,
    pub fit_weights: FitWeights,
    /// Seed of the contact-point sampling, independent of the denoising rng.
    pub contact_seed: u64,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            t_motion: 400,
            t_spatial: 200,
            t_temporal: 100,
            temporal_opt: OptimConfig::with(1e-2, 300),
            temporal_weights: TemporalWeights::default(),
            fitting: OptimConfig::with(1e-2, 1000),
            fit_weights: FitWeights::default(),
            contact_seed: 0,
        }
    }
}

impl StageConfig {
    /// All diffusion stages disabled.
    pub fn passthrough() -> Self {
        Self {
            t_motion: 0,
            t_spatial: 0,
            t_temporal: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self, schedule: &NoiseSchedule) -> Result<()> {
        for t in [self.t_motion, self.t_spatial, self.t_temporal] {
            schedule.check_step(t, 0)?;
        }
        if self.temporal_opt.iterations == 0 || self.fitting.iterations == 0 {
            return Err(Error::InvalidInput("iteration counts must be positive".into()));
        }
        self.temporal_opt.validate("temporal_opt")?;
        self.fitting.validate("fitting")
    }
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self::with(1e-2, 200)
    }
}
