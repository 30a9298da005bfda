//! ε-prediction training with Adam.

use ndarray::{Array2, ArrayViewMut1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::sampler::standard_normal;
use crate::diffusion::{DenoiserModel, NetworkConfig, NoiseSchedule};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    /// Cosine decay from `learning_rate` down to this fraction of it.
    pub final_lr_fraction: f64,
    pub seed: u64,
    pub network: NetworkConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            steps: 2000,
            learning_rate: 1e-3,
            final_lr_fraction: 0.1,
            seed: 0,
            network: NetworkConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.steps == 0 {
            return Err(Error::InvalidInput("batch size and step count must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!("bad learning rate {}", self.learning_rate)));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(Error::InvalidInput("final_lr_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, step: usize) -> f64 {
        let progress = step as f64 / self.steps.max(1) as f64;
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.learning_rate * (self.final_lr_fraction + (1.0 - self.final_lr_fraction) * cos)
    }
}

/// Source of clean training rows, optionally with a condition vector.
pub trait TrainingSource {
    fn dim(&self) -> usize;

    fn cond_dim(&self) -> usize {
        0
    }

    /// Fills one clean row (and its condition) drawn from the data.
    fn sample(&self, rng: &mut ChaCha8Rng, x: ArrayViewMut1<f64>, cond: ArrayViewMut1<f64>);
}

/// Uniform draws from a fixed set of rows.
pub struct VectorDataset<'a> {
    rows: &'a [Vec<f64>],
}

impl<'a> VectorDataset<'a> {
    pub fn new(rows: &'a [Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidInput("training dataset is empty".into()))?;
        if first.is_empty() {
            return Err(Error::InvalidInput("training rows are empty".into()));
        }
        for r in rows {
            crate::error::ensure_len("training row", first.len(), r.len())?;
        }
        Ok(Self { rows })
    }
}

impl TrainingSource for VectorDataset<'_> {
    fn dim(&self) -> usize {
        self.rows[0].len()
    }

    fn sample(&self, rng: &mut ChaCha8Rng, mut x: ArrayViewMut1<f64>, _cond: ArrayViewMut1<f64>) {
        let row = &self.rows[rng.random_range(0..self.rows.len())];
        x.iter_mut().zip(row).for_each(|(d, s)| *d = *s);
    }
}

/// Adam with bias correction.
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(params: &[Array2<f64>]) -> Self {
        let zeros = || params.iter().map(|p| Array2::zeros(p.dim())).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn update(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: DenoiserModel,
    /// Batch loss per step.
    pub losses: Vec<f64>,
}

/// Trains `ε_θ` to predict the noise that produced `x_t` from clean rows,
/// with `t` uniform on `1..=t_max`. Weights are rounded to `f32` at the end.
pub fn train_from_source<S: TrainingSource + ?Sized>(
    source: &S,
    config: &TrainConfig,
    schedule: &NoiseSchedule,
) -> Result<TrainedModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (dim, cdim, b) = (source.dim(), source.cond_dim(), config.batch_size);
    let mut model = DenoiserModel::new(dim, cdim, config.network, schedule, &mut rng)?;
    let mut adam = Adam::new(model.params());
    let mut losses = Vec::with_capacity(config.steps);
    let mut x0 = Array2::<f64>::zeros((b, dim));
    let mut cond = Array2::<f64>::zeros((b, cdim));
    for step in 0..config.steps {
        for (x, c) in x0.axis_iter_mut(Axis(0)).zip(cond.axis_iter_mut(Axis(0))) {
            source.sample(&mut rng, x, c);
        }
        let ts: Vec<usize> = (0..b).map(|_| rng.random_range(1..=schedule.t_max())).collect();
        let noise = standard_normal(&mut rng, b, dim);
        let mut xt = x0.clone();
        for ((mut row, n), &t) in xt.axis_iter_mut(Axis(0)).zip(noise.axis_iter(Axis(0))).zip(&ts) {
            let ab = schedule.alpha_bar(t);
            let (a, s) = (ab.sqrt(), (1.0 - ab).sqrt());
            row.zip_mut_with(&n, |x, n| *x = a * *x + s * n);
        }
        let c = (cdim > 0).then(|| cond.view());
        let (loss, grads) = model.loss_and_grad(xt.view(), &ts, c, noise.view())?;
        if !loss.is_finite() {
            return Err(Error::FittingDiverged { iteration: step, loss });
        }
        adam.update(model.params_mut(), &grads, config.learning_rate_at(step));
        losses.push(loss);
        if step % 500 == 0 {
            log::debug!("train step {step}: loss {loss:.5}");
        }
    }
    model.round_to_f32();
    Ok(TrainedModel { model, losses })
}

/// [`train_from_source`] over a fixed set of clean vectors.
pub fn train_denoiser(rows: &[Vec<f64>], config: &TrainConfig, schedule: &NoiseSchedule) -> Result<TrainedModel> {
    train_from_source(&VectorDataset::new(rows)?, config, schedule)
}
