//! Progressive three-stage denoising and the two inner optimizations.

pub mod config;
pub mod features;
pub mod fit;
pub mod models;
pub mod stages;

pub use config::{FitWeights, OptimConfig, StageConfig, TemporalWeights};
pub use fit::{fit_hand_parameters, FitResult};
pub use models::{train_stage_models, untrained_models, ModelTrainConfig, StageModels, TrainingLosses};
pub use stages::{run_motion_diff, run_spatial_diff, run_temporal_diff, temporal_optimize, TemporalOutcome};

use rand::Rng;

use crate::error::Result;
use crate::rep::{extract_generalized_contact_points, GeneOHRep};
use crate::scene::{HandParams, HandSkeleton, HoiSequence, Keypoints};

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub temporal_losses: Vec<f64>,
    pub temporal_stalled: bool,
    pub fit_losses: Vec<f64>,
    pub fit_initial_grad_norm: f64,
    pub fit_final_grad_norm: f64,
}

/// Every intermediate of one run of [`denoise_sequence`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseResult {
    pub stage1: Vec<Keypoints>,
    pub stage2: Vec<Keypoints>,
    pub stage3: Vec<Keypoints>,
    /// Representation after each stage.
    pub snapshots: [GeneOHRep; 3],
    pub hand_params: Vec<HandParams>,
    /// Keypoints of the fitted hand.
    pub keypoints: Vec<Keypoints>,
    pub diagnostics: Diagnostics,
}

impl DenoiseResult {
    pub fn stages(&self) -> [&[Keypoints]; 3] {
        [&self.stage1, &self.stage2, &self.stage3]
    }

    /// The denoised clip with the input's object trajectory.
    pub fn sequence(&self, input: &HoiSequence) -> Result<HoiSequence> {
        HoiSequence::new(
            self.keypoints.clone(),
            Some(self.hand_params.clone()),
            input.object.clone(),
            input.object_poses.clone(),
        )
    }
}

/// Contact extraction, then the motion, spatial and temporal stages, then
/// hand fitting. The object trajectory is taken as given, so the contact
/// frames are extracted once and shared by every stage.
pub fn denoise_sequence<R: Rng + ?Sized>(
    noisy: &HoiSequence,
    models: &StageModels,
    cfg: &StageConfig,
    rng: &mut R,
) -> Result<DenoiseResult> {
    cfg.validate(&models.schedule)?;
    models.validate()?;
    crate::error::ensure_len("clip frames", models.frames(), noisy.frames())?;
    let frames = extract_generalized_contact_points(noisy, &models.contact, cfg.contact_seed)?;
    let mut rep = GeneOHRep::from_keypoints(&noisy.keypoints, frames, models.temporal_params)?;
    let stage1 = run_motion_diff(&mut rep, models, cfg, rng)?;
    let snap1 = rep.clone();
    let stage2 = run_spatial_diff(&mut rep, models, cfg, rng)?;
    let snap2 = rep.clone();
    let temporal = run_temporal_diff(&mut rep, models, cfg, rng)?;
    let fit = fit_hand_parameters(&temporal.keypoints, &HandSkeleton::new(), &cfg.fitting, &cfg.fit_weights)?;
    Ok(DenoiseResult {
        stage1,
        stage2,
        stage3: temporal.keypoints,
        snapshots: [snap1, snap2, rep],
        hand_params: fit.params,
        keypoints: fit.keypoints,
        diagnostics: Diagnostics {
            temporal_losses: temporal.losses,
            temporal_stalled: temporal.stalled,
            fit_losses: fit.losses,
            fit_initial_grad_norm: fit.initial_grad_norm,
            fit_final_grad_norm: fit.final_grad_norm,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::NoiseSchedule;
    use crate::metrics::mpjpe;
    use crate::rep::{ContactConfig, TemporalParams};
    use crate::scene::{generate_synthetic_sequence, perturb_gaussian, GaussianNoise, SynthConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const FRAMES: usize = 8;

    fn clip(seed: u64) -> HoiSequence {
        let cfg = SynthConfig {
            frames: FRAMES,
            ..SynthConfig::default()
        };
        generate_synthetic_sequence(&cfg, seed).unwrap()
    }

    fn models() -> StageModels {
        let contact = ContactConfig {
            count: 32,
            ..ContactConfig::default()
        };
        untrained_models(FRAMES, contact, TemporalParams::default(), &NoiseSchedule::default()).unwrap()
    }

    fn max_error(a: &[Keypoints], b: &[Keypoints]) -> f64 {
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn passthrough_reproduces_clean_clip() {
        let seq = clip(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = denoise_sequence(&seq, &models(), &StageConfig::passthrough(), &mut rng).unwrap();
        assert_eq!(r.stage1.len(), FRAMES);
        assert!(max_error(&r.stage1, &seq.keypoints) < 1e-9);
        assert!(max_error(&r.stage2, &seq.keypoints) < 1e-9);
        assert!(max_error(&r.stage3, &seq.keypoints) < 1e-6);
        assert!(mpjpe(&r.keypoints, &seq.keypoints).unwrap() < 2.0);
        assert_eq!(r.hand_params.len(), FRAMES);
        assert!(r.sequence(&seq).is_ok());
    }

    #[test]
    fn zero_step_stages_leave_noisy_input_alone() {
        let noisy = perturb_gaussian(&clip(2), GaussianNoise::default(), 5).unwrap();
        let m = models();
        let cfg = StageConfig::passthrough();
        let frames = extract_generalized_contact_points(&noisy, &m.contact, 0).unwrap();
        let mut rep = GeneOHRep::from_keypoints(&noisy.keypoints, frames, m.temporal_params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s1 = run_motion_diff(&mut rep, &m, &cfg, &mut rng).unwrap();
        assert!(max_error(&s1, &noisy.keypoints) < 1e-9);
        let s2 = run_spatial_diff(&mut rep, &m, &cfg, &mut rng).unwrap();
        assert!(max_error(&s2, &noisy.keypoints) < 1e-9);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let noisy = perturb_gaussian(&clip(3), GaussianNoise::default(), 1).unwrap();
        let m = models();
        let cfg = StageConfig {
            t_motion: 20,
            t_spatial: 10,
            t_temporal: 5,
            temporal_opt: OptimConfig {
                iterations: 20,
                ..StageConfig::default().temporal_opt
            },
            fitting: OptimConfig {
                iterations: 50,
                ..StageConfig::default().fitting
            },
            ..StageConfig::default()
        };
        let run = |seed| denoise_sequence(&noisy, &m, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let (a, b, c) = (run(4), run(4), run(5));
        assert_eq!(a, b);
        assert_ne!(a.stage1, c.stage1);
        assert_eq!(a.snapshots[2].keypoints().unwrap().len(), FRAMES);
    }

    #[test]
    fn frame_count_mismatch_rejected() {
        let cfg = SynthConfig {
            frames: FRAMES + 1,
            ..SynthConfig::default()
        };
        let seq = generate_synthetic_sequence(&cfg, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(denoise_sequence(&seq, &models(), &StageConfig::passthrough(), &mut rng).is_err());
    }
}
