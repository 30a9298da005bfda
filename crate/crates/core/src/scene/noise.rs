//! Parameter-space noise injection.
//!
//! Noise is added independently per frame to the root translation, the root
//! rotation, and every joint rotation; keypoints are then recomputed by
//! forward kinematics. Shape factors and the object are left untouched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::hand::{HandParams, HandSkeleton, NUM_ARTICULATED};
use crate::scene::sequence::HoiSequence;

/// Standard deviations of Gaussian noise per parameter block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianNoise {
    pub trans: f64,
    pub rot: f64,
    pub pose: f64,
}

impl Default for GaussianNoise {
    fn default() -> Self {
        Self {
            trans: 0.01,
            rot: 0.1,
            pose: 0.5,
        }
    }
}

/// Scale factors applied to `B(8, 2)` samples per parameter block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaNoise {
    pub trans: f64,
    pub rot: f64,
    pub pose: f64,
}

impl Default for BetaNoise {
    fn default() -> Self {
        Self {
            trans: 0.01,
            rot: 0.05,
            pose: 0.3,
        }
    }
}

pub const BETA_ALPHA: f64 = 8.0;
pub const BETA_BETA: f64 = 2.0;

fn perturb_with<F>(seq: &HoiSequence, scales: [f64; 3], mut draw: F) -> Result<HoiSequence>
where
    F: FnMut() -> f64,
{
    let params = seq.hand_params.as_ref().ok_or_else(|| {
        Error::Unsupported("parameter noise needs a sequence with hand params".into())
    })?;
    if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidInput(format!(
            "noise scales must be finite and non-negative: {scales:?}"
        )));
    }
    let [s_trans, s_rot, s_pose] = scales;
    let noisy: Vec<HandParams> = params
        .iter()
        .map(|p| {
            let mut q = *p;
            for c in 0..3 {
                q.root_trans[c] += s_trans * draw();
            }
            for c in 0..3 {
                q.root_rot[c] += s_rot * draw();
            }
            for j in 0..NUM_ARTICULATED {
                for c in 0..3 {
                    q.pose[j][c] += s_pose * draw();
                }
            }
            q
        })
        .collect();
    HoiSequence::from_params(
        &HandSkeleton::new(),
        noisy,
        seq.object.clone(),
        seq.object_poses.clone(),
    )
}

/// Adds i.i.d. zero-mean Gaussian noise with the given block deviations.
pub fn perturb_gaussian(seq: &HoiSequence, stds: GaussianNoise, seed: u64) -> Result<HoiSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    perturb_with(seq, [stds.trans, stds.rot, stds.pose], || normal.sample(&mut rng))
}

/// Adds `scale * B(8, 2)` noise; note the noise is not zero-mean.
pub fn perturb_beta(seq: &HoiSequence, scales: BetaNoise, seed: u64) -> Result<HoiSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = beta_distribution();
    perturb_with(seq, [scales.trans, scales.rot, scales.pose], || {
        beta.sample(&mut rng)
    })
}

pub fn beta_distribution() -> Beta<f64> {
    Beta::new(BETA_ALPHA, BETA_BETA).expect("valid beta parameters")
}

/// Draws `n` unscaled `B(8, 2)` samples.
pub fn sample_beta<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let beta = beta_distribution();
    (0..n).map(|_| beta.sample(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::shape::{ObjectPose, ObjectShape, Primitive};
    use crate::scene::synth::{generate_synthetic_sequence, SynthConfig};

    fn long_sequence(frames: usize) -> HoiSequence {
        let params = vec![HandParams::rest(); frames];
        let shape = ObjectShape::new(Primitive::Sphere { radius: 0.04 }).unwrap();
        HoiSequence::from_params(
            &HandSkeleton::new(),
            params,
            shape,
            vec![ObjectPose::identity(); frames],
        )
        .unwrap()
    }

    #[test]
    fn default_scales() {
        let g = GaussianNoise::default();
        assert_eq!((g.trans, g.rot, g.pose), (0.01, 0.1, 0.5));
        let b = BetaNoise::default();
        assert_eq!((b.trans, b.rot, b.pose), (0.01, 0.05, 0.3));
    }

    #[test]
    fn zero_noise_is_identity() {
        let seq = generate_synthetic_sequence(&SynthConfig::default(), 4).unwrap();
        let zero = GaussianNoise {
            trans: 0.0,
            rot: 0.0,
            pose: 0.0,
        };
        assert_eq!(perturb_gaussian(&seq, zero, 1).unwrap(), seq);
        let zero = BetaNoise {
            trans: 0.0,
            rot: 0.0,
            pose: 0.0,
        };
        assert_eq!(perturb_beta(&seq, zero, 1).unwrap(), seq);
    }

    #[test]
    fn seed_reuse_gives_identical_noise() {
        let seq = generate_synthetic_sequence(&SynthConfig::default(), 4).unwrap();
        let a = perturb_gaussian(&seq, GaussianNoise::default(), 9).unwrap();
        let b = perturb_gaussian(&seq, GaussianNoise::default(), 9).unwrap();
        assert_eq!(a, b);
        let c = perturb_beta(&seq, BetaNoise::default(), 9).unwrap();
        let d = perturb_beta(&seq, BetaNoise::default(), 9).unwrap();
        assert_eq!(c, d);
        assert_eq!(a.object_poses, seq.object_poses);
    }

    #[test]
    fn gaussian_translation_noise_has_requested_std() {
        let frames = 33_334;
        let seq = long_sequence(frames);
        let noisy = perturb_gaussian(&seq, GaussianNoise::default(), 3).unwrap();
        let d: Vec<f64> = noisy
            .hand_params
            .unwrap()
            .iter()
            .flat_map(|p| p.root_trans)
            .collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let std = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(d.len() >= 100_000);
        assert!((std - 0.01).abs() / 0.01 < 0.02, "std {std}");
    }

    #[test]
    fn beta_mean_is_point_eight() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = sample_beta(&mut rng, 1_000_000);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 0.8).abs() / 0.8 < 0.01, "mean {mean}");
    }

    #[test]
    fn missing_params_unsupported() {
        let mut seq = long_sequence(3);
        seq.hand_params = None;
        assert!(matches!(
            perturb_gaussian(&seq, GaussianNoise::default(), 0),
            Err(Error::Unsupported(_))
        ));
    }
}
