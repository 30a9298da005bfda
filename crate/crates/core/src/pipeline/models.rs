//! The three stage denoisers: training sources over a clean corpus, joint
//! training, and checkpoint conversion.

use std::path::Path;

use ndarray::ArrayViewMut1;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    train_from_source, Checkpoint, DenoiserModel, NoisePredictor, NoiseSchedule, Tensor, TrainConfig, TrainingSource,
};
use crate::error::{Error, Result};
use crate::math::{random_rotation, Mat3, Vec3};
use crate::pipeline::features::{
    canon_moments, canonical_temporal_row, corpus_temporal_stats, motion_dim, rotated_std, spatial_cond,
    temporal_cond, temporal_dim, POSE_DIM, SPATIAL_COND_DIM, TEMPORAL_COND_DIM,
};
use crate::rep::{
    canonicalize_hand_trajectory, extract_generalized_contact_points, rotate_row, CanonHandTraj, ChannelStats,
    ContactConfig, ContactFrameSet, TemporalParams, TEMPORAL_STRIDE,
};
use crate::scene::{HoiSequence, Keypoints, NUM_KEYPOINTS};

pub const MOTION_FILE: &str = "motion.gohd";
pub const SPATIAL_FILE: &str = "spatial.gohd";
pub const TEMPORAL_FILE: &str = "temporal.gohd";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelTrainConfig {
    pub motion: TrainConfig,
    pub spatial: TrainConfig,
    pub temporal: TrainConfig,
    /// Random global rotation of every training sample.
    pub augment: bool,
    pub contact: ContactConfig,
    pub temporal_params: TemporalParams,
}

impl Default for ModelTrainConfig {
    fn default() -> Self {
        use crate::diffusion::{NetworkConfig, OutputMode};
        Self {
            motion: TrainConfig {
                batch_size: 64,
                steps: 6000,
                learning_rate: 1e-3,
                final_lr_fraction: 0.05,
                seed: 1,
                network: NetworkConfig {
                    hidden: 256,
                    blocks: 4,
                    time_dim: 64,
                    output: OutputMode::Data,
                },
            },
            spatial: TrainConfig {
                batch_size: 128,
                steps: 6000,
                learning_rate: 2e-3,
                final_lr_fraction: 0.05,
                seed: 2,
                network: NetworkConfig {
                    hidden: 128,
                    blocks: 2,
                    time_dim: 32,
                    output: OutputMode::Velocity,
                },
            },
            temporal: TrainConfig {
                batch_size: 64,
                steps: 4000,
                learning_rate: 1e-3,
                final_lr_fraction: 0.05,
                seed: 3,
                network: NetworkConfig {
                    hidden: 128,
                    blocks: 2,
                    time_dim: 32,
                    output: OutputMode::Velocity,
                },
            },
            augment: true,
            contact: ContactConfig::default(),
            temporal_params: TemporalParams::default(),
        }
    }
}

impl ModelTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.motion.validate()?;
        self.spatial.validate()?;
        self.temporal.validate()
    }
}

/// A clean clip prepared for training.
#[derive(Debug, Clone)]
pub struct TrainingClip {
    pub keypoints: Vec<Keypoints>,
    pub frames: ContactFrameSet,
    pub canon: CanonHandTraj,
    /// Canonical contact positions and normals (constant over frames).
    pub contact_points: Vec<Vec3>,
    pub contact_normals: Vec<Vec3>,
    mean: Vec3,
    cov: Mat3,
}

impl TrainingClip {
    pub fn new(seq: &HoiSequence, contact: &ContactConfig, seed: u64) -> Result<Self> {
        let frames = extract_generalized_contact_points(seq, contact, seed)?;
        let canon = canonicalize_hand_trajectory(&seq.keypoints, &frames)?;
        let contact_points = frames.points[0].iter().map(|p| frames.to_canonical(0, p)).collect();
        let contact_normals = frames.normals[0].iter().map(|n| frames.vector_to_canonical(0, n)).collect();
        let (mean, cov) = canon_moments(&canon);
        Ok(Self {
            keypoints: seq.keypoints.clone(),
            frames,
            canon,
            contact_points,
            contact_normals,
            mean,
            cov,
        })
    }

    pub fn frames(&self) -> usize {
        self.keypoints.len()
    }
}

/// Prepares a corpus; every clip gets its own contact-sampling seed.
pub fn prepare_clips(corpus: &[HoiSequence], contact: &ContactConfig, seed: u64) -> Result<Vec<TrainingClip>> {
    let clips: Vec<TrainingClip> = corpus
        .iter()
        .enumerate()
        .map(|(i, s)| TrainingClip::new(s, contact, seed.wrapping_add(i as u64)))
        .collect::<Result<_>>()?;
    let first = clips
        .first()
        .ok_or_else(|| Error::InvalidInput("training corpus is empty".into()))?;
    for c in &clips {
        crate::error::ensure_len("clip frames", first.frames(), c.frames())?;
        crate::error::ensure_len("clip contact points", first.frames.num_points(), c.frames.num_points())?;
    }
    Ok(clips)
}

fn draw_rotation(rng: &mut ChaCha8Rng, augment: bool) -> Mat3 {
    if augment {
        random_rotation(rng)
    } else {
        Mat3::identity()
    }
}

fn clip<'a>(clips: &'a [TrainingClip], rng: &mut ChaCha8Rng) -> &'a TrainingClip {
    &clips[rng.random_range(0..clips.len())]
}

pub struct MotionSource<'a> {
    pub clips: &'a [TrainingClip],
    pub augment: bool,
}

impl TrainingSource for MotionSource<'_> {
    fn dim(&self) -> usize {
        motion_dim(self.clips[0].frames())
    }

    fn sample(&self, rng: &mut ChaCha8Rng, mut x: ArrayViewMut1<f64>, _cond: ArrayViewMut1<f64>) {
        let c = clip(self.clips, rng);
        let r = draw_rotation(rng, self.augment);
        let mean = r * c.mean;
        let std = rotated_std(&c.cov, &r);
        for (i, p) in c.canon.joints.iter().flatten().enumerate() {
            let q = (r * p - mean).component_div(&std);
            for a in 0..3 {
                x[3 * i + a] = q[a];
            }
        }
    }
}

pub struct SpatialSource<'a> {
    pub clips: &'a [TrainingClip],
    pub augment: bool,
}

impl TrainingSource for SpatialSource<'_> {
    fn dim(&self) -> usize {
        POSE_DIM
    }

    fn cond_dim(&self) -> usize {
        SPATIAL_COND_DIM
    }

    fn sample(&self, rng: &mut ChaCha8Rng, mut x: ArrayViewMut1<f64>, mut cond: ArrayViewMut1<f64>) {
        let c = clip(self.clips, rng);
        let k = rng.random_range(0..c.frames());
        let o = rng.random_range(0..c.contact_points.len());
        let r = draw_rotation(rng, self.augment);
        let mean = r * c.mean;
        let std = rotated_std(&c.cov, &r);
        for (j, p) in c.canon.joints[k].iter().enumerate() {
            let q = (r * p - mean).component_div(&std);
            for a in 0..3 {
                x[3 * j + a] = q[a];
            }
        }
        let point = r * c.contact_points[o];
        let normal = r * c.contact_normals[o];
        let offset_mean = mean - point;
        for (d, v) in cond.iter_mut().zip(spatial_cond(&point, &normal, &offset_mean, &std)) {
            *d = v;
        }
    }
}

pub struct TemporalSource<'a> {
    pub clips: &'a [TrainingClip],
    pub augment: bool,
    pub stats: &'a ChannelStats,
    pub params: TemporalParams,
}

impl TrainingSource for TemporalSource<'_> {
    fn dim(&self) -> usize {
        temporal_dim(self.clips[0].frames())
    }

    fn cond_dim(&self) -> usize {
        TEMPORAL_COND_DIM
    }

    fn sample(&self, rng: &mut ChaCha8Rng, mut x: ArrayViewMut1<f64>, mut cond: ArrayViewMut1<f64>) {
        let c = clip(self.clips, rng);
        let o = rng.random_range(0..c.contact_points.len());
        let r = draw_rotation(rng, self.augment);
        let mut row = [0.0; TEMPORAL_STRIDE];
        for k in 0..c.frames() - 1 {
            canonical_temporal_row(&c.keypoints, &c.frames, &self.params, k, o, &mut row);
            self.stats.normalize(&mut row);
            rotate_row(&mut row, &r);
            for (i, v) in row.iter().enumerate() {
                x[k * TEMPORAL_STRIDE + i] = *v;
            }
        }
        let tc = temporal_cond(&(r * c.contact_points[o]), &(r * c.contact_normals[o]));
        for (d, v) in cond.iter_mut().zip(tc) {
            *d = v;
        }
    }
}

/// The trained denoisers with everything inference needs to match training.
#[derive(Debug, Clone, PartialEq)]
pub struct StageModels {
    pub schedule: NoiseSchedule,
    pub motion: DenoiserModel,
    pub spatial: DenoiserModel,
    pub temporal: DenoiserModel,
    /// Corpus statistics of canonical temporal rows.
    pub temporal_stats: ChannelStats,
    pub contact: ContactConfig,
    pub temporal_params: TemporalParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLosses {
    pub motion: Vec<f64>,
    pub spatial: Vec<f64>,
    pub temporal: Vec<f64>,
}

fn round_f32(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = *x as f32 as f64);
}

/// Trains the motion, spatial and temporal denoisers on a clean corpus.
pub fn train_stage_models(
    corpus: &[HoiSequence],
    config: &ModelTrainConfig,
    schedule: &NoiseSchedule,
) -> Result<(StageModels, TrainingLosses)> {
    config.validate()?;
    let clips = prepare_clips(corpus, &config.contact, config.motion.seed)?;
    if clips[0].frames() < 2 {
        return Err(Error::InsufficientFrames {
            needed: 2,
            got: clips[0].frames(),
        });
    }
    let mut stats = corpus_temporal_stats(
        clips.iter().map(|c| (c.keypoints.as_slice(), &c.frames)),
        &config.temporal_params,
    )?;
    // Checkpoints store f32; round now so reloaded models behave identically.
    round_f32(&mut stats.mean);
    round_f32(&mut stats.std);
    log::info!("training motion denoiser on {} clips", clips.len());
    let motion = train_from_source(
        &MotionSource {
            clips: &clips,
            augment: config.augment,
        },
        &config.motion,
        schedule,
    )?;
    log::info!("training spatial denoiser");
    let spatial = train_from_source(
        &SpatialSource {
            clips: &clips,
            augment: config.augment,
        },
        &config.spatial,
        schedule,
    )?;
    log::info!("training temporal denoiser");
    let temporal = train_from_source(
        &TemporalSource {
            clips: &clips,
            augment: config.augment,
            stats: &stats,
            params: config.temporal_params,
        },
        &config.temporal,
        schedule,
    )?;
    let models = StageModels {
        schedule: schedule.clone(),
        motion: motion.model,
        spatial: spatial.model,
        temporal: temporal.model,
        temporal_stats: stats,
        contact: config.contact,
        temporal_params: config.temporal_params,
    };
    let losses = TrainingLosses {
        motion: motion.losses,
        spatial: spatial.losses,
        temporal: temporal.losses,
    };
    Ok((models, losses))
}

fn aux_vector<'a>(c: &'a Checkpoint, name: &str, len: usize) -> Result<&'a [f64]> {
    let t = c
        .aux(name)
        .ok_or_else(|| Error::format("GOHD", format!("missing aux tensor {name}")))?;
    if t.data.len() != len {
        return Err(Error::format("GOHD", format!("aux tensor {name} has {} values, expected {len}", t.data.len())));
    }
    Ok(&t.data)
}

impl StageModels {
    pub fn frames(&self) -> usize {
        self.motion.dim() / POSE_DIM
    }

    /// Checks that the three models agree on clip length and contact count.
    pub fn validate(&self) -> Result<()> {
        let k = self.frames();
        crate::error::ensure_len("motion model width", motion_dim(k), self.motion.dim())?;
        crate::error::ensure_len("spatial model width", POSE_DIM, self.spatial.dim())?;
        crate::error::ensure_len("spatial condition width", SPATIAL_COND_DIM, self.spatial.cond_dim())?;
        crate::error::ensure_len("temporal model width", temporal_dim(k), self.temporal.dim())?;
        crate::error::ensure_len("temporal condition width", TEMPORAL_COND_DIM, self.temporal.cond_dim())?;
        crate::error::ensure_len("temporal statistics", TEMPORAL_STRIDE, self.temporal_stats.channels())
    }

    /// One checkpoint per stage, in motion, spatial, temporal order.
    pub fn to_checkpoints(&self) -> [Checkpoint; 3] {
        let contact = (
            "contact".to_string(),
            // Millimeters keep the usual radii exact through f32 storage.
            Tensor::vector(vec![self.contact.radius * 1e3, self.contact.count as f64]),
        );
        let make = |model: &DenoiserModel, aux: Vec<(String, Tensor)>| Checkpoint {
            schedule: self.schedule.clone(),
            model: model.clone(),
            aux,
        };
        let p = self.temporal_params;
        [
            make(&self.motion, vec![contact.clone()]),
            make(&self.spatial, vec![contact.clone()]),
            make(
                &self.temporal,
                vec![
                    contact,
                    ("temporal_params".into(), Tensor::vector(vec![p.k, p.k_a, p.k_b])),
                    ("temporal_mean".into(), Tensor::vector(self.temporal_stats.mean.clone())),
                    ("temporal_std".into(), Tensor::vector(self.temporal_stats.std.clone())),
                ],
            ),
        ]
    }

    pub fn from_checkpoints([motion, spatial, temporal]: [Checkpoint; 3]) -> Result<Self> {
        if motion.schedule != spatial.schedule || motion.schedule != temporal.schedule {
            return Err(Error::InvalidInput("stage checkpoints use different noise schedules".into()));
        }
        let c = aux_vector(&temporal, "contact", 2)?;
        let contact = ContactConfig {
            radius: c[0] / 1e3,
            count: c[1] as usize,
        };
        for other in [&motion, &spatial] {
            if aux_vector(other, "contact", 2)? != c {
                return Err(Error::InvalidInput("stage checkpoints use different contact settings".into()));
            }
        }
        let p = aux_vector(&temporal, "temporal_params", 3)?;
        let temporal_params = TemporalParams {
            k: p[0],
            k_a: p[1],
            k_b: p[2],
        };
        let temporal_stats = ChannelStats {
            mean: aux_vector(&temporal, "temporal_mean", TEMPORAL_STRIDE)?.to_vec(),
            std: aux_vector(&temporal, "temporal_std", TEMPORAL_STRIDE)?.to_vec(),
        };
        let models = Self {
            schedule: motion.schedule,
            motion: motion.model,
            spatial: spatial.model,
            temporal: temporal.model,
            temporal_stats,
            contact,
            temporal_params,
        };
        models.validate()?;
        Ok(models)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (c, name) in self.to_checkpoints().iter().zip([MOTION_FILE, SPATIAL_FILE, TEMPORAL_FILE]) {
            c.save(&dir.join(name))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Self::from_checkpoints([
            Checkpoint::load(&dir.join(MOTION_FILE))?,
            Checkpoint::load(&dir.join(SPATIAL_FILE))?,
            Checkpoint::load(&dir.join(TEMPORAL_FILE))?,
        ])
    }
}

/// Untrained stand-in models sized for clips of `frames` frames. With the
/// zero-initialized output layer they predict zero noise everywhere.
pub fn untrained_models(frames: usize, contact: ContactConfig, params: TemporalParams, schedule: &NoiseSchedule) -> Result<StageModels> {
    use crate::diffusion::NetworkConfig;
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = NetworkConfig {
        hidden: 16,
        blocks: 1,
        time_dim: 8,
        ..NetworkConfig::default()
    };
    Ok(StageModels {
        schedule: schedule.clone(),
        motion: DenoiserModel::new(motion_dim(frames), 0, net, schedule, &mut rng)?,
        spatial: DenoiserModel::new(3 * NUM_KEYPOINTS, SPATIAL_COND_DIM, net, schedule, &mut rng)?,
        temporal: DenoiserModel::new(temporal_dim(frames), TEMPORAL_COND_DIM, net, schedule, &mut rng)?,
        temporal_stats: ChannelStats::identity(TEMPORAL_STRIDE),
        contact,
        temporal_params: params,
    })
}
