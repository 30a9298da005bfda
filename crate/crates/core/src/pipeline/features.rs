//! Model inputs and conditions for the three stages, shared by training and
//! inference.
//!
//! * Motion: the whole canonical trajectory, standardized by its own
//!   per-axis statistics, as one `K·63` vector.
//! * Spatial: one row per (frame, contact point) holding the 63 normalized
//!   offsets, conditioned on the contact point's normalized geometry.
//! * Temporal: one row per contact point holding its `(K−1)·129` canonical
//!   temporal statistics, standardized by corpus statistics.

use crate::error::Result;
use crate::math::{Mat3, Vec3};
use crate::rep::normalize::{point_stats, STD_FLOOR};
use crate::rep::{
    rotate_row, temporal_row, CanonHandTraj, ChannelStats, ContactFrameSet, TemporalParams,
    TEMPORAL_STRIDE,
};
use crate::scene::{Keypoints, NUM_KEYPOINTS};

/// Length scale (m) of contact-point coordinates in the conditions.
pub const COND_SCALE: f64 = 0.05;
pub const SPATIAL_COND_DIM: usize = 12;
pub const TEMPORAL_COND_DIM: usize = 6;
pub const POSE_DIM: usize = 3 * NUM_KEYPOINTS;

pub fn motion_dim(frames: usize) -> usize {
    frames * POSE_DIM
}

pub fn temporal_dim(frames: usize) -> usize {
    frames.saturating_sub(1) * TEMPORAL_STRIDE
}

/// Per-axis mean and std of a canonical trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceStats {
    pub mean: Vec3,
    pub std: Vec3,
}

impl InstanceStats {
    pub fn of(canon: &CanonHandTraj) -> Self {
        let (mean, std) = point_stats(canon.joints.iter().flatten());
        Self { mean, std }
    }

    pub fn normalize(&self, p: &Vec3) -> Vec3 {
        (p - self.mean).component_div(&self.std)
    }

    pub fn denormalize(&self, p: &Vec3) -> Vec3 {
        p.component_mul(&self.std) + self.mean
    }
}

pub fn motion_features(canon: &CanonHandTraj, stats: &InstanceStats) -> Vec<f64> {
    canon
        .joints
        .iter()
        .flatten()
        .flat_map(|p| stats.normalize(p).iter().copied().collect::<Vec<_>>())
        .collect()
}

pub fn motion_from_features(x: &[f64], stats: &InstanceStats) -> Result<CanonHandTraj> {
    let flat: Vec<f64> = x
        .chunks_exact(3)
        .flat_map(|c| {
            let p = stats.denormalize(&Vec3::new(c[0], c[1], c[2]));
            [p.x, p.y, p.z]
        })
        .collect();
    CanonHandTraj::from_flat(&flat)
}

/// `[−μ^o/σ^o, n̄, σ^o/COND_SCALE, ō/COND_SCALE]` for a contact point at
/// canonical position `o` with normal `n` and offset statistics `(μ, σ)`.
pub fn spatial_cond(o: &Vec3, n: &Vec3, offset_mean: &Vec3, offset_std: &Vec3) -> [f64; SPATIAL_COND_DIM] {
    let rel = -offset_mean.component_div(offset_std);
    let s = offset_std / COND_SCALE;
    let p = o / COND_SCALE;
    [rel.x, rel.y, rel.z, n.x, n.y, n.z, s.x, s.y, s.z, p.x, p.y, p.z]
}

pub fn temporal_cond(o: &Vec3, n: &Vec3) -> [f64; TEMPORAL_COND_DIM] {
    let p = o / COND_SCALE;
    [p.x, p.y, p.z, n.x, n.y, n.z]
}

/// Canonical temporal row: the world row with its vectors rotated into the
/// contact frame of frame `k`.
pub fn canonical_temporal_row(
    keypoints: &[Keypoints],
    frames: &ContactFrameSet,
    params: &TemporalParams,
    k: usize,
    o: usize,
    out: &mut [f64],
) {
    temporal_row(keypoints, frames, params, k, o, out);
    rotate_row(out, &frames.rotations[k].transpose());
}

/// Whether channel `c` of a temporal row starts or continues a 3-vector.
fn vector_block(c: usize) -> Option<usize> {
    if c < 3 {
        return Some(0);
    }
    let r = (c - 3) % 6;
    (1..4).contains(&r).then(|| c - (r - 1))
}

/// Per-channel statistics of canonical temporal rows, with every vector
/// block replaced by an isotropic zero-mean scale so normalization commutes
/// with rotation augmentation.
pub fn isotropic_temporal_stats<R: AsRef<[f64]>>(rows: impl IntoIterator<Item = R>) -> Result<ChannelStats> {
    let raw = ChannelStats::from_rows(rows)?;
    crate::error::ensure_len("temporal channels", TEMPORAL_STRIDE, raw.channels())?;
    let mut out = raw.clone();
    for c in 0..TEMPORAL_STRIDE {
        if let Some(start) = vector_block(c) {
            let second: f64 = (start..start + 3)
                .map(|i| raw.std[i] * raw.std[i] + raw.mean[i] * raw.mean[i])
                .sum::<f64>()
                / 3.0;
            out.mean[c] = 0.0;
            out.std[c] = second.sqrt().max(STD_FLOOR);
        }
    }
    Ok(out)
}

/// Temporal statistics over a set of clips.
pub fn corpus_temporal_stats<'a>(
    clips: impl IntoIterator<Item = (&'a [Keypoints], &'a ContactFrameSet)>,
    params: &TemporalParams,
) -> Result<ChannelStats> {
    let rows = clips.into_iter().flat_map(|(kps, frames)| {
        let mut rows = Vec::new();
        for k in 0..kps.len().saturating_sub(1) {
            for o in 0..frames.num_points() {
                let mut row = vec![0.0; TEMPORAL_STRIDE];
                canonical_temporal_row(kps, frames, params, k, o, &mut row);
                rows.push(row);
            }
        }
        rows
    });
    isotropic_temporal_stats(rows)
}

/// Standard deviation per axis of a point cloud after rotation by `r`, from
/// its covariance.
pub fn rotated_std(cov: &Mat3, r: &Mat3) -> Vec3 {
    let c = r * cov * r.transpose();
    Vec3::new(c[(0, 0)], c[(1, 1)], c[(2, 2)]).map(|v| v.max(0.0).sqrt().max(STD_FLOOR))
}

/// Mean and population covariance of the canonical trajectory's points.
pub fn canon_moments(canon: &CanonHandTraj) -> (Vec3, Mat3) {
    let pts: Vec<&Vec3> = canon.joints.iter().flatten().collect();
    let n = pts.len().max(1) as f64;
    let mean = pts.iter().copied().sum::<Vec3>() / n;
    let cov = pts
        .iter()
        .map(|p| (*p - mean) * (*p - mean).transpose())
        .sum::<Mat3>()
        / n;
    (mean, cov)
}
