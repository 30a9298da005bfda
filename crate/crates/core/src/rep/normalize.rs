//! Per-instance and corpus-level standardization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::rep::spatial::SPATIAL_STRIDE;
use crate::rep::temporal::TEMPORAL_STRIDE;
use crate::rep::{CanonHandTraj, GeneOHRep, TemporalRel};

/// Lower bound applied to every standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-channel mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Population statistics over rows of equal length, accumulated with
    /// Welford's update.
    pub fn from_rows<R: AsRef<[f64]>>(rows: impl IntoIterator<Item = R>) -> Result<Self> {
        let mut count = 0usize;
        let mut mean: Vec<f64> = Vec::new();
        let mut m2: Vec<f64> = Vec::new();
        for row in rows {
            let row = row.as_ref();
            if count == 0 {
                mean = vec![0.0; row.len()];
                m2 = vec![0.0; row.len()];
            }
            crate::error::ensure_len("statistics row", mean.len(), row.len())?;
            count += 1;
            for ((m, s), x) in mean.iter_mut().zip(&mut m2).zip(row) {
                let d = x - *m;
                *m += d / count as f64;
                *s += d * (x - *m);
            }
        }
        if count == 0 {
            return Err(Error::InvalidInput("no rows for statistics".into()));
        }
        let std = m2
            .iter()
            .map(|s| (s / count as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self { mean, std })
    }

    /// Channel statistics of the temporal rows of many clips.
    pub fn from_temporal<'a>(rels: impl IntoIterator<Item = &'a TemporalRel>) -> Result<Self> {
        Self::from_rows(
            rels.into_iter()
                .flat_map(|t| t.raw().chunks_exact(TEMPORAL_STRIDE)),
        )
    }

    pub fn normalize(&self, row: &mut [f64]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = (*x - m) / s;
        }
    }

    pub fn denormalize(&self, row: &mut [f64]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = *x * s + m;
        }
    }
}

/// Mean and floored population std of a set of 3D points, per axis.
pub fn point_stats<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> (Vec3, Vec3) {
    let pts: Vec<&Vec3> = points.into_iter().collect();
    let n = pts.len().max(1) as f64;
    let mean = pts.iter().copied().sum::<Vec3>() / n;
    let var = pts
        .iter()
        .map(|p| (*p - mean).component_mul(&(*p - mean)))
        .sum::<Vec3>()
        / n;
    (mean, var.map(|v| v.sqrt().max(STD_FLOOR)))
}

/// Statistics needed to undo [`normalize_representation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub canon_mean: Vec3,
    pub canon_std: Vec3,
    /// Per contact point, over frames and keypoints.
    pub offset_mean: Vec<Vec3>,
    pub offset_std: Vec<Vec3>,
    pub temporal: ChannelStats,
}

fn offset_points(rep: &GeneOHRep, o: usize) -> Vec<Vec3> {
    let s = &rep.spatial;
    (0..s.frames())
        .flat_map(|k| s.offsets(k, o).chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])))
        .collect()
}

fn map_spatial_offsets(rep: &mut GeneOHRep, stats: &NormStats, f: impl Fn(f64, f64, f64) -> f64) {
    let n = rep.spatial.num_points();
    for (idx, row) in rep.spatial.raw_mut().chunks_exact_mut(SPATIAL_STRIDE).enumerate() {
        let o = idx % n;
        let (m, s) = (stats.offset_mean[o], stats.offset_std[o]);
        for c in row[6..].chunks_exact_mut(3) {
            for a in 0..3 {
                c[a] = f(c[a], m[a], s[a]);
            }
        }
    }
}

/// Standardizes the canonical trajectory by its own statistics, spatial
/// offsets per contact point, and temporal channels by `temporal` (corpus
/// statistics). Contact positions and normals are left as they are.
pub fn normalize_representation(rep: &GeneOHRep, temporal: &ChannelStats) -> Result<(GeneOHRep, NormStats)> {
    crate::error::ensure_len("temporal channels", TEMPORAL_STRIDE, temporal.channels())?;
    let (canon_mean, canon_std) = point_stats(rep.canon.joints.iter().flatten());
    let (offset_mean, offset_std) = (0..rep.spatial.num_points())
        .map(|o| point_stats(offset_points(rep, o).iter()))
        .unzip();
    let stats = NormStats {
        canon_mean,
        canon_std,
        offset_mean,
        offset_std,
        temporal: temporal.clone(),
    };
    let mut out = rep.clone();
    out.canon = CanonHandTraj {
        joints: rep
            .canon
            .joints
            .iter()
            .map(|kp| kp.map(|p| (p - canon_mean).component_div(&canon_std)))
            .collect(),
    };
    map_spatial_offsets(&mut out, &stats, |x, m, s| (x - m) / s);
    for row in out.temporal.raw_mut().chunks_exact_mut(TEMPORAL_STRIDE) {
        temporal.normalize(row);
    }
    Ok((out, stats))
}

pub fn denormalize_representation(rep: &GeneOHRep, stats: &NormStats) -> Result<GeneOHRep> {
    crate::error::ensure_len("offset statistics", rep.spatial.num_points(), stats.offset_mean.len())?;
    let mut out = rep.clone();
    out.canon = CanonHandTraj {
        joints: rep
            .canon
            .joints
            .iter()
            .map(|kp| kp.map(|p| p.component_mul(&stats.canon_std) + stats.canon_mean))
            .collect(),
    };
    map_spatial_offsets(&mut out, stats, |x, m, s| x * s + m);
    for row in out.temporal.raw_mut().chunks_exact_mut(TEMPORAL_STRIDE) {
        stats.temporal.denormalize(row);
    }
    Ok(out)
}
