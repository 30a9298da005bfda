//! Evaluation metrics: pose error, contact agreement, penetration and
//! hand-object motion consistency.
//!
//! Every metric has a point-set form (`*_points`) and a sequence form that
//! places the capsule hand surface from keypoints.

mod report;

pub use report::{evaluate, EvalOptions, MetricsReport};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::rep::ContactFrameSet;
use crate::scene::{
    hand::hand_bounds, hand::hand_signed_distance, object_sdf, HandSkeleton, HoiSequence, Keypoints,
    SurfacePattern,
};

/// Hand-surface sample density used by the metrics (samples per meter).
pub const METRIC_SURFACE_DENSITY: f64 = 300.0;

const MM: f64 = 1000.0;

fn check_frames(what: &'static str, a: usize, b: usize) -> Result<()> {
    crate::error::ensure_len(what, a, b)
}

/// Capsule-surface samples of every frame.
pub fn hand_surface(skeleton: &HandSkeleton, pattern: &SurfacePattern, keypoints: &[Keypoints]) -> Vec<Vec<Vec3>> {
    keypoints.iter().map(|kp| pattern.place_keypoints(skeleton, kp)).collect()
}

/// Mean Euclidean distance between corresponding points, in mm.
pub fn mean_point_error(pred: &[Vec<Vec3>], gt: &[Vec<Vec3>]) -> Result<f64> {
    check_frames("frames", gt.len(), pred.len())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, g) in pred.iter().zip(gt) {
        check_frames("points per frame", g.len(), p.len())?;
        sum += p.iter().zip(g).map(|(a, b)| (a - b).norm()).sum::<f64>();
        n += p.len();
    }
    if n == 0 {
        return Err(Error::InvalidInput("no points to compare".into()));
    }
    Ok(sum / n as f64 * MM)
}

pub fn mpjpe(pred: &[Keypoints], gt: &[Keypoints]) -> Result<f64> {
    let p: Vec<Vec<Vec3>> = pred.iter().map(|k| k.to_vec()).collect();
    let g: Vec<Vec<Vec3>> = gt.iter().map(|k| k.to_vec()).collect();
    mean_point_error(&p, &g)
}

/// `(MPJPE, MPVPE)` in mm; vertices are the capsule-surface samples.
pub fn mpjpe_mpvpe(pred: &HoiSequence, gt: &HoiSequence) -> Result<(f64, f64)> {
    let sk = HandSkeleton::new();
    let pattern = SurfacePattern::new(&sk, METRIC_SURFACE_DENSITY)?;
    let j = mpjpe(&pred.keypoints, &gt.keypoints)?;
    let v = mean_point_error(
        &hand_surface(&sk, &pattern, &pred.keypoints),
        &hand_surface(&sk, &pattern, &gt.keypoints),
    )?;
    Ok((j, v))
}

/// IoU (%) of two per-frame binary maps, with intersections and unions
/// summed over frames. Both maps empty everywhere gives 100.
pub fn contact_iou_maps(pred: &[Vec<bool>], gt: &[Vec<bool>]) -> Result<f64> {
    check_frames("frames", gt.len(), pred.len())?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (p, g) in pred.iter().zip(gt) {
        check_frames("map size", g.len(), p.len())?;
        for (a, b) in p.iter().zip(g) {
            inter += (*a && *b) as usize;
            union += (*a || *b) as usize;
        }
    }
    Ok(if union == 0 {
        100.0
    } else {
        100.0 * inter as f64 / union as f64
    })
}

/// Object surface samples whose distance to the capsule hand surface is
/// within `threshold`, per frame.
pub fn contact_map(seq: &HoiSequence, threshold: f64) -> Vec<Vec<bool>> {
    let sk = HandSkeleton::new();
    seq.keypoints
        .iter()
        .zip(&seq.object_poses)
        .map(|(kp, pose)| {
            seq.object
                .points()
                .iter()
                .map(|p| hand_signed_distance(&sk, kp, &pose.apply(p)) <= threshold)
                .collect()
        })
        .collect()
}

pub fn contact_iou(pred: &HoiSequence, gt: &HoiSequence, threshold: f64) -> Result<f64> {
    check_frames("frames", gt.frames(), pred.frames())?;
    if pred.object.points().len() != gt.object.points().len() {
        return Err(Error::shape("object samples", gt.object.points().len(), pred.object.points().len()));
    }
    contact_iou_maps(&contact_map(pred, threshold), &contact_map(gt, threshold))
}

/// Volume (m³) of `{x : a(x) < 0 and b(x) < 0}` by counting voxel centers on
/// a grid aligned to the world origin, restricted to `[lo, hi]`.
pub fn intersection_volume(
    lo: Vec3,
    hi: Vec3,
    voxel: f64,
    a: impl Fn(&Vec3) -> f64,
    b: impl Fn(&Vec3) -> f64,
) -> Result<f64> {
    if !(voxel > 0.0 && voxel.is_finite()) {
        return Err(Error::InvalidInput(format!("voxel size must be positive, got {voxel}")));
    }
    if !(lo.iter().chain(hi.iter()).all(|v| v.is_finite())) {
        return Err(Error::Degenerate("non-finite bounding box".into()));
    }
    if (0..3).any(|i| hi[i] <= lo[i]) {
        return Ok(0.0);
    }
    let start = lo.map(|v| (v / voxel - 0.5).floor() as i64);
    let end = hi.map(|v| (v / voxel - 0.5).ceil() as i64);
    let mut count = 0u64;
    for i in start.x..=end.x {
        for j in start.y..=end.y {
            for k in start.z..=end.z {
                let c = Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * voxel;
                if b(&c) < 0.0 && a(&c) < 0.0 {
                    count += 1;
                }
            }
        }
    }
    Ok(count as f64 * voxel.powi(3))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penetration {
    /// Mean per-frame intersection volume, cm³.
    pub volume_cm3: f64,
    /// Mean per-frame maximum penetration depth of hand-surface samples, mm.
    pub depth_mm: f64,
}

/// Per-frame max of `max(0, −sdf)` over hand points, averaged over frames (mm).
pub fn penetration_depth_points(depths: &[Vec<f64>]) -> f64 {
    if depths.is_empty() {
        return 0.0;
    }
    depths
        .iter()
        .map(|f| f.iter().fold(0.0f64, |m, d| m.max(-d)))
        .sum::<f64>()
        / depths.len() as f64
        * MM
}

pub fn penetration_metrics(seq: &HoiSequence, voxel: f64) -> Result<Penetration> {
    let sk = HandSkeleton::new();
    let pattern = SurfacePattern::new(&sk, METRIC_SURFACE_DENSITY)?;
    let r = seq.object.primitive().bounding_radius();
    let mut volume = 0.0;
    let mut sdfs = Vec::with_capacity(seq.frames());
    for (kp, pose) in seq.keypoints.iter().zip(&seq.object_poses) {
        let (hlo, hhi) = hand_bounds(&sk, kp);
        let c = pose.translation;
        let lo = hlo.sup(&(c - Vec3::repeat(r)));
        let hi = hhi.inf(&(c + Vec3::repeat(r)));
        volume += intersection_volume(
            lo,
            hi,
            voxel,
            |x| hand_signed_distance(&sk, kp, x),
            |x| object_sdf(&seq.object, pose, x).0,
        )?;
        sdfs.push(
            pattern
                .place_keypoints(&sk, kp)
                .iter()
                .map(|p| object_sdf(&seq.object, pose, p).0)
                .collect(),
        );
    }
    Ok(Penetration {
        volume_cm3: volume / seq.frames() as f64 * 1e6,
        depth_mm: penetration_depth_points(&sdfs),
    })
}

fn min_distance(p: &Vec3, set: &[Vec3]) -> f64 {
    set.iter().map(|o| (p - o).norm_squared()).fold(f64::INFINITY, f64::min).sqrt()
}

/// Mean over frames and hand points of `|d̂_min − d_min|` (mm), where
/// `d_min` is the distance from a hand point to the nearest object point.
pub fn proximity_error_points(pred: &[Vec<Vec3>], gt: &[Vec<Vec3>], object: &[Vec<Vec3>]) -> Result<f64> {
    check_frames("frames", gt.len(), pred.len())?;
    check_frames("object frames", gt.len(), object.len())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((p, g), o) in pred.iter().zip(gt).zip(object) {
        check_frames("points per frame", g.len(), p.len())?;
        if o.is_empty() {
            return Err(Error::InvalidInput("no object points".into()));
        }
        for (a, b) in p.iter().zip(g) {
            sum += (min_distance(a, o) - min_distance(b, o)).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidInput("no hand points".into()));
    }
    Ok(sum / n as f64 * MM)
}

fn keypoint_sets(kps: &[Keypoints]) -> Vec<Vec<Vec3>> {
    kps.iter().map(|k| k.to_vec()).collect()
}

pub fn proximity_error(pred: &HoiSequence, gt: &HoiSequence, contacts: &ContactFrameSet) -> Result<f64> {
    proximity_error_points(&keypoint_sets(&pred.keypoints), &keypoint_sets(&gt.keypoints), &contacts.points)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionConsistency {
    /// Mean over non-static transitions, mm².
    pub value_mm2: f64,
    pub frames_used: usize,
    /// Set when every transition was static; `value_mm2` is then 0.
    pub all_static: bool,
}

/// For each transition where some object point moves at least `static_eps`,
/// takes the nearest hand/object pair at the first frame and scores
/// `‖exp(−100 d) Δh − Δo‖²` in mm².
pub fn motion_consistency_points(hand: &[Vec<Vec3>], object: &[Vec<Vec3>], static_eps: f64) -> Result<MotionConsistency> {
    check_frames("object frames", hand.len(), object.len())?;
    if hand.len() < 2 {
        return Err(Error::InsufficientFrames {
            needed: 2,
            got: hand.len(),
        });
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for k in 0..hand.len() - 1 {
        let (h0, h1, o0, o1) = (&hand[k], &hand[k + 1], &object[k], &object[k + 1]);
        check_frames("hand points", h0.len(), h1.len())?;
        check_frames("object points", o0.len(), o1.len())?;
        if o0.iter().zip(o1).all(|(a, b)| (b - a).norm() < static_eps) {
            continue;
        }
        let mut best = (f64::INFINITY, 0, 0);
        for (i, h) in h0.iter().enumerate() {
            for (j, o) in o0.iter().enumerate() {
                let d = (h - o).norm_squared();
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        let (d2, i, j) = best;
        if !d2.is_finite() {
            return Err(Error::InvalidInput("empty hand or object point set".into()));
        }
        let w = (-100.0 * d2.sqrt()).exp();
        let dh = (h1[i] - h0[i]) * MM;
        let d_o = (o1[j] - o0[j]) * MM;
        sum += (dh * w - d_o).norm_squared();
        used += 1;
    }
    Ok(MotionConsistency {
        value_mm2: if used == 0 { 0.0 } else { sum / used as f64 },
        frames_used: used,
        all_static: used == 0,
    })
}

/// Uses the capsule-surface samples as hand points.
pub fn motion_consistency(seq: &HoiSequence, contacts: &ContactFrameSet, static_eps: f64) -> Result<MotionConsistency> {
    check_frames("contact frames", seq.frames(), contacts.frames())?;
    let sk = HandSkeleton::new();
    let pattern = SurfacePattern::new(&sk, METRIC_SURFACE_DENSITY)?;
    motion_consistency_points(&hand_surface(&sk, &pattern, &seq.keypoints), &contacts.points, static_eps)
}
