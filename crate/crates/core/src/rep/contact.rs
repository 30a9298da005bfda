//! Generalized contact points and their per-frame poses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};
use crate::scene::HoiSequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactConfig {
    /// Contact radius around the hand trajectory (m).
    pub radius: f64,
    /// Number of generalized contact points.
    pub count: usize,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            radius: 0.005,
            count: 128,
        }
    }
}

/// Object surface points tracked through the clip, plus the per-frame
/// canonical pose `(R_k, t_k)` where `R_k` is the object rotation and `t_k`
/// the centroid of the posed points.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactFrameSet {
    /// Indices into the object's rest-frame surface samples.
    pub rest_indices: Vec<usize>,
    /// `[K][N_o]` world positions.
    pub points: Vec<Vec<Vec3>>,
    /// `[K][N_o]` world unit normals.
    pub normals: Vec<Vec<Vec3>>,
    pub rotations: Vec<Mat3>,
    pub centroids: Vec<Vec3>,
}

impl ContactFrameSet {
    /// Builds a frame set from posed points; centroids are computed here.
    pub fn from_parts(
        rest_indices: Vec<usize>,
        points: Vec<Vec<Vec3>>,
        normals: Vec<Vec<Vec3>>,
        rotations: Vec<Mat3>,
    ) -> Result<Self> {
        let k = points.len();
        crate::error::ensure_len("contact normals frames", k, normals.len())?;
        crate::error::ensure_len("contact rotations", k, rotations.len())?;
        let n = rest_indices.len();
        if n == 0 {
            return Err(Error::InvalidShape("contact set is empty".into()));
        }
        for (p, q) in points.iter().zip(&normals) {
            crate::error::ensure_len("contact points per frame", n, p.len())?;
            crate::error::ensure_len("contact normals per frame", n, q.len())?;
        }
        let centroids = points
            .iter()
            .map(|p| p.iter().sum::<Vec3>() / n as f64)
            .collect();
        Ok(Self {
            rest_indices,
            points,
            normals,
            rotations,
            centroids,
        })
    }

    pub fn frames(&self) -> usize {
        self.points.len()
    }

    pub fn num_points(&self) -> usize {
        self.rest_indices.len()
    }

    /// World point into the canonical frame of frame `k`.
    pub fn to_canonical(&self, k: usize, p: &Vec3) -> Vec3 {
        self.rotations[k].transpose() * (p - self.centroids[k])
    }

    pub fn from_canonical(&self, k: usize, p: &Vec3) -> Vec3 {
        self.rotations[k] * p + self.centroids[k]
    }

    pub fn vector_to_canonical(&self, k: usize, v: &Vec3) -> Vec3 {
        self.rotations[k].transpose() * v
    }

    pub fn vector_from_canonical(&self, k: usize, v: &Vec3) -> Vec3 {
        self.rotations[k] * v
    }

    pub(crate) fn check_frames(&self, k: usize) -> Result<()> {
        crate::error::ensure_len("frame count", self.frames(), k)
    }
}

/// Minimum distance from each rest-frame surface sample to the hand
/// trajectory expressed in the object rest frame.
fn min_distances_to_trajectory(seq: &HoiSequence) -> Vec<f64> {
    let rest_hand: Vec<Vec3> = seq
        .keypoints
        .iter()
        .zip(&seq.object_poses)
        .flat_map(|(kp, pose)| kp.iter().map(move |p| pose.inverse_apply(p)))
        .collect();
    seq.object
        .points()
        .iter()
        .map(|s| {
            rest_hand
                .iter()
                .map(|h| (h - s).norm_squared())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

/// Farthest-point sampling of `count` indices from `candidates`.
fn farthest_point_sampling(
    points: &[Vec3],
    candidates: &[usize],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(count);
    let mut dist = vec![f64::INFINITY; candidates.len()];
    let mut next = rng.random_range(0..candidates.len());
    for _ in 0..count {
        chosen.push(candidates[next]);
        let c = points[candidates[next]];
        let mut best = (f64::NEG_INFINITY, 0);
        for (slot, &i) in candidates.iter().enumerate() {
            dist[slot] = dist[slot].min((points[i] - c).norm_squared());
            if dist[slot] > best.0 {
                best = (dist[slot], slot);
            }
        }
        next = best.1;
    }
    chosen
}

/// Selects `config.count` surface samples near the hand trajectory and
/// tracks them through every frame.
///
/// Samples within `config.radius` of any posed hand keypoint form the
/// candidate region, thinned by farthest-point sampling. When the region
/// holds fewer than `count` samples, the `count` samples nearest the
/// trajectory are used instead.
pub fn extract_generalized_contact_points(
    seq: &HoiSequence,
    config: &ContactConfig,
    seed: u64,
) -> Result<ContactFrameSet> {
    if seq.frames() < 2 {
        return Err(Error::InsufficientFrames {
            needed: 2,
            got: seq.frames(),
        });
    }
    let rest = seq.object.points();
    if rest.is_empty() {
        return Err(Error::InvalidShape("object has no surface samples".into()));
    }
    if config.count == 0 || config.count > rest.len() {
        return Err(Error::InvalidShape(format!(
            "cannot pick {} contact points from {} surface samples",
            config.count,
            rest.len()
        )));
    }
    let dmin = min_distances_to_trajectory(seq);
    let candidates: Vec<usize> = (0..rest.len()).filter(|&i| dmin[i] <= config.radius).collect();
    let indices = if candidates.len() >= config.count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        farthest_point_sampling(rest, &candidates, config.count, &mut rng)
    } else {
        let mut order: Vec<usize> = (0..rest.len()).collect();
        order.sort_by(|&a, &b| dmin[a].total_cmp(&dmin[b]).then(a.cmp(&b)));
        order.truncate(config.count);
        order
    };
    let normals_rest = seq.object.normals();
    let mut points = Vec::with_capacity(seq.frames());
    let mut normals = Vec::with_capacity(seq.frames());
    let mut rotations = Vec::with_capacity(seq.frames());
    for pose in &seq.object_poses {
        points.push(indices.iter().map(|&i| pose.apply(&rest[i])).collect());
        normals.push(
            indices
                .iter()
                .map(|&i| pose.apply_vector(&normals_rest[i]))
                .collect(),
        );
        rotations.push(pose.matrix());
    }
    ContactFrameSet::from_parts(indices, points, normals, rotations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{HandSkeleton, Keypoints, ObjectPose, ObjectShape, Primitive, NUM_KEYPOINTS};

    fn hovering(kp_all: Vec3, frames: usize, radius: f64) -> HoiSequence {
        let shape = ObjectShape::new(Primitive::Sphere { radius }).unwrap();
        // A degenerate hand: all keypoints at one spot.
        let kp: Keypoints = [kp_all; NUM_KEYPOINTS];
        HoiSequence::new(
            vec![kp; frames],
            None,
            shape,
            vec![ObjectPose::identity(); frames],
        )
        .unwrap()
    }

    #[test]
    fn contact_radius_default() {
        assert_eq!(ContactConfig::default().radius, 0.005);
    }

    #[test]
    fn hovering_hand_selects_north_pole_region() {
        let seq = hovering(Vec3::new(0.0, 0.0, 0.052), 3, 0.05);
        let cfg = ContactConfig {
            radius: 0.005,
            count: 4,
        };
        let frames = extract_generalized_contact_points(&seq, &cfg, 1).unwrap();
        let h = Vec3::new(0.0, 0.0, 0.052);
        for p in &frames.points[0] {
            assert!((p - h).norm() <= 0.005 + 1e-12);
            assert!(p.z > 0.0);
        }
        let c = frames.centroids[0];
        let mean = frames.points[0].iter().sum::<Vec3>() / 4.0;
        assert_eq!(c, mean);
    }

    #[test]
    fn far_hand_falls_back_to_nearest_samples() {
        let h = Vec3::new(0.03, -0.02, 0.15);
        let seq = hovering(h, 2, 0.04);
        let cfg = ContactConfig {
            radius: 0.005,
            count: 40,
        };
        let frames = extract_generalized_contact_points(&seq, &cfg, 3).unwrap();
        let mut brute: Vec<(f64, usize)> = seq
            .object
            .points()
            .iter()
            .enumerate()
            .map(|(i, p)| ((p - h).norm(), i))
            .collect();
        brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut expect: Vec<usize> = brute[..40].iter().map(|x| x.1).collect();
        let mut got = frames.rest_indices.clone();
        expect.sort();
        got.sort();
        assert_eq!(got, expect);
    }

    #[test]
    fn contact_points_track_object_motion() {
        let cfg = crate::scene::SynthConfig::default();
        let seq = crate::scene::generate_synthetic_sequence(&cfg, 5).unwrap();
        let frames = extract_generalized_contact_points(&seq, &ContactConfig::default(), 0).unwrap();
        assert_eq!(frames.num_points(), 128);
        for (k, pose) in seq.object_poses.iter().enumerate() {
            for (slot, &i) in frames.rest_indices.iter().enumerate() {
                let p = pose.apply(&seq.object.points()[i]);
                assert!((p - frames.points[k][slot]).norm() < 1e-15);
            }
            let r = frames.rotations[k];
            assert!((r.transpose() * r - Mat3::identity()).abs().max() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
        let _ = HandSkeleton::new();
    }

    #[test]
    fn too_many_points_requested() {
        let seq = hovering(Vec3::new(0.0, 0.0, 0.1), 2, 0.01);
        let cfg = ContactConfig {
            radius: 0.005,
            count: 100_000,
        };
        assert!(matches!(
            extract_generalized_contact_points(&seq, &cfg, 0),
            Err(Error::InvalidShape(_))
        ));
    }
}
