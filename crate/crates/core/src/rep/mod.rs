//! The contact-centric representation: canonical hand trajectory `J̄`,
//! spatial relations `S` and temporal relations `T`, all anchored on a set
//! of generalized contact points tracked on the object surface.

pub mod augment;
pub mod canon;
pub mod contact;
pub mod normalize;
pub mod spatial;
pub mod temporal;

pub use augment::{random_rotation_augment, rotate_representation};
pub use canon::{canonicalize_hand_trajectory, decanonicalize_hand_trajectory, CanonHandTraj};
pub use contact::{extract_generalized_contact_points, ContactConfig, ContactFrameSet};
pub use normalize::{denormalize_representation, normalize_representation, ChannelStats, NormStats};
pub use spatial::{
    compute_spatial_relations, decode_trajectory_from_spatial, penetration_witness,
    world_offsets_from_spatial, SpatialRel, SPATIAL_STRIDE,
};
pub use temporal::{
    compute_temporal_relations, integrate_temporal_to_offsets, rotate_row, temporal_row, PairStats, TemporalParams,
    TemporalRel, TEMPORAL_STRIDE,
};

use crate::error::Result;
use crate::scene::{HoiSequence, Keypoints};

/// `{J̄, S, T}` with the contact frames they were computed against.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneOHRep {
    pub canon: CanonHandTraj,
    pub spatial: SpatialRel,
    pub temporal: TemporalRel,
    pub frames: ContactFrameSet,
    pub params: TemporalParams,
}

impl GeneOHRep {
    pub fn from_keypoints(
        keypoints: &[Keypoints],
        frames: ContactFrameSet,
        params: TemporalParams,
    ) -> Result<Self> {
        Ok(Self {
            canon: canonicalize_hand_trajectory(keypoints, &frames)?,
            spatial: compute_spatial_relations(keypoints, &frames)?,
            temporal: compute_temporal_relations(keypoints, &frames, &params)?,
            frames,
            params,
        })
    }

    pub fn from_sequence(
        seq: &HoiSequence,
        contact: &ContactConfig,
        params: TemporalParams,
        seed: u64,
    ) -> Result<Self> {
        let frames = extract_generalized_contact_points(seq, contact, seed)?;
        Self::from_keypoints(&seq.keypoints, frames, params)
    }

    /// World keypoints recovered from `J̄`.
    pub fn keypoints(&self) -> Result<Vec<Keypoints>> {
        decanonicalize_hand_trajectory(&self.canon, &self.frames)
    }
}


#[cfg(test)]
mod tests {
    use nalgebra::{Rotation3, UnitQuaternion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::math::{random_rotation, Vec3};
    use crate::scene::{generate_synthetic_sequence, ObjectPose, SynthConfig};

    pub(crate) fn transform_sequence(seq: &HoiSequence, q: &crate::math::Mat3, u: &Vec3) -> HoiSequence {
        let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*q));
        let keypoints = seq.keypoints.iter().map(|kp| kp.map(|p| q * p + u)).collect();
        let poses = seq
            .object_poses
            .iter()
            .map(|p| ObjectPose::new(rot * p.rotation, q * p.translation + u))
            .collect();
        HoiSequence::new(keypoints, None, seq.object.clone(), poses).unwrap()
    }

    #[test]
    fn consistency_chain_on_clean_clip() {
        let seq = generate_synthetic_sequence(&SynthConfig::default(), 11).unwrap();
        let rep = GeneOHRep::from_sequence(&seq, &ContactConfig::default(), TemporalParams::default(), 0).unwrap();
        let decoded = decode_trajectory_from_spatial(&rep.spatial, &rep.frames).unwrap();
        for (a, b) in decoded.iter().flatten().zip(seq.keypoints.iter().flatten()) {
            assert!((a - b).norm() < 1e-9);
        }
        let truth = world_offsets_from_spatial(&rep.spatial, &rep.frames).unwrap();
        let integrated = integrate_temporal_to_offsets(&rep.temporal, &truth[0]).unwrap();
        for (a, b) in integrated.iter().flatten().flatten().zip(truth.iter().flatten().flatten()) {
            assert!((a - b).norm() < 1e-9);
        }
        for (a, b) in rep.keypoints().unwrap().iter().flatten().zip(seq.keypoints.iter().flatten()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn rigid_motion_leaves_representation_unchanged() {
        let seq = generate_synthetic_sequence(&SynthConfig::default(), 12).unwrap();
        let cfg = ContactConfig::default();
        let base = GeneOHRep::from_sequence(&seq, &cfg, TemporalParams::default(), 3).unwrap();
        let base_t = base.temporal.to_canonical(&base.frames).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..5 {
            let q = random_rotation(&mut rng);
            let u = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let moved = transform_sequence(&seq, &q, &u);
            let rep = GeneOHRep::from_sequence(&moved, &cfg, TemporalParams::default(), 3).unwrap();
            assert_eq!(rep.frames.rest_indices, base.frames.rest_indices);
            let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9);
            assert!(close(&rep.canon.to_flat(), &base.canon.to_flat()));
            assert!(close(rep.spatial.raw(), base.spatial.raw()));
            let t = rep.temporal.to_canonical(&rep.frames).unwrap();
            assert!(close(t.raw(), base_t.raw()));
        }
    }
}
