//! Global rotation augmentation for training.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::math::{random_rotation, Mat3};
use crate::rep::spatial::SPATIAL_STRIDE;
use crate::rep::temporal::rotate_in_place;
use crate::rep::{CanonHandTraj, GeneOHRep};

/// Rotates every vector quantity of the representation by `r`: the
/// canonical trajectory, the position, normal and offsets of each spatial
/// row, and both velocities of the temporal rows. Distances and the
/// e-statistics are left as they are, and so are the contact frames.
pub fn rotate_representation(rep: &GeneOHRep, r: &Mat3) -> GeneOHRep {
    let canon = CanonHandTraj {
        joints: rep.canon.joints.iter().map(|kp| kp.map(|p| r * p)).collect(),
    };
    let mut spatial = rep.spatial.clone();
    for row in spatial.raw_mut().chunks_exact_mut(SPATIAL_STRIDE) {
        for block in row.chunks_exact_mut(3) {
            rotate_in_place(block, r);
        }
    }
    GeneOHRep {
        canon,
        spatial,
        temporal: rep.temporal.rotated(r),
        frames: rep.frames.clone(),
        params: rep.params,
    }
}

/// One uniformly random rotation applied to the whole representation.
pub fn random_rotation_augment(rep: &GeneOHRep, seed: u64) -> GeneOHRep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rotate_representation(rep, &random_rotation(&mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rep::temporal::{PairStats, TemporalParams};
    use crate::rep::test_support::synthetic_rep;
    use crate::scene::NUM_KEYPOINTS;

    #[test]
    fn identity_rotation_is_noop() {
        let rep = synthetic_rep(0);
        assert_eq!(rotate_representation(&rep, &Mat3::identity()), rep);
    }

    #[test]
    fn norms_preserved() {
        let rep = synthetic_rep(1);
        let aug = random_rotation_augment(&rep, 9);
        for (a, b) in aug.canon.joints.iter().flatten().zip(rep.canon.joints.iter().flatten()) {
            assert!((a.norm() - b.norm()).abs() < 1e-12);
        }
        let s0 = rep.spatial.raw().chunks_exact(3);
        let s1 = aug.spatial.raw().chunks_exact(3);
        for (a, b) in s0.zip(s1) {
            let n = |v: &[f64]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!((n(a) - n(b)).abs() < 1e-12);
        }
        for k in 0..rep.temporal.transitions() {
            for o in 0..rep.temporal.num_points() {
                let a = rep.temporal.object_velocity(k, o).norm();
                let b = aug.temporal.object_velocity(k, o).norm();
                assert!((a - b).abs() < 1e-12);
                for j in 0..NUM_KEYPOINTS {
                    let (p, q) = (rep.temporal.pair(k, o, j), aug.temporal.pair(k, o, j));
                    assert!((p.relative_velocity.norm() - q.relative_velocity.norm()).abs() < 1e-12);
                    assert_eq!(p.distance, q.distance);
                    assert_eq!(p.e_parallel, q.e_parallel);
                }
            }
        }
    }

    #[test]
    fn e_statistics_recomputed_from_rotated_vectors() {
        let rep = synthetic_rep(2);
        let r = {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            random_rotation(&mut rng)
        };
        let aug = rotate_representation(&rep, &r);
        let params = TemporalParams::default();
        for k in 0..aug.temporal.transitions() {
            for o in (0..aug.temporal.num_points()).step_by(17) {
                let n = r * rep.frames.normals[k][o];
                for j in 0..NUM_KEYPOINTS {
                    let p = aug.temporal.pair(k, o, j);
                    // Place the pair at the stored distance along an arbitrary direction.
                    let h = crate::math::Vec3::x() * p.distance;
                    let s = PairStats::compute(
                        &h,
                        &crate::math::Vec3::zeros(),
                        &p.relative_velocity,
                        &crate::math::Vec3::zeros(),
                        &n,
                        &params,
                    );
                    assert!((s.e_parallel - p.e_parallel).abs() < 1e-12);
                    assert!((s.e_perpendicular - p.e_perpendicular).abs() < 1e-12);
                }
            }
        }
    }
}
