use geneoh::diffusion::build_linear_schedule;
use geneoh::math::{exp_so3, Mat3, Vec3};
use geneoh::metrics::{mpjpe, mpjpe_mpvpe, penetration_metrics};
use geneoh::rep::{
    canonicalize_hand_trajectory, decanonicalize_hand_trajectory, decode_trajectory_from_spatial,
    denormalize_representation, integrate_temporal_to_offsets, normalize_representation, penetration_witness,
    world_offsets_from_spatial, ChannelStats, ContactConfig, GeneOHRep, TemporalParams, TEMPORAL_STRIDE,
};
use geneoh::scene::hand::NUM_PARAMS;
use geneoh::scene::{
    forward_kinematics, generate_synthetic_sequence, keypoint_jacobian, object_sdf, perturb_gaussian, GaussianNoise,
    HandParams, HandSkeleton, HoiSequence, ObjectPose, ObjectShape, Primitive, SynthConfig, NUM_KEYPOINTS,
};
use nalgebra::{Rotation3, UnitQuaternion};
use proptest::prelude::*;

fn short_clip(seed: u64) -> HoiSequence {
    let cfg = SynthConfig {
        frames: 6,
        ..SynthConfig::default()
    };
    generate_synthetic_sequence(&cfg, seed).unwrap()
}

fn small_contacts() -> ContactConfig {
    ContactConfig {
        count: 24,
        ..ContactConfig::default()
    }
}

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-r..r).prop_map(Vec3::from)
}

fn rotation() -> impl Strategy<Value = Mat3> {
    vec3(3.0).prop_map(|v| exp_so3(&v))
}

fn transform(seq: &HoiSequence, q: &Mat3, u: &Vec3) -> HoiSequence {
    let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*q));
    let keypoints = seq.keypoints.iter().map(|kp| kp.map(|p| q * p + u)).collect();
    let poses = seq
        .object_poses
        .iter()
        .map(|p| ObjectPose::new(rot * p.rotation, q * p.translation + u))
        .collect();
    HoiSequence::new(keypoints, None, seq.object.clone(), poses).unwrap()
}

fn gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fk_jacobian_matches_central_differences(
        pose in prop::collection::vec(-1.2f64..1.2, NUM_PARAMS - 5),
        shape in prop::array::uniform5(0.6f64..1.6),
    ) {
        let mut v = [0.0; NUM_PARAMS];
        v[..NUM_PARAMS - 5].copy_from_slice(&pose);
        v[NUM_PARAMS - 5..].copy_from_slice(&shape);
        let sk = HandSkeleton::new();
        let (_, jac) = keypoint_jacobian(&sk, &HandParams::from_vector(&v)).unwrap();
        let h = 1e-6;
        for p in 0..NUM_PARAMS {
            let (mut plus, mut minus) = (v, v);
            plus[p] += h;
            minus[p] -= h;
            let kp = forward_kinematics(&sk, &HandParams::from_vector(&plus)).unwrap();
            let km = forward_kinematics(&sk, &HandParams::from_vector(&minus)).unwrap();
            for i in 0..NUM_KEYPOINTS {
                for a in 0..3 {
                    let fd = (kp[i][a] - km[i][a]) / (2.0 * h);
                    prop_assert!((fd - jac[3 * i + a][p]).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn perturbation_is_a_function_of_seed(clip in 0u64..1000, seed in any::<u64>()) {
        let seq = short_clip(clip);
        let a = perturb_gaussian(&seq, GaussianNoise::default(), seed).unwrap();
        let b = perturb_gaussian(&seq, GaussianNoise::default(), seed).unwrap();
        prop_assert_eq!(&a, &b);
        let c = perturb_gaussian(&seq, GaussianNoise::default(), seed.wrapping_add(1)).unwrap();
        prop_assert!(a.keypoints != c.keypoints);
    }

    #[test]
    fn clean_clips_are_penetration_free(clip in 0u64..10_000) {
        let seq = short_clip(clip);
        prop_assert!(penetration_metrics(&seq, 0.002).unwrap().depth_mm < 0.1);
    }

    #[test]
    fn representation_is_rigidly_invariant(clip in 0u64..1000, q in rotation(), u in vec3(3.0)) {
        let seq = short_clip(clip);
        let cfg = small_contacts();
        let base = GeneOHRep::from_sequence(&seq, &cfg, TemporalParams::default(), clip).unwrap();
        let moved = GeneOHRep::from_sequence(&transform(&seq, &q, &u), &cfg, TemporalParams::default(), clip).unwrap();
        prop_assert_eq!(&moved.frames.rest_indices, &base.frames.rest_indices);
        prop_assert!(gap(&moved.canon.to_flat(), &base.canon.to_flat()) <= 1e-9);
        prop_assert!(gap(moved.spatial.raw(), base.spatial.raw()) <= 1e-9);
        let (a, b) = (moved.temporal.to_canonical(&moved.frames).unwrap(), base.temporal.to_canonical(&base.frames).unwrap());
        prop_assert!(gap(a.raw(), b.raw()) <= 1e-9);
    }

    #[test]
    fn consistency_chain_holds(clip in 0u64..10_000) {
        let seq = short_clip(clip);
        let rep = GeneOHRep::from_sequence(&seq, &small_contacts(), TemporalParams::default(), clip).unwrap();
        let decoded = decode_trajectory_from_spatial(&rep.spatial, &rep.frames).unwrap();
        for (a, b) in decoded.iter().flatten().zip(seq.keypoints.iter().flatten()) {
            prop_assert!((a - b).norm() <= 1e-9);
        }
        let offsets = world_offsets_from_spatial(&rep.spatial, &rep.frames).unwrap();
        let integrated = integrate_temporal_to_offsets(&rep.temporal, &offsets[0]).unwrap();
        for (a, b) in integrated.iter().flatten().flatten().zip(offsets.iter().flatten().flatten()) {
            prop_assert!((a - b).norm() <= 1e-9);
        }
    }

    #[test]
    fn canonicalization_round_trips(clip in 0u64..1000, shift in vec3(1.0), q in rotation()) {
        let seq = short_clip(clip);
        let rep = GeneOHRep::from_sequence(&seq, &small_contacts(), TemporalParams::default(), 0).unwrap();
        let moved: Vec<_> = seq.keypoints.iter().map(|k| k.map(|p| q * p + shift)).collect();
        let canon = canonicalize_hand_trajectory(&moved, &rep.frames).unwrap();
        let back = decanonicalize_hand_trajectory(&canon, &rep.frames).unwrap();
        for (a, b) in back.iter().flatten().zip(moved.iter().flatten()) {
            prop_assert!((a - b).abs().max() <= 1e-12);
        }
    }

    #[test]
    fn normalization_round_trips(clip in 0u64..1000) {
        let seq = short_clip(clip);
        let rep = GeneOHRep::from_sequence(&seq, &small_contacts(), TemporalParams::default(), 1).unwrap();
        let (norm, stats) = normalize_representation(&rep, &ChannelStats::identity(TEMPORAL_STRIDE)).unwrap();
        let back = denormalize_representation(&norm, &stats).unwrap();
        prop_assert!(gap(&back.canon.to_flat(), &rep.canon.to_flat()) <= 1e-12);
        prop_assert!(gap(back.spatial.raw(), rep.spatial.raw()) <= 1e-12);
    }

    #[test]
    fn pose_errors_are_rigidly_invariant(clip in 0u64..1000, seed in any::<u64>(), q in rotation(), u in vec3(2.0)) {
        let gt = short_clip(clip);
        let noisy = perturb_gaussian(&gt, GaussianNoise::default(), seed).unwrap();
        let (j, v) = mpjpe_mpvpe(&noisy, &gt).unwrap();
        let (jm, vm) = mpjpe_mpvpe(&transform(&noisy, &q, &u), &transform(&gt, &q, &u)).unwrap();
        prop_assert!((j - jm).abs() <= 1e-9 && (v - vm).abs() <= 1e-9);
        prop_assert!(j > 0.0 && mpjpe(&gt.keypoints, &gt.keypoints).unwrap() == 0.0);
    }

    #[test]
    fn linear_schedule_is_strictly_monotone(t in 2usize..2000, b0 in 1e-5f64..0.01, width in 1e-4f64..0.05) {
        let s = build_linear_schedule(t, b0, b0 + width).unwrap();
        for k in 1..t {
            prop_assert!(s.beta(k + 1) > s.beta(k));
            prop_assert!(s.alpha_bar(k + 1) < s.alpha_bar(k));
        }
        prop_assert!(s.alpha_bar(1) < 1.0 && s.alpha_bar(t) > 0.0);
    }

    #[test]
    fn witness_sign_away_from_the_surface(
        kind in 0usize..3,
        dims in prop::array::uniform3(0.015f64..0.06),
        q in rotation(),
        center in vec3(0.3),
        offset in vec3(1.0),
    ) {
        let primitive = match kind {
            0 => Primitive::Sphere { radius: dims[0] },
            1 => Primitive::Box { half_extents: dims },
            _ => Primitive::Cylinder { radius: dims[0], half_height: dims[1] },
        };
        let shape = ObjectShape::new(primitive).unwrap();
        let pose = ObjectPose::new(UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(q)), center);
        let h = center + offset * 1.3 * primitive.bounding_radius();
        let (d, _) = object_sdf(&shape, &pose, &h);
        prop_assume!(d.abs() > 0.003);
        let points: Vec<Vec3> = shape.points().iter().map(|p| pose.apply(p)).collect();
        let normals: Vec<Vec3> = shape.normals().iter().map(|n| pose.apply_vector(n)).collect();
        let w = penetration_witness(&points, &normals, &h).unwrap();
        prop_assert_eq!(d < 0.0, w < 0.0);
    }
}
