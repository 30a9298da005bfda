//! World model: kinematic hand, analytic objects, clean clip generation, and
//! parameter-space noise.

pub mod hand;
pub mod noise;
pub mod sequence;
pub mod shape;
pub mod synth;

pub use hand::{
    forward_kinematics, keypoint_jacobian, sample_hand_surface, HandParams, HandSkeleton,
    Keypoints, SurfacePattern, NUM_KEYPOINTS,
};
pub use noise::{perturb_beta, perturb_gaussian, BetaNoise, GaussianNoise};
pub use sequence::HoiSequence;
pub use shape::{object_sdf, ObjectPose, ObjectShape, Primitive};
pub use synth::{generate_synthetic_sequence, ObjectChoice, SynthConfig};
