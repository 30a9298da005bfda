//! Canonical hand trajectory: keypoints expressed in the contact frames.

use crate::error::Result;
use crate::math::Vec3;
use crate::rep::ContactFrameSet;
use crate::scene::{Keypoints, NUM_KEYPOINTS};

/// Keypoints per frame in the contact frame `(R_k, t_k)`:
/// `J̄_k = R_kᵀ (J_k − t_k)` for column vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonHandTraj {
    pub joints: Vec<Keypoints>,
}

impl CanonHandTraj {
    pub fn frames(&self) -> usize {
        self.joints.len()
    }

    /// Row-major `[K][21][3]` flattening.
    pub fn to_flat(&self) -> Vec<f64> {
        self.joints
            .iter()
            .flat_map(|kp| kp.iter().flat_map(|p| [p.x, p.y, p.z]))
            .collect()
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        let per = 3 * NUM_KEYPOINTS;
        if flat.len() % per != 0 {
            return Err(crate::Error::shape("flat trajectory", flat.len().next_multiple_of(per), flat.len()));
        }
        let joints = flat
            .chunks_exact(per)
            .map(|c| std::array::from_fn(|j| Vec3::new(c[3 * j], c[3 * j + 1], c[3 * j + 2])))
            .collect();
        Ok(Self { joints })
    }
}

pub fn canonicalize_hand_trajectory(
    keypoints: &[Keypoints],
    frames: &ContactFrameSet,
) -> Result<CanonHandTraj> {
    frames.check_frames(keypoints.len())?;
    let joints = keypoints
        .iter()
        .enumerate()
        .map(|(k, kp)| kp.map(|p| frames.to_canonical(k, &p)))
        .collect();
    Ok(CanonHandTraj { joints })
}

pub fn decanonicalize_hand_trajectory(
    canon: &CanonHandTraj,
    frames: &ContactFrameSet,
) -> Result<Vec<Keypoints>> {
    frames.check_frames(canon.frames())?;
    Ok(canon
        .joints
        .iter()
        .enumerate()
        .map(|(k, kp)| kp.map(|p| frames.from_canonical(k, &p)))
        .collect())
}
