use crate::error::{Error, Result};
use crate::scene::hand::{forward_kinematics, HandParams, HandSkeleton, Keypoints};
use crate::scene::shape::{ObjectPose, ObjectShape};

/// A hand-object interaction clip: per-frame hand keypoints, optional hand
/// parameters that generated them, and a rigid object trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct HoiSequence {
    pub keypoints: Vec<Keypoints>,
    pub hand_params: Option<Vec<HandParams>>,
    pub object: ObjectShape,
    pub object_poses: Vec<ObjectPose>,
}

/// Tolerance for hand parameters reproducing the stored keypoints.
pub const FK_CONSISTENCY_TOL: f64 = 1e-9;

impl HoiSequence {
    pub fn new(
        keypoints: Vec<Keypoints>,
        hand_params: Option<Vec<HandParams>>,
        object: ObjectShape,
        object_poses: Vec<ObjectPose>,
    ) -> Result<Self> {
        let seq = Self {
            keypoints,
            hand_params,
            object,
            object_poses,
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Builds a sequence whose keypoints come from forward kinematics.
    pub fn from_params(
        skeleton: &HandSkeleton,
        params: Vec<HandParams>,
        object: ObjectShape,
        object_poses: Vec<ObjectPose>,
    ) -> Result<Self> {
        let keypoints = params
            .iter()
            .map(|p| forward_kinematics(skeleton, p))
            .collect::<Result<Vec<_>>>()?;
        Self::new(keypoints, Some(params), object, object_poses)
    }

    pub fn frames(&self) -> usize {
        self.keypoints.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.frames();
        if k < 2 {
            return Err(Error::InsufficientFrames { needed: 2, got: k });
        }
        crate::error::ensure_len("object poses", k, self.object_poses.len())?;
        if self
            .keypoints
            .iter()
            .flatten()
            .any(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidInput("keypoints must be finite".into()));
        }
        for pose in &self.object_poses {
            if !pose.translation.iter().all(|c| c.is_finite())
                || (pose.rotation.norm() - 1.0).abs() > 1e-9
            {
                return Err(Error::InvalidInput(
                    "object pose must be finite with a unit quaternion".into(),
                ));
            }
        }
        if let Some(params) = &self.hand_params {
            crate::error::ensure_len("hand params", k, params.len())?;
            let skeleton = HandSkeleton::new();
            for (p, kp) in params.iter().zip(&self.keypoints) {
                let fk = forward_kinematics(&skeleton, p)?;
                let err = fk
                    .iter()
                    .zip(kp)
                    .map(|(a, b)| (a - b).abs().max())
                    .fold(0.0, f64::max);
                if err > FK_CONSISTENCY_TOL {
                    return Err(Error::InvalidInput(format!(
                        "hand params disagree with keypoints by {err:e} m"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Same object trajectory with replacement keypoints (hand params dropped).
    pub fn with_keypoints(&self, keypoints: Vec<Keypoints>) -> Result<Self> {
        Self::new(
            keypoints,
            None,
            self.object.clone(),
            self.object_poses.clone(),
        )
    }
}
