//! Simplified 21-keypoint articulated hand.
//!
//! Keypoint 0 is the wrist. Finger `f` (thumb, index, middle, ring, pinky)
//! owns keypoints `1 + 4f ..= 4 + 4f`: three articulated joints followed by
//! the fingertip. Every articulated joint carries an axis-angle rotation;
//! the per-finger shape factor scales that finger's three phalanges. Each
//! bone is wrapped in a capsule of fixed radius, which gives the hand a
//! surface for contact and penetration queries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exp_so3, left_jacobian_so3, point_segment_distance, Mat3, Vec3};

pub const NUM_KEYPOINTS: usize = 21;
pub const NUM_FINGERS: usize = 5;
pub const NUM_ARTICULATED: usize = 15;
/// Flattened parameter count: root rotation, root translation, pose, shape.
pub const NUM_PARAMS: usize = 3 + 3 + 3 * NUM_ARTICULATED + NUM_FINGERS;

pub type Keypoints = [Vec3; NUM_KEYPOINTS];

const PARAM_ROOT_ROT: usize = 0;
const PARAM_ROOT_TRANS: usize = 3;
const PARAM_POSE: usize = 6;
const PARAM_SHAPE: usize = 6 + 3 * NUM_ARTICULATED;

/// Valid open range for per-finger bone-length scale factors.
pub const SHAPE_RANGE: (f64, f64) = (0.5, 2.0);

/// Per-bone capsule radii (m), indexed by the bone's distal keypoint.
/// Entry 0 (the wrist) is unused.
const BONE_RADII: [f64; NUM_KEYPOINTS] = [
    0.0, //
    0.010, 0.009, 0.008, 0.007, // thumb
    0.010, 0.0085, 0.0075, 0.0065, // index
    0.010, 0.0085, 0.0075, 0.0065, // middle
    0.010, 0.008, 0.007, 0.006, // ring
    0.009, 0.0075, 0.0065, 0.0055, // pinky
];

/// Kinematic tree and rest geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct HandSkeleton {
    parents: [usize; NUM_KEYPOINTS],
    /// Rest offset of each keypoint from its parent, in the hand frame.
    rest_offsets: [Vec3; NUM_KEYPOINTS],
    /// Axis along which positive rotation curls a joint toward the palm.
    flexion_axes: [Vec3; NUM_ARTICULATED],
}

impl Default for HandSkeleton {
    fn default() -> Self {
        Self::new()
    }
}

impl HandSkeleton {
    /// Right hand in its rest pose: fingers along `+y`, palm facing `-z`,
    /// thumb on the `+x` side.
    pub fn new() -> Self {
        let thumb_dir = Vec3::new(0.75, 0.62, -0.22).normalize();
        let bases = [
            Vec3::new(0.022, 0.022, -0.012),
            Vec3::new(0.024, 0.085, 0.0),
            Vec3::new(0.002, 0.090, 0.0),
            Vec3::new(-0.019, 0.085, 0.0),
            Vec3::new(-0.037, 0.076, 0.0),
        ];
        let lengths = [
            [0.036, 0.030, 0.026],
            [0.040, 0.024, 0.021],
            [0.045, 0.028, 0.023],
            [0.042, 0.026, 0.022],
            [0.032, 0.020, 0.019],
        ];
        let mut parents = [0usize; NUM_KEYPOINTS];
        let mut rest_offsets = [Vec3::zeros(); NUM_KEYPOINTS];
        let mut flexion_axes = [Vec3::zeros(); NUM_ARTICULATED];
        let palm_normal = -Vec3::z();
        for f in 0..NUM_FINGERS {
            let dir = if f == 0 { thumb_dir } else { Vec3::y() };
            let first = 1 + 4 * f;
            parents[first] = 0;
            rest_offsets[first] = bases[f];
            for b in 0..3 {
                parents[first + b + 1] = first + b;
                rest_offsets[first + b + 1] = dir * lengths[f][b];
            }
            let axis = dir.cross(&palm_normal).normalize();
            for j in 0..3 {
                flexion_axes[3 * f + j] = axis;
            }
        }
        Self {
            parents,
            rest_offsets,
            flexion_axes,
        }
    }

    pub fn parent(&self, i: usize) -> usize {
        self.parents[i]
    }

    pub fn rest_offset(&self, i: usize) -> Vec3 {
        self.rest_offsets[i]
    }

    /// Rest length of the bone ending at keypoint `i` (`i > 0`).
    pub fn rest_bone_length(&self, i: usize) -> f64 {
        self.rest_offsets[i].norm()
    }

    pub fn bone_radius(&self, i: usize) -> f64 {
        BONE_RADII[i]
    }

    pub fn flexion_axis(&self, joint: usize) -> Vec3 {
        self.flexion_axes[joint]
    }

    /// Finger owning keypoint `i`, or `None` for the wrist.
    pub fn finger_of(i: usize) -> Option<usize> {
        (i > 0).then(|| (i - 1) / 4)
    }

    /// Articulated-joint index of keypoint `i`, if it carries a rotation.
    pub fn articulation_of(i: usize) -> Option<usize> {
        let f = Self::finger_of(i)?;
        let slot = (i - 1) % 4;
        (slot < 3).then_some(3 * f + slot)
    }

    /// Keypoint index of articulated joint `j`.
    pub fn keypoint_of_joint(j: usize) -> usize {
        1 + 4 * (j / 3) + j % 3
    }

    /// Whether the bone ending at `i` is scaled by its finger's shape factor.
    fn is_scaled(i: usize) -> bool {
        i > 0 && (i - 1) % 4 != 0
    }

    /// Keypoints used for rigid root alignment (wrist and finger bases);
    /// their hand-frame positions do not depend on pose or shape.
    pub fn rigid_keypoints() -> [usize; 6] {
        [0, 1, 5, 9, 13, 17]
    }

    fn is_ancestor(&self, a: usize, mut i: usize) -> bool {
        while i != 0 {
            i = self.parents[i];
            if i == a {
                return true;
            }
        }
        false
    }
}

/// Root pose, articulation, and shape of one hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandParams {
    /// Root rotation, axis-angle (rad).
    pub root_rot: [f64; 3],
    /// Wrist position (m).
    pub root_trans: [f64; 3],
    /// Per-joint axis-angle rotations (rad), 15 joints x 3.
    #[serde(with = "serde_pose")]
    pub pose: [[f64; 3]; NUM_ARTICULATED],
    /// Per-finger phalanx length scale factors.
    pub shape: [f64; NUM_FINGERS],
}

mod serde_pose {
    use super::NUM_ARTICULATED;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(
        v: &[[f64; 3]; NUM_ARTICULATED],
        s: S,
    ) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<[[f64; 3]; NUM_ARTICULATED], D::Error> {
        let v = Vec::<[f64; 3]>::deserialize(d)?;
        v.try_into()
            .map_err(|v: Vec<_>| D::Error::invalid_length(v.len(), &"15 joint rotations"))
    }
}

impl Default for HandParams {
    fn default() -> Self {
        Self::rest()
    }
}

impl HandParams {
    pub fn rest() -> Self {
        Self {
            root_rot: [0.0; 3],
            root_trans: [0.0; 3],
            pose: [[0.0; 3]; NUM_ARTICULATED],
            shape: [1.0; NUM_FINGERS],
        }
    }

    pub fn root_rotation(&self) -> Vec3 {
        Vec3::from(self.root_rot)
    }

    pub fn root_translation(&self) -> Vec3 {
        Vec3::from(self.root_trans)
    }

    pub fn joint_rotation(&self, j: usize) -> Vec3 {
        Vec3::from(self.pose[j])
    }

    pub fn to_vector(&self) -> [f64; NUM_PARAMS] {
        let mut out = [0.0; NUM_PARAMS];
        out[PARAM_ROOT_ROT..PARAM_ROOT_ROT + 3].copy_from_slice(&self.root_rot);
        out[PARAM_ROOT_TRANS..PARAM_ROOT_TRANS + 3].copy_from_slice(&self.root_trans);
        for j in 0..NUM_ARTICULATED {
            out[PARAM_POSE + 3 * j..PARAM_POSE + 3 * j + 3].copy_from_slice(&self.pose[j]);
        }
        out[PARAM_SHAPE..].copy_from_slice(&self.shape);
        out
    }

    pub fn from_vector(v: &[f64]) -> Self {
        assert_eq!(v.len(), NUM_PARAMS);
        let mut p = Self::rest();
        p.root_rot.copy_from_slice(&v[PARAM_ROOT_ROT..PARAM_ROOT_ROT + 3]);
        p.root_trans
            .copy_from_slice(&v[PARAM_ROOT_TRANS..PARAM_ROOT_TRANS + 3]);
        for j in 0..NUM_ARTICULATED {
            p.pose[j].copy_from_slice(&v[PARAM_POSE + 3 * j..PARAM_POSE + 3 * j + 3]);
        }
        p.shape.copy_from_slice(&v[PARAM_SHAPE..]);
        p
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }

    /// Full validity: finite entries and shape factors inside [`SHAPE_RANGE`].
    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::InvalidInput("hand parameters must be finite".into()));
        }
        if let Some(b) = self
            .shape
            .iter()
            .find(|b| !(**b > SHAPE_RANGE.0 && **b < SHAPE_RANGE.1))
        {
            return Err(Error::InvalidInput(format!(
                "shape factor {b} outside {SHAPE_RANGE:?}"
            )));
        }
        Ok(())
    }

    pub(crate) fn root_slice_index() -> (usize, usize, usize, usize) {
        (PARAM_ROOT_ROT, PARAM_ROOT_TRANS, PARAM_POSE, PARAM_SHAPE)
    }
}

/// Posed keypoints plus the global rotation of every keypoint's frame.
#[derive(Debug, Clone)]
pub struct PosedHand {
    pub keypoints: Keypoints,
    pub rotations: [Mat3; NUM_KEYPOINTS],
}

fn pose_chain(skeleton: &HandSkeleton, params: &HandParams) -> PosedHand {
    let root = exp_so3(&params.root_rotation());
    let mut keypoints = [Vec3::zeros(); NUM_KEYPOINTS];
    let mut rotations = [Mat3::identity(); NUM_KEYPOINTS];
    keypoints[0] = params.root_translation();
    rotations[0] = root;
    for i in 1..NUM_KEYPOINTS {
        let p = skeleton.parents[i];
        let mut offset = skeleton.rest_offsets[i];
        if HandSkeleton::is_scaled(i) {
            offset *= params.shape[HandSkeleton::finger_of(i).unwrap()];
        }
        keypoints[i] = keypoints[p] + rotations[p] * offset;
        rotations[i] = match HandSkeleton::articulation_of(i) {
            Some(j) => rotations[p] * exp_so3(&params.joint_rotation(j)),
            None => rotations[p],
        };
    }
    PosedHand {
        keypoints,
        rotations,
    }
}

/// World keypoints for `params`. Fails on non-finite parameters.
pub fn forward_kinematics(skeleton: &HandSkeleton, params: &HandParams) -> Result<Keypoints> {
    Ok(pose_hand(skeleton, params)?.keypoints)
}

pub fn pose_hand(skeleton: &HandSkeleton, params: &HandParams) -> Result<PosedHand> {
    if !params.is_finite() {
        return Err(Error::InvalidInput("hand parameters must be finite".into()));
    }
    Ok(pose_chain(skeleton, params))
}

/// Keypoint Jacobian: `jac[3 * i + a][p]` is `d keypoint_i[a] / d param_p`
/// in the [`HandParams::to_vector`] layout.
pub fn keypoint_jacobian(
    skeleton: &HandSkeleton,
    params: &HandParams,
) -> Result<(Keypoints, Vec<[f64; NUM_PARAMS]>)> {
    let posed = pose_hand(skeleton, params)?;
    let kp = &posed.keypoints;
    let rots = &posed.rotations;
    let mut jac = vec![[0.0; NUM_PARAMS]; 3 * NUM_KEYPOINTS];
    let (p_rot, p_trans, p_pose, p_shape) = HandParams::root_slice_index();

    let jl_root = left_jacobian_so3(&params.root_rotation());
    let joint_axes: Vec<[Vec3; 3]> = (0..NUM_ARTICULATED)
        .map(|j| {
            let k = HandSkeleton::keypoint_of_joint(j);
            let g = rots[skeleton.parents[k]] * left_jacobian_so3(&params.joint_rotation(j));
            [g.column(0).into(), g.column(1).into(), g.column(2).into()]
        })
        .collect();

    for i in 0..NUM_KEYPOINTS {
        let rows = 3 * i;
        let rel = kp[i] - kp[0];
        for c in 0..3 {
            let d = jl_root.column(c).into_owned().cross(&rel);
            for a in 0..3 {
                jac[rows + a][p_rot + c] = d[a];
            }
            jac[rows + c][p_trans + c] = 1.0;
        }
        for (j, axes) in joint_axes.iter().enumerate() {
            let k = HandSkeleton::keypoint_of_joint(j);
            if !skeleton.is_ancestor(k, i) {
                continue;
            }
            let lever = kp[i] - kp[k];
            for (c, axis) in axes.iter().enumerate() {
                let d = axis.cross(&lever);
                for a in 0..3 {
                    jac[rows + a][p_pose + 3 * j + c] = d[a];
                }
            }
        }
        // Shape: every scaled bone on the path to `i` contributes its
        // unscaled world direction.
        let mut m = i;
        while m != 0 {
            if HandSkeleton::is_scaled(m) {
                let f = HandSkeleton::finger_of(m).unwrap();
                let d = rots[skeleton.parents[m]] * skeleton.rest_offsets[m];
                for a in 0..3 {
                    jac[rows + a][p_shape + f] += d[a];
                }
            }
            m = skeleton.parents[m];
        }
    }
    Ok((posed.keypoints, jac))
}

/// Fixed sampling pattern over the capsule surface, shared by every pose so
/// that samples correspond one-to-one across hands.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePattern {
    samples: Vec<SurfaceSample>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SurfaceSample {
    /// Distal keypoint of the bone.
    bone: usize,
    /// Fraction along the bone; values above 1 never occur (caps use `cap`).
    along: f64,
    /// Direction from the bone axis in the parent frame (unit length).
    radial: Vec3,
    /// Fingertip cap samples push out past the distal end.
    cap: Option<(f64, f64)>,
}

impl SurfacePattern {
    /// Ring count per bone grows linearly with `density` (samples per meter
    /// of rest bone length); each ring has a fixed number of points.
    pub fn new(skeleton: &HandSkeleton, density: f64) -> Result<Self> {
        if !(density > 0.0 && density.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "surface density must be positive, got {density}"
            )));
        }
        let mut samples = Vec::new();
        for bone in 1..NUM_KEYPOINTS {
            let offset = skeleton.rest_offsets[bone];
            let dir = offset.normalize();
            let u = crate::math::any_orthonormal(&dir);
            let w = dir.cross(&u);
            let rings = (skeleton.rest_bone_length(bone) * density).ceil() as usize + 1;
            let per_ring = if skeleton.bone_radius(bone) >= 0.009 { 12 } else { 8 };
            for r in 0..rings {
                let along = r as f64 / (rings - 1) as f64;
                for k in 0..per_ring {
                    let phi = 2.0 * std::f64::consts::PI * (k as f64 + 0.5 * (r % 2) as f64)
                        / per_ring as f64;
                    samples.push(SurfaceSample {
                        bone,
                        along,
                        radial: u * phi.cos() + w * phi.sin(),
                        cap: None,
                    });
                }
            }
            let is_tip = bone % 4 == 0;
            if is_tip {
                for (lat, count) in [(std::f64::consts::FRAC_PI_4, per_ring), (1.2, 4)] {
                    for k in 0..count {
                        let phi = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                        samples.push(SurfaceSample {
                            bone,
                            along: 1.0,
                            radial: u * phi.cos() + w * phi.sin(),
                            cap: Some((lat.cos(), lat.sin())),
                        });
                    }
                }
                samples.push(SurfaceSample {
                    bone,
                    along: 1.0,
                    radial: u,
                    cap: Some((0.0, 1.0)),
                });
            }
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Bone (distal keypoint index) of every sample.
    pub fn bones(&self) -> impl Iterator<Item = usize> + '_ {
        self.samples.iter().map(|s| s.bone)
    }

    /// World surface points for a posed hand.
    pub fn place(&self, skeleton: &HandSkeleton, posed: &PosedHand) -> Vec<Vec3> {
        self.samples
            .iter()
            .map(|s| {
                let p = skeleton.parents[s.bone];
                let a = posed.keypoints[p];
                let b = posed.keypoints[s.bone];
                let frame = posed.rotations[p];
                let radius = skeleton.bone_radius(s.bone);
                let radial = frame * s.radial;
                match s.cap {
                    None => a + (b - a) * s.along + radial * radius,
                    Some((c, z)) => {
                        let axis = (b - a).normalize();
                        b + (radial * c + axis * z) * radius
                    }
                }
            })
            .collect()
    }
}

impl SurfacePattern {
    /// World surface points from keypoints alone. The root frame is the
    /// rigid alignment of the palm keypoints to the rest pose, and each bone
    /// frame is its parent's frame followed by the minimal rotation onto the
    /// posed bone direction, so bone twist is ignored (capsules are
    /// symmetric about their axis).
    pub fn place_keypoints(&self, skeleton: &HandSkeleton, keypoints: &Keypoints) -> Vec<Vec3> {
        let rest = pose_chain(skeleton, &HandParams::rest()).keypoints;
        let rigid = HandSkeleton::rigid_keypoints();
        let a: Vec<Vec3> = rigid.iter().map(|&i| rest[i]).collect();
        let b: Vec<Vec3> = rigid.iter().map(|&i| keypoints[i]).collect();
        let mut frames = [Mat3::identity(); NUM_KEYPOINTS];
        frames[0] = crate::math::kabsch(&a, &b).0;
        for bone in 1..NUM_KEYPOINTS {
            let parent = frames[skeleton.parents[bone]];
            // Sample radials are perpendicular to the rest bone direction.
            let expected = parent * skeleton.rest_offsets[bone].normalize();
            let now = keypoints[bone] - keypoints[skeleton.parents[bone]];
            frames[bone] = match now.try_normalize(1e-12) {
                Some(d) => swing(&expected, &d) * parent,
                None => parent,
            };
        }
        self.samples
            .iter()
            .map(|s| {
                let a = keypoints[skeleton.parents[s.bone]];
                let b = keypoints[s.bone];
                let radius = skeleton.bone_radius(s.bone);
                let radial = frames[s.bone] * s.radial;
                match s.cap {
                    None => a + (b - a) * s.along + radial * radius,
                    Some((c, z)) => {
                        let axis = (b - a).try_normalize(1e-12).unwrap_or(Vec3::y());
                        b + (radial * c + axis * z) * radius
                    }
                }
            })
            .collect()
    }
}

/// Minimal rotation taking unit `a` onto unit `b`.
fn swing(a: &Vec3, b: &Vec3) -> Mat3 {
    let axis = a.cross(b);
    let s = axis.norm();
    let c = a.dot(b);
    if s < 1e-12 {
        if c > 0.0 {
            return Mat3::identity();
        }
        let perp = crate::math::any_orthonormal(a);
        return crate::math::exp_so3(&(perp * std::f64::consts::PI));
    }
    crate::math::exp_so3(&(axis / s * s.atan2(c)))
}

/// Capsule-surface points of a posed hand; see [`SurfacePattern`].
pub fn sample_hand_surface(
    skeleton: &HandSkeleton,
    params: &HandParams,
    density: f64,
) -> Result<Vec<Vec3>> {
    let pattern = SurfacePattern::new(skeleton, density)?;
    let posed = pose_hand(skeleton, params)?;
    Ok(pattern.place(skeleton, &posed))
}

/// Distance from `x` to the capsule hand surface, negative inside. Only
/// keypoints are needed: capsule axes join each keypoint to its parent.
pub fn hand_signed_distance(skeleton: &HandSkeleton, keypoints: &Keypoints, x: &Vec3) -> f64 {
    (1..NUM_KEYPOINTS)
        .map(|i| {
            point_segment_distance(x, &keypoints[skeleton.parents[i]], &keypoints[i])
                - skeleton.bone_radius(i)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Axis-aligned bounds of the capsule hand.
pub fn hand_bounds(skeleton: &HandSkeleton, keypoints: &Keypoints) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for i in 1..NUM_KEYPOINTS {
        let r = skeleton.bone_radius(i);
        for p in [keypoints[skeleton.parents[i]], keypoints[i]] {
            lo = lo.inf(&(p - Vec3::repeat(r)));
            hi = hi.sup(&(p + Vec3::repeat(r)));
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_params(rng: &mut impl Rng) -> HandParams {
        let mut v = [0.0; NUM_PARAMS];
        for x in v.iter_mut().take(PARAM_SHAPE) {
            *x = rng.random_range(-1.0..1.0);
        }
        for x in v.iter_mut().skip(PARAM_SHAPE) {
            *x = rng.random_range(0.7..1.4);
        }
        HandParams::from_vector(&v)
    }

    #[test]
    fn skeleton_is_a_tree_with_positive_bones() {
        let s = HandSkeleton::new();
        for i in 1..NUM_KEYPOINTS {
            assert!(s.parent(i) < i);
            assert!(s.rest_bone_length(i) > 0.0);
            let r = s.bone_radius(i);
            assert!((0.004..=0.010).contains(&r));
        }
    }

    #[test]
    fn rest_params_give_rest_pose() {
        let s = HandSkeleton::new();
        let kp = forward_kinematics(&s, &HandParams::rest()).unwrap();
        for i in 1..NUM_KEYPOINTS {
            assert_eq!(kp[i], kp[s.parent(i)] + s.rest_offset(i));
        }
    }

    #[test]
    fn root_translation_shifts_everything() {
        let s = HandSkeleton::new();
        let rest = forward_kinematics(&s, &HandParams::rest()).unwrap();
        let mut p = HandParams::rest();
        p.root_trans = [0.1, 0.0, 0.0];
        let moved = forward_kinematics(&s, &p).unwrap();
        for (a, b) in rest.iter().zip(&moved) {
            assert!((b - a - Vec3::new(0.1, 0.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn non_finite_params_rejected() {
        let mut p = HandParams::rest();
        p.pose[3][1] = f64::NAN;
        assert!(matches!(
            forward_kinematics(&HandSkeleton::new(), &p),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn positive_flexion_curls_toward_palm() {
        let s = HandSkeleton::new();
        let mut p = HandParams::rest();
        for j in 3..6 {
            let a = s.flexion_axis(j) * 0.5;
            p.pose[j] = [a.x, a.y, a.z];
        }
        let kp = forward_kinematics(&s, &p).unwrap();
        assert!(kp[8].z < -0.02, "index tip should move palm-ward: {}", kp[8]);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let s = HandSkeleton::new();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let params = random_params(&mut rng);
            let (_, jac) = keypoint_jacobian(&s, &params).unwrap();
            let base = params.to_vector();
            for p in 0..NUM_PARAMS {
                let mut plus = base;
                let mut minus = base;
                plus[p] += h;
                minus[p] -= h;
                let kp_plus = forward_kinematics(&s, &HandParams::from_vector(&plus)).unwrap();
                let kp_minus = forward_kinematics(&s, &HandParams::from_vector(&minus)).unwrap();
                for i in 0..NUM_KEYPOINTS {
                    for a in 0..3 {
                        let fd = (kp_plus[i][a] - kp_minus[i][a]) / (2.0 * h);
                        worst = worst.max((fd - jac[3 * i + a][p]).abs());
                    }
                }
            }
        }
        assert!(worst < 1e-5, "max jacobian error {worst}");
    }

    #[test]
    fn surface_sampling_is_deterministic_and_on_capsules() {
        let s = HandSkeleton::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = random_params(&mut rng);
        let a = sample_hand_surface(&s, &params, 300.0).unwrap();
        let b = sample_hand_surface(&s, &params, 300.0).unwrap();
        assert_eq!(a, b);
        let pattern = SurfacePattern::new(&s, 300.0).unwrap();
        let kp = forward_kinematics(&s, &params).unwrap();
        for (x, bone) in a.iter().zip(pattern.bones()) {
            let d = point_segment_distance(x, &kp[s.parent(bone)], &kp[bone]);
            assert!((d - s.bone_radius(bone)).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_count_linear_in_density() {
        let s = HandSkeleton::new();
        let m1 = SurfacePattern::new(&s, 300.0).unwrap().len() as f64;
        let m2 = SurfacePattern::new(&s, 600.0).unwrap().len() as f64;
        let ratio = m2 / m1;
        assert!((ratio - 2.0).abs() / 2.0 < 0.1, "ratio {ratio}");
        assert!(SurfacePattern::new(&s, 0.0).is_err());
    }

    #[test]
    fn keypoints_lie_inside_the_hand() {
        let s = HandSkeleton::new();
        let kp = forward_kinematics(&s, &HandParams::rest()).unwrap();
        for p in &kp {
            assert!(hand_signed_distance(&s, &kp, p) < 0.0);
        }
        assert!(hand_signed_distance(&s, &kp, &Vec3::new(0.0, 0.0, 0.2)) > 0.1);
    }

    #[test]
    fn keypoint_placement_lies_on_capsules() {
        let sk = HandSkeleton::new();
        let pattern = SurfacePattern::new(&sk, 300.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let kp = forward_kinematics(&sk, &random_params(&mut rng)).unwrap();
            let pts = pattern.place_keypoints(&sk, &kp);
            assert_eq!(pts.len(), pattern.len());
            for (p, bone) in pts.iter().zip(pattern.bones()) {
                let d = point_segment_distance(p, &kp[sk.parent(bone)], &kp[bone]);
                assert!((d - sk.bone_radius(bone)).abs() < 1e-9);
            }
        }
        let rest = forward_kinematics(&sk, &HandParams::rest()).unwrap();
        let posed = pose_hand(&sk, &HandParams::rest()).unwrap();
        let a = pattern.place_keypoints(&sk, &rest);
        let b = pattern.place(&sk, &posed);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-12);
        }
    }
}
