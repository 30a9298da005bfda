//! On-disk formats: trajectory JSON, flat binary keypoints and OBJ frames.

use std::path::Path;

use geneoh::io::atomic_write;
use geneoh::math::Vec3;
use geneoh::scene::{HandParams, HoiSequence, Keypoints, ObjectPose, ObjectShape, Primitive, NUM_KEYPOINTS};
use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const TRAJECTORY_VERSION: u32 = 1;
pub const BINARY_MAGIC: &[u8; 4] = b"GOHK";
pub const BINARY_VERSION: u32 = 1;
/// Quaternions further than this from unit norm are rejected.
const QUAT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    /// `[w, x, y, z]`.
    pub quat: [f64; 4],
    pub trans: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectRecord {
    pub kind: String,
    /// sphere `[r]`, box `[hx, hy, hz]`, cylinder `[r, half_height]`,
    /// torus `[major, minor]`.
    pub dims: Vec<f64>,
    pub poses: Vec<PoseRecord>,
}

/// Trajectory file. Lengths are meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFile {
    pub version: u32,
    #[serde(rename = "K")]
    pub frames: usize,
    pub keypoints: Vec<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand_params: Option<Vec<HandParams>>,
    pub object: ObjectRecord,
}

pub fn primitive_dims(p: &Primitive) -> Vec<f64> {
    match *p {
        Primitive::Sphere { radius } => vec![radius],
        Primitive::Box { half_extents } => half_extents.to_vec(),
        Primitive::Cylinder { radius, half_height } => vec![radius, half_height],
        Primitive::Torus {
            major_radius,
            minor_radius,
        } => vec![major_radius, minor_radius],
    }
}

pub fn primitive_from_dims(kind: &str, dims: &[f64]) -> CliResult<Primitive> {
    let want = |n: usize| {
        if dims.len() == n {
            Ok(())
        } else {
            Err(CliError::Validation(format!("object kind {kind} needs {n} dims, got {}", dims.len())))
        }
    };
    let p = match kind {
        "sphere" => {
            want(1)?;
            Primitive::Sphere { radius: dims[0] }
        }
        "box" => {
            want(3)?;
            Primitive::Box {
                half_extents: [dims[0], dims[1], dims[2]],
            }
        }
        "cylinder" => {
            want(2)?;
            Primitive::Cylinder {
                radius: dims[0],
                half_height: dims[1],
            }
        }
        "torus" => {
            want(2)?;
            Primitive::Torus {
                major_radius: dims[0],
                minor_radius: dims[1],
            }
        }
        other => return Err(CliError::Validation(format!("unknown object kind {other:?}"))),
    };
    Ok(p)
}

impl TrajectoryFile {
    pub fn from_sequence(seq: &HoiSequence) -> Self {
        let primitive = seq.object.primitive();
        Self {
            version: TRAJECTORY_VERSION,
            frames: seq.frames(),
            keypoints: seq
                .keypoints
                .iter()
                .map(|kp| kp.iter().map(|p| [p.x, p.y, p.z]).collect())
                .collect(),
            hand_params: seq.hand_params.clone(),
            object: ObjectRecord {
                kind: primitive.kind_name().to_string(),
                dims: primitive_dims(primitive),
                poses: seq
                    .object_poses
                    .iter()
                    .map(|p| {
                        let q = p.rotation.quaternion();
                        PoseRecord {
                            quat: [q.w, q.i, q.j, q.k],
                            trans: [p.translation.x, p.translation.y, p.translation.z],
                        }
                    })
                    .collect(),
            },
        }
    }

    pub fn to_sequence(&self) -> CliResult<HoiSequence> {
        if self.version != TRAJECTORY_VERSION {
            return Err(CliError::Validation(format!("unsupported trajectory version {}", self.version)));
        }
        if self.keypoints.len() != self.frames || self.object.poses.len() != self.frames {
            return Err(CliError::Validation(format!(
                "K = {} but {} keypoint frames and {} object poses",
                self.frames,
                self.keypoints.len(),
                self.object.poses.len()
            )));
        }
        let keypoints = self
            .keypoints
            .iter()
            .map(|frame| keypoints_from_rows(frame))
            .collect::<CliResult<Vec<_>>>()?;
        let poses = self
            .object
            .poses
            .iter()
            .map(|p| {
                let [w, x, y, z] = p.quat;
                let q = Quaternion::new(w, x, y, z);
                if !((q.norm() - 1.0).abs() <= QUAT_NORM_TOL) {
                    return Err(CliError::Validation(format!("quaternion {:?} is not unit length", p.quat)));
                }
                // Renormalizing an already unit quaternion would perturb its
                // last bits, breaking exact round trips.
                let unit = if (q.norm() - 1.0).abs() <= 1e-12 {
                    UnitQuaternion::new_unchecked(q)
                } else {
                    UnitQuaternion::from_quaternion(q)
                };
                Ok(ObjectPose::new(unit, Vec3::from(p.trans)))
            })
            .collect::<CliResult<Vec<_>>>()?;
        let shape = ObjectShape::new(primitive_from_dims(&self.object.kind, &self.object.dims)?)?;
        Ok(HoiSequence::new(keypoints, self.hand_params.clone(), shape, poses)?)
    }
}

fn keypoints_from_rows(rows: &[[f64; 3]]) -> CliResult<Keypoints> {
    if rows.len() != NUM_KEYPOINTS {
        return Err(CliError::Validation(format!(
            "a frame needs {NUM_KEYPOINTS} keypoints, got {}",
            rows.len()
        )));
    }
    Ok(std::array::from_fn(|j| Vec3::from(rows[j])))
}

pub fn read_sequence(path: &Path) -> CliResult<HoiSequence> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: TrajectoryFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    file.to_sequence()
        .map_err(|e| e.context(&path.display().to_string()))
}

pub fn write_sequence(path: &Path, seq: &HoiSequence) -> CliResult<()> {
    write_json(path, &TrajectoryFile::from_sequence(seq))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    bytes.push(b'\n');
    Ok(atomic_write(path, &bytes)?)
}

/// `GOHK` magic, then `u32` version, frames, keypoints and coordinates
/// (3), then the keypoints as `f32`, all little-endian.
pub fn encode_keypoints(keypoints: &[Keypoints]) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + keypoints.len() * NUM_KEYPOINTS * 12);
    out.extend_from_slice(BINARY_MAGIC);
    for v in [BINARY_VERSION, keypoints.len() as u32, NUM_KEYPOINTS as u32, 3] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in keypoints.iter().flatten() {
        for c in p.iter() {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_keypoints(bytes: &[u8]) -> CliResult<Vec<Keypoints>> {
    let bad = |why: &str| CliError::Validation(format!("malformed GOHK data: {why}"));
    if bytes.len() < 20 || &bytes[..4] != BINARY_MAGIC {
        return Err(bad("missing header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
    let (version, frames, joints, coords) = (word(0), word(1) as usize, word(2) as usize, word(3));
    if version != BINARY_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    if joints != NUM_KEYPOINTS || coords != 3 {
        return Err(bad(&format!("shape {frames}x{joints}x{coords}")));
    }
    let body = &bytes[20..];
    if Some(body.len()) != frames.checked_mul(NUM_KEYPOINTS * 12) {
        return Err(bad("body length disagrees with the header"));
    }
    let values: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok(values
        .chunks_exact(3 * NUM_KEYPOINTS)
        .map(|f| std::array::from_fn(|j| Vec3::new(f[3 * j], f[3 * j + 1], f[3 * j + 2])))
        .collect())
}

/// One OBJ frame: hand surface vertices, then object surface vertices.
pub fn obj_frame(hand: &[Vec3], object: &[Vec3]) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "# hand {} object {}", hand.len(), object.len());
    let _ = writeln!(s, "o hand");
    for p in hand {
        let _ = writeln!(s, "v {:.6} {:.6} {:.6}", p.x, p.y, p.z);
    }
    let _ = writeln!(s, "o object");
    for p in object {
        let _ = writeln!(s, "v {:.6} {:.6} {:.6}", p.x, p.y, p.z);
    }
    s
}
