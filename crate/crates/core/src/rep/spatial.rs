//! Contact-centric spatial relations and the averaging decoder.

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::rep::ContactFrameSet;
use crate::scene::{Keypoints, NUM_KEYPOINTS};

/// Values per contact point: position (3), normal (3), offsets (21 × 3).
pub const SPATIAL_STRIDE: usize = 6 + 3 * NUM_KEYPOINTS;

/// `[K][N_o][69]`, all vectors in the contact frame of their frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialRel {
    frames: usize,
    points: usize,
    data: Vec<f64>,
}

fn read3(s: &[f64]) -> Vec3 {
    Vec3::new(s[0], s[1], s[2])
}

fn write3(s: &mut [f64], v: &Vec3) {
    s[..3].copy_from_slice(v.as_slice());
}

impl SpatialRel {
    pub fn from_raw(frames: usize, points: usize, data: Vec<f64>) -> Result<Self> {
        crate::error::ensure_len("spatial data", frames * points * SPATIAL_STRIDE, data.len())?;
        Ok(Self {
            frames,
            points,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn num_points(&self) -> usize {
        self.points
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn row(&self, k: usize, o: usize) -> &[f64] {
        let start = (k * self.points + o) * SPATIAL_STRIDE;
        &self.data[start..start + SPATIAL_STRIDE]
    }

    fn row_mut(&mut self, k: usize, o: usize) -> &mut [f64] {
        let start = (k * self.points + o) * SPATIAL_STRIDE;
        &mut self.data[start..start + SPATIAL_STRIDE]
    }

    pub fn position(&self, k: usize, o: usize) -> Vec3 {
        read3(self.row(k, o))
    }

    pub fn normal(&self, k: usize, o: usize) -> Vec3 {
        read3(&self.row(k, o)[3..])
    }

    pub fn offset(&self, k: usize, o: usize, j: usize) -> Vec3 {
        read3(&self.row(k, o)[6 + 3 * j..])
    }

    pub fn set_position(&mut self, k: usize, o: usize, v: &Vec3) {
        write3(self.row_mut(k, o), v);
    }

    pub fn set_normal(&mut self, k: usize, o: usize, v: &Vec3) {
        write3(&mut self.row_mut(k, o)[3..], v);
    }

    pub fn set_offset(&mut self, k: usize, o: usize, j: usize, v: &Vec3) {
        write3(&mut self.row_mut(k, o)[6 + 3 * j..], v);
    }

    /// The 63 offset values of one contact point at one frame.
    pub fn offsets(&self, k: usize, o: usize) -> &[f64] {
        &self.row(k, o)[6..]
    }

    pub fn offsets_mut(&mut self, k: usize, o: usize) -> &mut [f64] {
        &mut self.row_mut(k, o)[6..]
    }

    fn check(&self, frames: &ContactFrameSet) -> Result<()> {
        frames.check_frames(self.frames)?;
        crate::error::ensure_len("spatial contact points", frames.num_points(), self.points)
    }
}

/// `s_k^o = (R_kᵀ(o − t_k), R_kᵀ n, {R_kᵀ(h_j − o)})` for every frame and
/// contact point.
pub fn compute_spatial_relations(
    keypoints: &[Keypoints],
    frames: &ContactFrameSet,
) -> Result<SpatialRel> {
    frames.check_frames(keypoints.len())?;
    let n = frames.num_points();
    let mut rel = SpatialRel {
        frames: keypoints.len(),
        points: n,
        data: vec![0.0; keypoints.len() * n * SPATIAL_STRIDE],
    };
    for (k, kp) in keypoints.iter().enumerate() {
        for o in 0..n {
            let p = frames.points[k][o];
            rel.set_position(k, o, &frames.to_canonical(k, &p));
            rel.set_normal(k, o, &frames.vector_to_canonical(k, &frames.normals[k][o]));
            for (j, h) in kp.iter().enumerate() {
                rel.set_offset(k, o, j, &frames.vector_to_canonical(k, &(h - p)));
            }
        }
    }
    Ok(rel)
}

/// Each contact point votes for every keypoint with its world point plus its
/// de-canonicalized offset; the votes are averaged.
pub fn decode_trajectory_from_spatial(
    rel: &SpatialRel,
    frames: &ContactFrameSet,
) -> Result<Vec<Keypoints>> {
    rel.check(frames)?;
    let n = rel.points as f64;
    Ok((0..rel.frames)
        .map(|k| {
            std::array::from_fn(|j| {
                let sum: Vec3 = (0..rel.points)
                    .map(|o| frames.points[k][o] + frames.vector_from_canonical(k, &rel.offset(k, o, j)))
                    .sum();
                sum / n
            })
        })
        .collect())
}

/// World-frame offsets `h_j − o` rebuilt from `S`, `[K][N_o][21]`.
pub fn world_offsets_from_spatial(
    rel: &SpatialRel,
    frames: &ContactFrameSet,
) -> Result<Vec<Vec<Keypoints>>> {
    rel.check(frames)?;
    Ok((0..rel.frames)
        .map(|k| {
            (0..rel.points)
                .map(|o| std::array::from_fn(|j| frames.vector_from_canonical(k, &rel.offset(k, o, j))))
                .collect()
        })
        .collect())
}

/// Penetration witness for one hand point against convex geometry: the
/// largest `n · (h − o)` over the contact points. A negative value means
/// `h` lies behind every tangent plane, i.e. inside.
pub fn penetration_witness(points: &[Vec3], normals: &[Vec3], h: &Vec3) -> Result<f64> {
    crate::error::ensure_len("witness normals", points.len(), normals.len())?;
    if points.is_empty() {
        return Err(Error::InvalidInput("no contact points".into()));
    }
    Ok(points
        .iter()
        .zip(normals)
        .map(|(o, n)| n.dot(&(h - o)))
        .fold(f64::NEG_INFINITY, f64::max))
}
