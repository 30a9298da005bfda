//! Contact-centric temporal relations and their integration back to offsets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};
use crate::rep::ContactFrameSet;
use crate::scene::{Keypoints, NUM_KEYPOINTS};

/// Values per keypoint: `d`, `v_ho` (3), `e_par`, `e_perp`.
pub const KEYPOINT_STRIDE: usize = 6;
/// Values per contact point: `v_o` (3) then one keypoint block per joint.
pub const TEMPORAL_STRIDE: usize = 3 + KEYPOINT_STRIDE * NUM_KEYPOINTS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalParams {
    /// Distance falloff of the error-highlighting weight (1/m).
    pub k: f64,
    pub k_a: f64,
    pub k_b: f64,
}

impl Default for TemporalParams {
    fn default() -> Self {
        Self {
            k: 100.0,
            k_a: 1.0,
            k_b: 1.0,
        }
    }
}

/// Per-transition statistics of one keypoint relative to one contact point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStats {
    pub distance: f64,
    pub relative_velocity: Vec3,
    pub e_parallel: f64,
    pub e_perpendicular: f64,
}

impl PairStats {
    /// `h`, `o`: positions at frame k; `vh`, `vo`: forward differences; `n`:
    /// contact normal at frame k.
    pub fn compute(h: &Vec3, o: &Vec3, vh: &Vec3, vo: &Vec3, n: &Vec3, params: &TemporalParams) -> Self {
        let distance = (h - o).norm();
        let relative_velocity = vh - vo;
        let v_perp = n * relative_velocity.dot(n);
        let v_par = relative_velocity - v_perp;
        let w = (-params.k * distance).exp();
        Self {
            distance,
            relative_velocity,
            e_parallel: w * params.k_a * v_par.norm(),
            e_perpendicular: w * params.k_b * v_perp.norm(),
        }
    }
}

/// `[K−1][N_o][129]`. Velocities are world-frame forward differences with
/// `Δt = 1` frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalRel {
    transitions: usize,
    points: usize,
    data: Vec<f64>,
}

impl TemporalRel {
    pub fn from_raw(transitions: usize, points: usize, data: Vec<f64>) -> Result<Self> {
        crate::error::ensure_len("temporal data", transitions * points * TEMPORAL_STRIDE, data.len())?;
        Ok(Self {
            transitions,
            points,
            data,
        })
    }

    pub fn transitions(&self) -> usize {
        self.transitions
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

    /// The 129 values of one contact point at one transition.
    pub fn row(&self, k: usize, o: usize) -> &[f64] {
        let start = (k * self.points + o) * TEMPORAL_STRIDE;
        &self.data[start..start + TEMPORAL_STRIDE]
    }

    pub fn row_mut(&mut self, k: usize, o: usize) -> &mut [f64] {
        let start = (k * self.points + o) * TEMPORAL_STRIDE;
        &mut self.data[start..start + TEMPORAL_STRIDE]
    }

    pub fn object_velocity(&self, k: usize, o: usize) -> Vec3 {
        let r = self.row(k, o);
        Vec3::new(r[0], r[1], r[2])
    }

    pub fn pair(&self, k: usize, o: usize, j: usize) -> PairStats {
        let r = &self.row(k, o)[3 + KEYPOINT_STRIDE * j..];
        PairStats {
            distance: r[0],
            relative_velocity: Vec3::new(r[1], r[2], r[3]),
            e_parallel: r[4],
            e_perpendicular: r[5],
        }
    }

    /// Applies `rot_for(k)` to every vector block of transition k.
    fn map_vectors(&self, rot_for: impl Fn(usize) -> Mat3) -> Self {
        let mut out = self.clone();
        for k in 0..self.transitions {
            let r = rot_for(k);
            for o in 0..self.points {
                rotate_row(out.row_mut(k, o), &r);
            }
        }
        out
    }

    /// Same statistics with velocities expressed in the contact frame of the
    /// transition's first frame. Scalars are untouched.
    pub fn to_canonical(&self, frames: &ContactFrameSet) -> Result<Self> {
        self.check(frames)?;
        Ok(self.map_vectors(|k| frames.rotations[k].transpose()))
    }

    pub fn from_canonical(&self, frames: &ContactFrameSet) -> Result<Self> {
        self.check(frames)?;
        Ok(self.map_vectors(|k| frames.rotations[k]))
    }

    pub fn rotated(&self, r: &Mat3) -> Self {
        self.map_vectors(|_| *r)
    }

    fn check(&self, frames: &ContactFrameSet) -> Result<()> {
        frames.check_frames(self.transitions + 1)?;
        crate::error::ensure_len("temporal contact points", frames.num_points(), self.points)
    }
}

fn write_row(r: &mut [f64], vo: &Vec3, pairs: &[PairStats]) {
    r[..3].copy_from_slice(vo.as_slice());
    for (j, p) in pairs.iter().enumerate() {
        let b = &mut r[3 + KEYPOINT_STRIDE * j..3 + KEYPOINT_STRIDE * (j + 1)];
        b[0] = p.distance;
        b[1..4].copy_from_slice(p.relative_velocity.as_slice());
        b[4] = p.e_parallel;
        b[5] = p.e_perpendicular;
    }
}

/// Rotates the object velocity and every relative velocity of one row.
pub fn rotate_row(row: &mut [f64], r: &Mat3) {
    rotate_in_place(&mut row[..3], r);
    for j in 0..NUM_KEYPOINTS {
        let s = 3 + KEYPOINT_STRIDE * j + 1;
        rotate_in_place(&mut row[s..s + 3], r);
    }
}

/// Fills one 129-value row for transition `k` and contact point `o`.
pub fn temporal_row(
    keypoints: &[Keypoints],
    frames: &ContactFrameSet,
    params: &TemporalParams,
    k: usize,
    o: usize,
    out: &mut [f64],
) {
    let p = frames.points[k][o];
    let vo = frames.points[k + 1][o] - p;
    let normal = frames.normals[k][o];
    let pairs: [PairStats; NUM_KEYPOINTS] = std::array::from_fn(|j| {
        let h = keypoints[k][j];
        PairStats::compute(&h, &p, &(keypoints[k + 1][j] - h), &vo, &normal, params)
    });
    write_row(out, &vo, &pairs);
}

pub(crate) fn rotate_in_place(s: &mut [f64], r: &Mat3) {
    let v = r * Vec3::new(s[0], s[1], s[2]);
    s[..3].copy_from_slice(v.as_slice());
}

pub fn compute_temporal_relations(
    keypoints: &[Keypoints],
    frames: &ContactFrameSet,
    params: &TemporalParams,
) -> Result<TemporalRel> {
    if keypoints.len() < 2 {
        return Err(Error::InsufficientFrames {
            needed: 2,
            got: keypoints.len(),
        });
    }
    frames.check_frames(keypoints.len())?;
    let n = frames.num_points();
    let transitions = keypoints.len() - 1;
    let mut rel = TemporalRel {
        transitions,
        points: n,
        data: vec![0.0; transitions * n * TEMPORAL_STRIDE],
    };
    for k in 0..transitions {
        for o in 0..n {
            temporal_row(keypoints, frames, params, k, o, rel.row_mut(k, o));
        }
    }
    Ok(rel)
}

/// Forward-integrates world offsets `h − o` from frame 0:
/// `off_{k+1} = off_k + v_ho,k`. Returns `[K][N_o][21]`.
pub fn integrate_temporal_to_offsets(
    rel: &TemporalRel,
    first_offsets: &[Keypoints],
) -> Result<Vec<Vec<Keypoints>>> {
    crate::error::ensure_len("first-frame offsets", rel.points, first_offsets.len())?;
    let mut out = Vec::with_capacity(rel.transitions + 1);
    out.push(first_offsets.to_vec());
    for k in 0..rel.transitions {
        let prev = &out[k];
        let next: Vec<Keypoints> = (0..rel.points)
            .map(|o| std::array::from_fn(|j| prev[o][j] + rel.pair(k, o, j).relative_velocity))
            .collect();
        out.push(next);
    }
    Ok(out)
}
