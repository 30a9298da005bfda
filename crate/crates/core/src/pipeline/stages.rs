//! The three denoising stages and the temporal trajectory optimization.

use ndarray::Array2;
use rand::Rng;

use crate::diffusion::{denoise_via_diffusion, Adam, NoisePredictor};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::pipeline::features::{
    motion_features, motion_from_features, spatial_cond, temporal_cond, temporal_dim, InstanceStats, POSE_DIM,
    SPATIAL_COND_DIM, TEMPORAL_COND_DIM,
};
use crate::pipeline::{OptimConfig, StageConfig, StageModels, TemporalWeights};
use crate::rep::{
    decanonicalize_hand_trajectory, decode_trajectory_from_spatial, normalize_representation, ChannelStats,
    ContactFrameSet, GeneOHRep, TemporalParams, TemporalRel, TEMPORAL_STRIDE,
};
use crate::scene::{Keypoints, NUM_KEYPOINTS};

fn refresh(rep: &mut GeneOHRep, keypoints: &[Keypoints]) -> Result<()> {
    *rep = GeneOHRep::from_keypoints(keypoints, rep.frames.clone(), rep.params)?;
    Ok(())
}

/// Stage 1: denoises the canonical trajectory as a whole, then rebuilds the
/// representation from the result.
pub fn run_motion_diff<R: Rng + ?Sized>(
    rep: &mut GeneOHRep,
    models: &StageModels,
    cfg: &StageConfig,
    rng: &mut R,
) -> Result<Vec<Keypoints>> {
    let stats = InstanceStats::of(&rep.canon);
    let x = motion_features(&rep.canon, &stats);
    crate::error::ensure_len("motion model width", models.motion.dim(), x.len())?;
    let x = Array2::from_shape_vec((1, x.len()), x).expect("one row");
    let out = denoise_via_diffusion(x.view(), None, cfg.t_motion, &models.motion, &models.schedule, rng)?;
    let canon = motion_from_features(out.as_slice().expect("contiguous"), &stats)?;
    let keypoints = decanonicalize_hand_trajectory(&canon, &rep.frames)?;
    refresh(rep, &keypoints)?;
    Ok(keypoints)
}

/// Stage 2: denoises every (frame, contact point) offset row, then decodes
/// the trajectory by averaging the per-point hypotheses.
pub fn run_spatial_diff<R: Rng + ?Sized>(
    rep: &mut GeneOHRep,
    models: &StageModels,
    cfg: &StageConfig,
    rng: &mut R,
) -> Result<Vec<Keypoints>> {
    crate::error::ensure_len("spatial model width", POSE_DIM, models.spatial.dim())?;
    let identity = ChannelStats::identity(TEMPORAL_STRIDE);
    let (norm, stats) = normalize_representation(rep, &identity)?;
    let (k, n) = (rep.spatial.frames(), rep.spatial.num_points());
    let mut x = Array2::zeros((k * n, POSE_DIM));
    let mut cond = Array2::zeros((k * n, SPATIAL_COND_DIM));
    for f in 0..k {
        for o in 0..n {
            let row = f * n + o;
            x.row_mut(row)
                .iter_mut()
                .zip(norm.spatial.offsets(f, o))
                .for_each(|(d, s)| *d = *s);
            let c = spatial_cond(&rep.spatial.position(f, o), &rep.spatial.normal(f, o), &stats.offset_mean[o], &stats.offset_std[o]);
            cond.row_mut(row).iter_mut().zip(c).for_each(|(d, s)| *d = s);
        }
    }
    let out = denoise_via_diffusion(x.view(), Some(cond.view()), cfg.t_spatial, &models.spatial, &models.schedule, rng)?;
    let mut spatial = rep.spatial.clone();
    for f in 0..k {
        for o in 0..n {
            let (m, s) = (stats.offset_mean[o], stats.offset_std[o]);
            let dst = spatial.offsets_mut(f, o);
            for (i, (d, v)) in dst.iter_mut().zip(out.row(f * n + o)).enumerate() {
                *d = v * s[i % 3] + m[i % 3];
            }
        }
    }
    let keypoints = decode_trajectory_from_spatial(&spatial, &rep.frames)?;
    refresh(rep, &keypoints)?;
    Ok(keypoints)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalOutcome {
    pub keypoints: Vec<Keypoints>,
    /// Objective (cm²) before each iteration, then after the last one.
    pub losses: Vec<f64>,
    /// Set when the objective had not dropped below its start after the
    /// patience window.
    pub stalled: bool,
}

/// Stage 3: denoises the canonical temporal relations of each contact
/// point, then optimizes the keypoints so their induced relations match.
pub fn run_temporal_diff<R: Rng + ?Sized>(
    rep: &mut GeneOHRep,
    models: &StageModels,
    cfg: &StageConfig,
    rng: &mut R,
) -> Result<TemporalOutcome> {
    let k = rep.frames.frames();
    let n = rep.frames.num_points();
    let dim = temporal_dim(k);
    crate::error::ensure_len("temporal model width", models.temporal.dim(), dim)?;
    if rep.params != models.temporal_params {
        return Err(Error::InvalidInput("representation and model use different temporal parameters".into()));
    }
    let canon = rep.temporal.to_canonical(&rep.frames)?;
    let stats = &models.temporal_stats;
    let mut x = Array2::zeros((n, dim));
    let mut cond = Array2::zeros((n, TEMPORAL_COND_DIM));
    for o in 0..n {
        let mut xr = x.row_mut(o);
        let dst = xr.as_slice_mut().expect("contiguous");
        for f in 0..k - 1 {
            let seg = &mut dst[f * TEMPORAL_STRIDE..(f + 1) * TEMPORAL_STRIDE];
            seg.copy_from_slice(canon.row(f, o));
            stats.normalize(seg);
        }
        let c = temporal_cond(&rep.spatial.position(0, o), &rep.spatial.normal(0, o));
        cond.row_mut(o).iter_mut().zip(c).for_each(|(d, s)| *d = s);
    }
    let out = denoise_via_diffusion(x.view(), Some(cond.view()), cfg.t_temporal, &models.temporal, &models.schedule, rng)?;
    let mut target = canon;
    for o in 0..n {
        let src = out.row(o);
        let src = src.as_slice().expect("contiguous");
        for f in 0..k - 1 {
            let seg = target.row_mut(f, o);
            seg.copy_from_slice(&src[f * TEMPORAL_STRIDE..(f + 1) * TEMPORAL_STRIDE]);
            stats.denormalize(seg);
        }
    }
    let target = target.from_canonical(&rep.frames)?;
    let init = rep.keypoints()?;
    let outcome = temporal_optimize(&init, &target, &rep.frames, &rep.params, &cfg.temporal_weights, &cfg.temporal_opt)?;
    refresh(rep, &outcome.keypoints)?;
    Ok(outcome)
}

/// meters → centimeters for the temporal objective.
const CM: f64 = 100.0;
/// Iterations after which a non-decreasing objective is reported.
pub const STALL_PATIENCE: usize = 50;

/// Mean over (transition, contact point, keypoint) of the weighted squared
/// mismatch (cm²) between the statistics induced by `keypoints` and the
/// target, with its gradient with respect to the keypoints in cm.
pub fn temporal_objective(
    keypoints: &[Keypoints],
    target: &TemporalRel,
    frames: &ContactFrameSet,
    params: &TemporalParams,
    weights: &TemporalWeights,
) -> Result<(f64, Vec<Keypoints>)> {
    let k = keypoints.len();
    if k < 2 {
        return Err(Error::InsufficientFrames { needed: 2, got: k });
    }
    frames.check_frames(k)?;
    crate::error::ensure_len("target transitions", k - 1, target.transitions())?;
    crate::error::ensure_len("target contact points", frames.num_points(), target.num_points())?;
    let n = frames.num_points();
    let scale = CM * CM / ((k - 1) * n * NUM_KEYPOINTS) as f64;
    let mut grad = vec![[Vec3::zeros(); NUM_KEYPOINTS]; k];
    let mut loss = 0.0;
    for f in 0..k - 1 {
        for o in 0..n {
            let p = frames.points[f][o];
            let vo = frames.points[f + 1][o] - p;
            let normal = frames.normals[f][o];
            for j in 0..NUM_KEYPOINTS {
                let h = keypoints[f][j];
                let r = h - p;
                let d = r.norm();
                let v = keypoints[f + 1][j] - h - vo;
                let vn = v.dot(&normal);
                let vp = v - normal * vn;
                let vp_norm = vp.norm();
                let w = (-params.k * d).exp();
                let e_par = w * params.k_a * vp_norm;
                let e_perp = w * params.k_b * vn.abs();
                let t = target.pair(f, o, j);
                let (rd, rv) = (d - t.distance, v - t.relative_velocity);
                let (rpar, rperp) = (e_par - t.e_parallel, e_perp - t.e_perpendicular);
                loss += scale
                    * (weights.distance * rd * rd
                        + weights.velocity * rv.norm_squared()
                        + weights.e_parallel * rpar * rpar
                        + weights.e_perpendicular * rperp * rperp);
                let u = if d > 0.0 { r / d } else { Vec3::zeros() };
                let dpar_dv = if vp_norm > 0.0 { vp * (w * params.k_a / vp_norm) } else { Vec3::zeros() };
                let dperp_dv = if vn != 0.0 { normal * (w * params.k_b * vn.signum()) } else { Vec3::zeros() };
                // Derivatives with respect to h_{f,j} via d and with respect
                // to v = h_{f+1,j} − h_{f,j} − v_o.
                let by_d = u * (2.0 * scale * (weights.distance * rd
                    - params.k * (weights.e_parallel * rpar * e_par + weights.e_perpendicular * rperp * e_perp)));
                let by_v = rv * (2.0 * scale * weights.velocity)
                    + dpar_dv * (2.0 * scale * weights.e_parallel * rpar)
                    + dperp_dv * (2.0 * scale * weights.e_perpendicular * rperp);
                grad[f][j] += by_d - by_v;
                grad[f + 1][j] += by_v;
            }
        }
    }
    for g in grad.iter_mut().flatten() {
        *g /= CM;
    }
    Ok((loss, grad))
}

/// Adam over keypoint coordinates (cm) minimizing [`temporal_objective`].
/// The best iterate is returned, so the objective never increases.
pub fn temporal_optimize(
    init: &[Keypoints],
    target: &TemporalRel,
    frames: &ContactFrameSet,
    params: &TemporalParams,
    weights: &TemporalWeights,
    cfg: &OptimConfig,
) -> Result<TemporalOutcome> {
    let k = init.len();
    let to_array = |kps: &[Keypoints]| {
        Array2::from_shape_fn((k, 3 * NUM_KEYPOINTS), |(f, i)| kps[f][i / 3][i % 3] * CM)
    };
    let to_keypoints = |z: &Array2<f64>| -> Vec<Keypoints> {
        (0..k)
            .map(|f| std::array::from_fn(|j| Vec3::new(z[[f, 3 * j]], z[[f, 3 * j + 1]], z[[f, 3 * j + 2]]) / CM))
            .collect()
    };
    let grad_array = |g: &[Keypoints]| Array2::from_shape_fn((k, 3 * NUM_KEYPOINTS), |(f, i)| g[f][i / 3][i % 3]);
    let mut z = [to_array(init)];
    let (mut loss, mut grad) = temporal_objective(init, target, frames, params, weights)?;
    let mut best = (loss, init.to_vec());
    let mut losses = vec![loss];
    let mut adam = Adam::new(&z);
    let mut stalled = false;
    for it in 0..cfg.iterations {
        adam.update(&mut z, &[grad_array(&grad)], cfg.learning_rate_at(it));
        let kps = to_keypoints(&z[0]);
        (loss, grad) = temporal_objective(&kps, target, frames, params, weights)?;
        if !loss.is_finite() {
            log::warn!("temporal optimization produced a non-finite objective at iteration {it}; keeping best iterate");
            break;
        }
        losses.push(loss);
        if loss < best.0 {
            best = (loss, kps);
        }
        if it + 1 == STALL_PATIENCE && best.0 >= losses[0] {
            stalled = true;
            log::warn!("temporal objective has not decreased after {STALL_PATIENCE} iterations");
        }
    }
    Ok(TemporalOutcome {
        keypoints: best.1,
        losses,
        stalled,
    })
}
