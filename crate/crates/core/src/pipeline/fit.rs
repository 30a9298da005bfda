//! Hand-parameter fitting to a keypoint trajectory.

use ndarray::Array2;

use crate::diffusion::Adam;
use crate::error::{Error, Result};
use crate::math::{kabsch, log_so3, Vec3};
use crate::pipeline::{FitWeights, OptimConfig};
use crate::scene::hand::{keypoint_jacobian, NUM_PARAMS, SHAPE_RANGE};
use crate::scene::{forward_kinematics, HandParams, HandSkeleton, Keypoints, NUM_KEYPOINTS};

const TRANS: std::ops::Range<usize> = 3..6;
const POSE: std::ops::Range<usize> = 6..51;
const SHAPE: std::ops::Range<usize> = 51..56;
/// Root translation is optimized in centimeters.
const TRANS_SCALE: f64 = 100.0;
/// Reconstruction error is measured in mm².
const RECON_SCALE: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<HandParams>,
    pub keypoints: Vec<Keypoints>,
    /// Objective before each iteration, then after the last one.
    pub losses: Vec<f64>,
    pub recon: f64,
    pub regularizer: f64,
    pub initial_grad_norm: f64,
    pub final_grad_norm: f64,
}

/// Rest pose with the root aligned to the palm keypoints.
pub fn initial_params(skeleton: &HandSkeleton, target: &Keypoints) -> HandParams {
    let rest = forward_kinematics(skeleton, &HandParams::rest()).expect("rest pose is finite");
    let idx = HandSkeleton::rigid_keypoints();
    let a: Vec<Vec3> = idx.iter().map(|&i| rest[i]).collect();
    let b: Vec<Vec3> = idx.iter().map(|&i| target[i]).collect();
    let (r, t) = kabsch(&a, &b);
    let mut p = HandParams::rest();
    p.root_rot = log_so3(&r).into();
    p.root_trans = t.into();
    p
}

/// `Σ_k (‖β_k‖ + ‖θ_k‖) / K` and `Σ_k ‖θ_{k+1} − θ_k‖ / (K − 1)` with
/// their gradients added into `grad` (in parameter-vector layout).
pub fn regularizer(params: &[[f64; NUM_PARAMS]], weights: &FitWeights, grad: Option<&mut Array2<f64>>) -> (f64, f64) {
    let k = params.len();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut mag = 0.0;
    let mut smooth = 0.0;
    let mut g = grad;
    for (f, p) in params.iter().enumerate() {
        for range in [SHAPE, POSE] {
            let n = norm(&p[range.clone()]);
            mag += n / k as f64;
            if let (Some(g), true) = (g.as_deref_mut(), n > 0.0) {
                for i in range {
                    g[[f, i]] += weights.magnitude * p[i] / n / k as f64;
                }
            }
        }
    }
    if k > 1 {
        for f in 0..k - 1 {
            let d: Vec<f64> = POSE.map(|i| params[f + 1][i] - params[f][i]).collect();
            let n = norm(&d);
            smooth += n / (k - 1) as f64;
            if let (Some(g), true) = (g.as_deref_mut(), n > 0.0) {
                for (di, i) in d.iter().zip(POSE) {
                    let v = weights.smoothness * di / n / (k - 1) as f64;
                    g[[f + 1, i]] += v;
                    g[[f, i]] -= v;
                }
            }
        }
    }
    (mag, smooth)
}

struct Evaluation {
    total: f64,
    recon: f64,
    reg: f64,
    /// Gradient with respect to the optimizer variables.
    grad: Array2<f64>,
}

fn to_params(z: &Array2<f64>) -> Vec<[f64; NUM_PARAMS]> {
    z.rows()
        .into_iter()
        .map(|r| {
            let mut p: [f64; NUM_PARAMS] = std::array::from_fn(|i| r[i]);
            for i in TRANS {
                p[i] /= TRANS_SCALE;
            }
            p
        })
        .collect()
}

fn evaluate(skeleton: &HandSkeleton, target: &[Keypoints], z: &Array2<f64>, weights: &FitWeights) -> Result<Evaluation> {
    let params = to_params(z);
    let k = params.len();
    let mut grad = Array2::zeros(z.dim());
    let mut recon = 0.0;
    let scale = RECON_SCALE / (NUM_KEYPOINTS * k) as f64;
    for (f, (p, t)) in params.iter().zip(target).enumerate() {
        let (kp, jac) = keypoint_jacobian(skeleton, &HandParams::from_vector(p))?;
        for j in 0..NUM_KEYPOINTS {
            let r = kp[j] - t[j];
            recon += scale * r.norm_squared();
            for a in 0..3 {
                let c = weights.recon * 2.0 * scale * r[a];
                for (g, d) in grad.row_mut(f).iter_mut().zip(jac[3 * j + a].iter()) {
                    *g += c * d;
                }
            }
        }
    }
    let (mag, smooth) = regularizer(&params, weights, Some(&mut grad));
    for mut row in grad.rows_mut() {
        for i in TRANS {
            row[i] /= TRANS_SCALE;
        }
    }
    let reg = weights.magnitude * mag + weights.smoothness * smooth;
    Ok(Evaluation {
        total: weights.recon * recon + reg,
        recon,
        reg,
        grad,
    })
}

fn grad_norm(g: &Array2<f64>) -> f64 {
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Adam over every frame's parameters jointly, minimizing keypoint MSE
/// (mm²) plus the magnitude and smoothness regularizers. Starts from the
/// rest pose with a rigidly aligned root; returns the best iterate.
pub fn fit_hand_parameters(
    target: &[Keypoints],
    skeleton: &HandSkeleton,
    config: &OptimConfig,
    weights: &FitWeights,
) -> Result<FitResult> {
    if target.is_empty() {
        return Err(Error::InsufficientFrames { needed: 1, got: 0 });
    }
    let mut z = Array2::zeros((target.len(), NUM_PARAMS));
    for (f, t) in target.iter().enumerate() {
        let v = initial_params(skeleton, t).to_vector();
        for i in 0..NUM_PARAMS {
            z[[f, i]] = if TRANS.contains(&i) { v[i] * TRANS_SCALE } else { v[i] };
        }
    }
    let first = evaluate(skeleton, target, &z, weights)?;
    let initial_grad_norm = grad_norm(&first.grad);
    let mut best = (first.total, z.clone(), first.recon, first.reg, initial_grad_norm);
    let mut losses = vec![first.total];
    let mut adam = Adam::new(std::slice::from_ref(&z));
    let mut current = first;
    let (lo, hi) = (SHAPE_RANGE.0 + 1e-3, SHAPE_RANGE.1 - 1e-3);
    for it in 0..config.iterations {
        let mut params = [z];
        adam.update(&mut params, std::slice::from_ref(&current.grad), config.learning_rate_at(it));
        let [next] = params;
        z = next;
        for mut row in z.rows_mut() {
            for i in SHAPE {
                row[i] = row[i].clamp(lo, hi);
            }
        }
        current = evaluate(skeleton, target, &z, weights)?;
        if !current.total.is_finite() {
            return Err(Error::FittingDiverged {
                iteration: it,
                loss: current.total,
            });
        }
        losses.push(current.total);
        if current.total < best.0 {
            best = (current.total, z.clone(), current.recon, current.reg, grad_norm(&current.grad));
        }
    }
    let (_, z, recon, regularizer, final_grad_norm) = best;
    let params: Vec<HandParams> = to_params(&z).iter().map(|p| HandParams::from_vector(p)).collect();
    let keypoints = params
        .iter()
        .map(|p| forward_kinematics(skeleton, p))
        .collect::<Result<_>>()?;
    Ok(FitResult {
        params,
        keypoints,
        losses,
        recon,
        regularizer,
        initial_grad_norm,
        final_grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::mpjpe;
    use crate::pipeline::StageConfig;
    use crate::scene::{generate_synthetic_sequence, SynthConfig};

    #[test]
    fn zero_pose_and_shape_cost_nothing() {
        let p = [[0.0; NUM_PARAMS]; 3];
        assert_eq!(regularizer(&p, &FitWeights::default(), None), (0.0, 0.0));
    }

    #[test]
    fn regularizer_gradient_matches_finite_differences() {
        let mut p = [[0.0; NUM_PARAMS]; 3];
        for (f, row) in p.iter_mut().enumerate() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = ((f * 57 + i) as f64 * 0.61).sin() * 0.4;
            }
        }
        let w = FitWeights::default();
        let mut g = Array2::zeros((3, NUM_PARAMS));
        regularizer(&p, &w, Some(&mut g));
        let total = |p: &[[f64; NUM_PARAMS]]| {
            let (m, s) = regularizer(p, &w, None);
            m + s
        };
        for f in 0..3 {
            for i in [7, 20, 52] {
                let mut a = p;
                a[f][i] += 1e-6;
                let mut b = p;
                b[f][i] -= 1e-6;
                let fd = (total(&a) - total(&b)) / 2e-6;
                assert!((fd - g[[f, i]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_iterations_return_initialization() {
        let seq = generate_synthetic_sequence(&SynthConfig::default(), 0).unwrap();
        let sk = HandSkeleton::new();
        let cfg = OptimConfig {
            iterations: 0,
            ..OptimConfig::default()
        };
        let fit = fit_hand_parameters(&seq.keypoints, &sk, &cfg, &FitWeights::default()).unwrap();
        for (p, t) in fit.params.iter().zip(&seq.keypoints) {
            let init = initial_params(&sk, t);
            for (a, b) in p.to_vector().iter().zip(init.to_vector()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert_eq!(fit.losses.len(), 1);
    }

    #[test]
    fn recovers_generating_parameters() {
        let seq = generate_synthetic_sequence(&SynthConfig::default(), 1).unwrap();
        let sk = HandSkeleton::new();
        let fit = fit_hand_parameters(&seq.keypoints, &sk, &StageConfig::default().fitting, &FitWeights::default()).unwrap();
        let err = mpjpe(&fit.keypoints, &seq.keypoints).unwrap();
        assert!(err < 2.0, "mpjpe {err}");
        assert!(fit.final_grad_norm < fit.initial_grad_norm);
        assert!(fit.losses.iter().all(|l| *l >= fit.recon + fit.regularizer - 1e-9));
    }
}
