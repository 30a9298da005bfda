use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{contact_iou, motion_consistency, mpjpe_mpvpe, penetration_metrics, proximity_error};
use crate::error::Result;
use crate::rep::ContactFrameSet;
use crate::scene::HoiSequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    /// Contact distance for C-IoU (m).
    pub contact_threshold: f64,
    /// Voxel pitch for intersection volume (m).
    pub voxel: f64,
    /// Per-frame object displacement below which a transition is static (m).
    pub static_eps: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            contact_threshold: 0.002,
            voxel: 0.002,
            static_eps: 1e-4,
        }
    }
}

/// Metrics of one sequence. Ground-truth metrics are absent without a
/// reference sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mpjpe: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mpvpe: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub c_iou: Option<f64>,
    pub iv: f64,
    pub penetration_depth: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub proximity_error: Option<f64>,
    pub motion_consistency: f64,
    /// True when every transition was static and the consistency is 0.
    #[serde(default)]
    pub object_static: bool,
    pub units: BTreeMap<String, String>,
}

impl MetricsReport {
    pub fn units() -> BTreeMap<String, String> {
        [
            ("mpjpe", "mm"),
            ("mpvpe", "mm"),
            ("c_iou", "%"),
            ("iv", "cm^3"),
            ("penetration_depth", "mm"),
            ("proximity_error", "mm"),
            ("motion_consistency", "mm^2"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
    }

    /// Named values present in this report.
    pub fn values(&self) -> Vec<(&'static str, f64)> {
        let mut out = Vec::new();
        let mut push = |name, v: Option<f64>| {
            if let Some(v) = v {
                out.push((name, v));
            }
        };
        push("mpjpe", self.mpjpe);
        push("mpvpe", self.mpvpe);
        push("c_iou", self.c_iou);
        push("iv", Some(self.iv));
        push("penetration_depth", Some(self.penetration_depth));
        push("proximity_error", self.proximity_error);
        push("motion_consistency", Some(self.motion_consistency));
        out
    }
}

/// All metrics of `pred`. `contacts` anchors proximity and motion
/// consistency; pass the ground truth's contact set to compare runs fairly.
pub fn evaluate(
    pred: &HoiSequence,
    gt: Option<&HoiSequence>,
    contacts: &ContactFrameSet,
    options: &EvalOptions,
) -> Result<MetricsReport> {
    let pen = penetration_metrics(pred, options.voxel)?;
    let mc = motion_consistency(pred, contacts, options.static_eps)?;
    let (mut mpjpe, mut mpvpe, mut c_iou, mut prox) = (None, None, None, None);
    if let Some(gt) = gt {
        let (j, v) = mpjpe_mpvpe(pred, gt)?;
        mpjpe = Some(j);
        mpvpe = Some(v);
        c_iou = Some(contact_iou(pred, gt, options.contact_threshold)?);
        prox = Some(proximity_error(pred, gt, contacts)?);
    }
    Ok(MetricsReport {
        mpjpe,
        mpvpe,
        c_iou,
        iv: pen.volume_cm3,
        penetration_depth: pen.depth_mm,
        proximity_error: prox,
        motion_consistency: mc.value_mm2,
        object_static: mc.all_static,
        units: MetricsReport::units(),
    })
}
