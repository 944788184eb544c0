//! Greedy per-class NMS and joint-NMS fusion of several detectors' outputs.
//!
//! Joint NMS takes the highest-scoring detections of every model, pools them
//! and runs plain NMS over the pool. Boxes and scores pass through unchanged.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, BBox};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("joint NMS needs at least one model")]
    NoModels,
    #[error("{name} = {value} is outside [0, 1]")]
    Threshold { name: &'static str, value: f64 },
    #[error("top_k must be at least 1")]
    ZeroTopK,
    #[error("detection score {0} outside [0, 1]")]
    Score(f64),
    #[error("detection class must be >= 1")]
    Class,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class: u32,
    pub score: f64,
    /// Index of the model that produced the detection.
    #[serde(default)]
    pub model: u32,
}

impl Detection {
    pub fn new(bbox: BBox, class: u32, score: f64, model: u32) -> Result<Self, EnsembleError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(EnsembleError::Score(score));
        }
        if class == 0 {
            return Err(EnsembleError::Class);
        }
        Ok(Self {
            bbox,
            class,
            score,
            model,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    nms_iou: f64,
    top_k: usize,
    score_floor: f64,
}

impl EnsembleParams {
    pub const DEFAULT_NMS_IOU: f64 = 0.5;
    pub const DEFAULT_TOP_K: usize = 300;
    pub const DEFAULT_SCORE_FLOOR: f64 = 0.0;

    pub fn new(nms_iou: f64, top_k: usize, score_floor: f64) -> Result<Self, EnsembleError> {
        for (name, value) in [("nms_iou", nms_iou), ("score_floor", score_floor)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(EnsembleError::Threshold { name, value });
            }
        }
        if top_k == 0 {
            return Err(EnsembleError::ZeroTopK);
        }
        Ok(Self {
            nms_iou,
            top_k,
            score_floor,
        })
    }

    pub fn nms_iou(&self) -> f64 {
        self.nms_iou
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    pub fn score_floor(&self) -> f64 {
        self.score_floor
    }
}

impl Default for EnsembleParams {
    fn default() -> Self {
        Self {
            nms_iou: Self::DEFAULT_NMS_IOU,
            top_k: Self::DEFAULT_TOP_K,
            score_floor: Self::DEFAULT_SCORE_FLOOR,
        }
    }
}

/// Indices of `dets` in suppression order: descending score, then lower model
/// id, then input position.
fn priority_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .total_cmp(&dets[a].score)
            .then(dets[a].model.cmp(&dets[b].model))
            .then(a.cmp(&b))
    });
    order
}

/// Greedy per-class NMS. A detection is dropped when its IoU with an already
/// kept detection of the same class exceeds `iou_thresh`. Output follows the
/// priority order, so scores are non-increasing.
pub fn nms(dets: &[Detection], iou_thresh: f64) -> Vec<Detection> {
    let mut kept: Vec<Detection> = Vec::new();
    for i in priority_order(dets) {
        let d = &dets[i];
        let suppressed = kept
            .iter()
            .any(|k| k.class == d.class && iou(&k.bbox, &d.bbox) > iou_thresh);
        if !suppressed {
            kept.push(*d);
        }
    }
    kept
}

/// The `top_k` best detections of one model at or above `score_floor`,
/// highest score first (ties keep input order).
pub fn top_k(dets: &[Detection], k: usize, score_floor: f64) -> Vec<Detection> {
    let mut v: Vec<Detection> = dets.iter().filter(|d| d.score >= score_floor).copied().collect();
    v.sort_by(|a, b| b.score.total_cmp(&a.score));
    v.truncate(k);
    v
}

/// Fuses per-model detection lists for one image.
pub fn joint_nms(per_model: &[Vec<Detection>], params: &EnsembleParams) -> Result<Vec<Detection>, EnsembleError> {
    if per_model.is_empty() {
        return Err(EnsembleError::NoModels);
    }
    let pooled: Vec<Detection> = per_model
        .iter()
        .flat_map(|dets| top_k(dets, params.top_k, params.score_floor))
        .collect();
    Ok(nms(&pooled, params.nms_iou))
}
