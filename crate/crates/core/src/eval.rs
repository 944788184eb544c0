//! Average precision at several IoU thresholds.
//!
//! Detections of one class are ranked by descending score over all images
//! (ties keep image-id order, then position within the image). Each one is
//! matched to the still-unmatched ground truth of its class on its image with
//! the highest IoU, provided that IoU is strictly above the threshold. AP is
//! the area under the precision envelope of the resulting PR curve
//! (all-point interpolation). Both the comparison and the interpolation can
//! be switched through [`Protocol`] for comparison with other conventions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::Detection;
use crate::geometry::{iou, BBox};

/// The reporting thresholds: IoU > 0.05, > 0.5 and > 0.75.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.05, 0.5, 0.75];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("IoU threshold {0} outside (0, 1]")]
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub class: u32,
    pub bbox: BBox,
}

/// Ground-truth boxes keyed by image id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthSet {
    pub images: BTreeMap<String, Vec<GroundTruth>>,
}

impl GroundTruthSet {
    pub fn add(&mut self, image: impl Into<String>, class: u32, bbox: BBox) {
        self.images.entry(image.into()).or_default().push(GroundTruth { class, bbox });
    }

    pub fn count(&self) -> usize {
        self.images.values().map(Vec::len).sum()
    }

    pub fn classes(&self) -> BTreeSet<u32> {
        self.images.values().flatten().map(|g| g.class).collect()
    }

    pub fn count_class(&self, class: u32) -> usize {
        self.images.values().flatten().filter(|g| g.class == class).count()
    }
}

/// Detections keyed by image id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    pub images: BTreeMap<String, Vec<Detection>>,
}

impl DetectionSet {
    pub fn add(&mut self, image: impl Into<String>, det: Detection) {
        self.images.entry(image.into()).or_default().push(det);
    }

    pub fn count(&self) -> usize {
        self.images.values().map(Vec::len).sum()
    }

    /// Applies `f` to every score.
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> DetectionSet {
        DetectionSet {
            images: self
                .images
                .iter()
                .map(|(k, v)| {
                    let dets = v.iter().map(|d| Detection { score: f(d.score), ..*d }).collect();
                    (k.clone(), dets)
                })
                .collect(),
        }
    }
}

/// How an IoU is compared against the matching threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IouComparison {
    /// IoU > threshold.
    #[default]
    Greater,
    /// IoU >= threshold.
    GreaterOrEqual,
}

impl IouComparison {
    pub fn passes(self, overlap: f64, thresh: f64) -> bool {
        match self {
            IouComparison::Greater => overlap > thresh,
            IouComparison::GreaterOrEqual => overlap >= thresh,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IouComparison::Greater => "strictly_greater",
            IouComparison::GreaterOrEqual => "greater_or_equal",
        }
    }
}

/// How the PR curve is turned into a single number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Area under the precision envelope.
    #[default]
    AllPoint,
    /// Mean envelope precision at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

impl Interpolation {
    pub fn name(self) -> &'static str {
        match self {
            Interpolation::AllPoint => "all_point",
            Interpolation::ElevenPoint => "eleven_point",
        }
    }
}

/// Matching and interpolation conventions. The default is strict IoU with
/// all-point interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Protocol {
    pub comparison: IouComparison,
    pub interpolation: Interpolation,
}

fn check_threshold(t: f64) -> Result<(), EvalError> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(EvalError::Threshold(t))
    }
}

/// TP/FP flag of every detection of `class`, in rank order.
pub fn match_detections(dets: &DetectionSet, gts: &GroundTruthSet, class: u32, iou_thresh: f64) -> Vec<bool> {
    match_detections_with(dets, gts, class, iou_thresh, IouComparison::Greater)
}

pub fn match_detections_with(
    dets: &DetectionSet,
    gts: &GroundTruthSet,
    class: u32,
    iou_thresh: f64,
    comparison: IouComparison,
) -> Vec<bool> {
    let mut ranked: Vec<(&str, &Detection)> = dets
        .images
        .iter()
        .flat_map(|(img, v)| v.iter().filter(|d| d.class == class).map(move |d| (img.as_str(), d)))
        .collect();
    ranked.sort_by(|a, b| b.1.score.total_cmp(&a.1.score));

    let mut matched: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
    ranked
        .into_iter()
        .map(|(img, d)| {
            let Some(image_gts) = gts.images.get(img) else {
                return false;
            };
            let used = matched.entry(img).or_insert_with(|| vec![false; image_gts.len()]);
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in image_gts.iter().enumerate() {
                if g.class != class || used[gi] {
                    continue;
                }
                let o = iou(&d.bbox, &g.bbox);
                if best.is_none_or(|(_, b)| o > b) {
                    best = Some((gi, o));
                }
            }
            match best {
                Some((gi, o)) if comparison.passes(o, iou_thresh) => {
                    used[gi] = true;
                    true
                }
                _ => false,
            }
        })
        .collect()
}

/// All-point interpolated AP of a ranked TP/FP sequence against `num_gt`
/// ground truths.
pub fn ap_from_ranking(is_tp: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(is_tp.len());
    let mut recall = Vec::with_capacity(is_tp.len());
    for (k, &hit) in is_tp.iter().enumerate() {
        tp += usize::from(hit);
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / num_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap.clamp(0.0, 1.0)
}

/// 11-point interpolated AP: the mean, over recall levels 0, 0.1, ..., 1, of
/// the best precision at that recall or beyond.
pub fn eleven_point_ap(is_tp: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut points = Vec::with_capacity(is_tp.len());
    let mut tp = 0usize;
    for (k, &hit) in is_tp.iter().enumerate() {
        tp += usize::from(hit);
        points.push((tp, tp as f64 / (k + 1) as f64));
    }
    // recall >= level/10  <=>  10 * tp >= level * num_gt, exactly.
    let sum: f64 = (0..=10usize)
        .map(|level| {
            points
                .iter()
                .filter(|(t, _)| 10 * t >= level * num_gt)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max)
        })
        .sum();
    sum / 11.0
}

fn interpolate(is_tp: &[bool], num_gt: usize, interpolation: Interpolation) -> f64 {
    match interpolation {
        Interpolation::AllPoint => ap_from_ranking(is_tp, num_gt),
        Interpolation::ElevenPoint => eleven_point_ap(is_tp, num_gt),
    }
}

/// AP of `class` at one IoU threshold; `None` when the class has no ground truth.
pub fn average_precision(
    dets: &DetectionSet,
    gts: &GroundTruthSet,
    class: u32,
    iou_thresh: f64,
) -> Result<Option<f64>, EvalError> {
    average_precision_with(dets, gts, class, iou_thresh, &Protocol::default())
}

pub fn average_precision_with(
    dets: &DetectionSet,
    gts: &GroundTruthSet,
    class: u32,
    iou_thresh: f64,
    protocol: &Protocol,
) -> Result<Option<f64>, EvalError> {
    check_threshold(iou_thresh)?;
    let num_gt = gts.count_class(class);
    if num_gt == 0 {
        return Ok(None);
    }
    let labels = match_detections_with(dets, gts, class, iou_thresh, protocol.comparison);
    Ok(Some(interpolate(&labels, num_gt, protocol.interpolation)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub images: usize,
    pub ground_truths: usize,
    pub detections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class: u32,
    /// One AP per threshold, in threshold order.
    pub ap: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    /// Unweighted mean of per-class AP for each threshold; `None` when no
    /// class has ground truth.
    pub map: Vec<Option<f64>>,
    pub per_class: Vec<ClassAp>,
    pub counts: EvalCounts,
    #[serde(skip)]
    pub comparison: IouComparison,
}

impl EvalReport {
    /// Plain-text table with one column per threshold.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<12}", "IoU");
        for t in &self.thresholds {
            let op = match self.comparison {
                IouComparison::Greater => ">",
                IouComparison::GreaterOrEqual => ">=",
            };
            let _ = write!(out, "{:>10}", format!("{op} {t}"));
        }
        out.push('\n');
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.2}", 100.0 * x));
        let _ = write!(out, "{:<12}", "mAP");
        for m in &self.map {
            let _ = write!(out, "{:>10}", cell(*m));
        }
        out.push('\n');
        for c in &self.per_class {
            let _ = write!(out, "{:<12}", format!("class {}", c.class));
            for a in &c.ap {
                let _ = write!(out, "{:>10}", cell(Some(*a)));
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "images {}  ground truths {}  detections {}",
            self.counts.images, self.counts.ground_truths, self.counts.detections
        );
        out
    }
}

pub fn evaluate(dets: &DetectionSet, gts: &GroundTruthSet, thresholds: &[f64]) -> Result<EvalReport, EvalError> {
    evaluate_with(dets, gts, thresholds, &Protocol::default())
}

pub fn evaluate_with(
    dets: &DetectionSet,
    gts: &GroundTruthSet,
    thresholds: &[f64],
    protocol: &Protocol,
) -> Result<EvalReport, EvalError> {
    for &t in thresholds {
        check_threshold(t)?;
    }
    let classes = gts.classes();
    let per_class: Vec<ClassAp> = classes
        .iter()
        .map(|&class| {
            let num_gt = gts.count_class(class);
            let ap = thresholds
                .iter()
                .map(|&t| {
                    let labels = match_detections_with(dets, gts, class, t, protocol.comparison);
                    interpolate(&labels, num_gt, protocol.interpolation)
                })
                .collect();
            ClassAp { class, ap }
        })
        .collect();
    let map = (0..thresholds.len())
        .map(|i| {
            (!per_class.is_empty())
                .then(|| per_class.iter().map(|c| c.ap[i]).sum::<f64>() / per_class.len() as f64)
        })
        .collect();
    let images: BTreeSet<&String> = gts.images.keys().chain(dets.images.keys()).collect();
    Ok(EvalReport {
        thresholds: thresholds.to_vec(),
        map,
        per_class,
        counts: EvalCounts {
            images: images.len(),
            ground_truths: gts.count(),
            detections: dets.count(),
        },
        comparison: protocol.comparison,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn det(b: BBox, class: u32, score: f64) -> Detection {
        Detection::new(b, class, score, 0).unwrap()
    }

    /// Direct PR-curve enumeration: at every recall step, area = recall
    /// increment times the best precision at that rank or deeper.
    fn pr_oracle(labels: &[bool], num_gt: usize) -> f64 {
        let prec_at = |k: usize| labels[..=k].iter().filter(|x| **x).count() as f64 / (k + 1) as f64;
        labels
            .iter()
            .enumerate()
            .filter(|(_, hit)| **hit)
            .map(|(k, _)| (k..labels.len()).map(prec_at).fold(0.0, f64::max) / num_gt as f64)
            .sum()
    }

    #[test]
    fn perfect_detector() {
        let mut gts = GroundTruthSet::default();
        let mut dets = DetectionSet::default();
        for (i, img) in ["a", "b"].iter().enumerate() {
            let b = bb(10. * i as f64, 0., 10. * i as f64 + 8., 8.);
            gts.add(*img, 1, b);
            dets.add(*img, det(b, 1, 0.1 + 0.3 * i as f64));
        }
        assert_eq!(average_precision(&dets, &gts, 1, 0.5).unwrap(), Some(1.0));
        let r = evaluate(&dets, &gts, &DEFAULT_THRESHOLDS).unwrap();
        assert_eq!(r.map, vec![Some(1.0); 3]);
    }

    #[test]
    fn no_detections_or_no_gt() {
        let mut gts = GroundTruthSet::default();
        gts.add("a", 1, bb(0., 0., 5., 5.));
        let dets = DetectionSet::default();
        assert_eq!(average_precision(&dets, &gts, 1, 0.5).unwrap(), Some(0.0));
        assert_eq!(average_precision(&dets, &gts, 2, 0.5).unwrap(), None);
        assert!(average_precision(&dets, &gts, 1, 0.0).is_err());
    }

    #[test]
    fn three_detections_two_gts() {
        // Ranking TP, FP, TP over 2 ground truths.
        let g1 = bb(0., 0., 10., 10.);
        let g2 = bb(20., 0., 30., 10.);
        let mut gts = GroundTruthSet::default();
        gts.add("a", 1, g1);
        gts.add("a", 1, g2);
        let mut dets = DetectionSet::default();
        dets.add("a", det(g1, 1, 0.9));
        dets.add("a", det(bb(50., 50., 60., 60.), 1, 0.8));
        dets.add("a", det(g2, 1, 0.7));
        let labels = match_detections(&dets, &gts, 1, 0.5);
        assert_eq!(labels, vec![true, false, true]);
        let expected = pr_oracle(&labels, 2);
        assert!((expected - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
        let ap = average_precision(&dets, &gts, 1, 0.5).unwrap().unwrap();
        assert!((ap - expected).abs() < 1e-12);
    }

    #[test]
    fn duplicate_detection_is_false_positive() {
        let g = bb(0., 0., 10., 10.);
        let mut gts = GroundTruthSet::default();
        gts.add("a", 1, g);
        let mut dets = DetectionSet::default();
        dets.add("a", det(g, 1, 0.9));
        dets.add("a", det(g, 1, 0.8));
        assert_eq!(match_detections(&dets, &gts, 1, 0.5), vec![true, false]);
    }

    #[test]
    fn strict_threshold() {
        let mut gts = GroundTruthSet::default();
        gts.add("a", 1, bb(0., 0., 10., 10.));
        let mut dets = DetectionSet::default();
        dets.add("a", det(bb(0., 0., 10., 5.), 1, 0.9));
        assert_eq!(average_precision(&dets, &gts, 1, 0.5).unwrap(), Some(0.0));
        assert_eq!(average_precision(&dets, &gts, 1, 0.49).unwrap(), Some(1.0));
    }

    #[test]
    fn inclusive_comparison_accepts_equal_iou() {
        let mut gts = GroundTruthSet::default();
        gts.add("a", 1, bb(0., 0., 10., 10.));
        let mut dets = DetectionSet::default();
        dets.add("a", det(bb(0., 0., 10., 5.), 1, 0.9));
        let inclusive = Protocol {
            comparison: IouComparison::GreaterOrEqual,
            ..Protocol::default()
        };
        assert_eq!(average_precision_with(&dets, &gts, 1, 0.5, &inclusive).unwrap(), Some(1.0));
    }

    #[test]
    fn eleven_point_values() {
        // One TP at rank 1 out of 2 gts: envelope precision 1 up to recall
        // 0.5, so 6 of the 11 levels score 1.
        assert!((eleven_point_ap(&[true, false], 2) - 6.0 / 11.0).abs() < 1e-15);
        assert_eq!(eleven_point_ap(&[true, true], 2), 1.0);
        assert_eq!(eleven_point_ap(&[false], 1), 0.0);
        // TP, FP, TP over 2: levels 0..=5 at 1, 6..=10 at 2/3.
        let want = (6.0 + 5.0 * 2.0 / 3.0) / 11.0;
        assert!((eleven_point_ap(&[true, false, true], 2) - want).abs() < 1e-15);
    }

    #[test]
    fn empty_report() {
        let r = evaluate(&DetectionSet::default(), &GroundTruthSet::default(), &DEFAULT_THRESHOLDS).unwrap();
        assert!(r.per_class.is_empty());
        assert_eq!(r.map, vec![None; 3]);
        assert_eq!(r.counts, EvalCounts { images: 0, ground_truths: 0, detections: 0 });
        assert!(r.render_table().contains("> 0.05"));
    }

    #[test]
    fn table_layout() {
        let mut gts = GroundTruthSet::default();
        gts.add("a", 2, bb(0., 0., 10., 10.));
        let mut dets = DetectionSet::default();
        dets.add("a", det(bb(0., 0., 10., 10.), 2, 0.5));
        let r = evaluate(&dets, &gts, &DEFAULT_THRESHOLDS).unwrap();
        let table = r.render_table();
        let header = table.lines().next().unwrap();
        assert!(header.contains("> 0.05") && header.contains("> 0.5") && header.contains("> 0.75"));
        assert!(table.contains("class 2"));
        assert!(table.contains("100.00"));
    }

    #[test]
    fn classes_without_gt_are_excluded() {
        let mut gts = GroundTruthSet::default();
        gts.add("a", 1, bb(0., 0., 10., 10.));
        let mut dets = DetectionSet::default();
        dets.add("a", det(bb(0., 0., 10., 10.), 1, 0.5));
        dets.add("a", det(bb(0., 0., 10., 10.), 3, 0.5));
        let r = evaluate(&dets, &gts, &[0.5]).unwrap();
        assert_eq!(r.per_class.len(), 1);
        assert_eq!(r.map, vec![Some(1.0)]);
    }
}
