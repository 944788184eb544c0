//! Anchor-free (FCOS-style) regression targets and detection loss.
//!
//! A feature-map location projected to image space at `(u, v)` that falls
//! strictly inside a ground-truth box `(x0, y0, x1, y1)` regresses the four
//! distances `l = u - x0`, `t = v - y0`, `r = x1 - u`, `b = y1 - v`. Locations
//! inside no box are background (class 0) and carry no regression target.
//!
//! The loss averages a sigmoid focal classification term over every location
//! and an IoU regression term over the positive ones, both normalised by the
//! positive count (floored at 1).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, BBox, FrameSize, GeometryError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FcosError {
    #[error("position ({u}, {v}) is not strictly inside {gt:?}")]
    OutsideBox { u: f64, v: f64, gt: BBox },
    #[error("regression distances must be finite and non-negative, got {0:?}")]
    NegativeDistance([f64; 4]),
    #[error("ground-truth class must be >= 1")]
    BackgroundClass,
    #[error("input lists differ in length: {scores} scores, {regressions} regressions, {targets} targets")]
    LengthMismatch {
        scores: usize,
        regressions: usize,
        targets: usize,
    },
    #[error("class {class} out of range for a score vector of length {len}")]
    ClassOutOfRange { class: u32, len: usize },
    #[error("class probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("stride must be positive")]
    ZeroStride,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A feature-map location projected into image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct GridPosition {
    pub u: f64,
    pub v: f64,
}

impl GridPosition {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

impl From<[f64; 2]> for GridPosition {
    fn from([u, v]: [f64; 2]) -> Self {
        Self { u, v }
    }
}

impl From<GridPosition> for [f64; 2] {
    fn from(p: GridPosition) -> Self {
        [p.u, p.v]
    }
}

/// Image-space locations of a single-level feature map with the given stride.
///
/// Location `(i, j)` maps to `(floor(stride / 2) + i * stride, floor(stride / 2) + j * stride)`,
/// row-major.
pub fn grid_positions(frame: FrameSize, stride: u32) -> Result<Vec<GridPosition>, FcosError> {
    if stride == 0 {
        return Err(FcosError::ZeroStride);
    }
    let offset = stride / 2;
    let xs: Vec<u32> = (offset..frame.width()).step_by(stride as usize).collect();
    let mut out = Vec::with_capacity(xs.len() * (frame.height() / stride + 1) as usize);
    for v in (offset..frame.height()).step_by(stride as usize) {
        out.extend(xs.iter().map(|&u| GridPosition::new(u.into(), v.into())));
    }
    Ok(out)
}

/// Distances `(l, t, r, b)` from a location to the four sides of a box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Ltrb {
    l: f64,
    t: f64,
    r: f64,
    b: f64,
}

impl Ltrb {
    pub fn new(l: f64, t: f64, r: f64, b: f64) -> Result<Self, FcosError> {
        let all = [l, t, r, b];
        if all.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(FcosError::NegativeDistance(all));
        }
        Ok(Self { l, t, r, b })
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.l, self.t, self.r, self.b]
    }
}

impl TryFrom<[f64; 4]> for Ltrb {
    type Error = FcosError;

    fn try_from(d: [f64; 4]) -> Result<Self, Self::Error> {
        Ltrb::new(d[0], d[1], d[2], d[3])
    }
}

impl From<Ltrb> for [f64; 4] {
    fn from(d: Ltrb) -> Self {
        d.to_array()
    }
}

/// Regression target for `pos` against `gt`. The position must be strictly
/// inside the box; anything else is background.
pub fn encode_target(pos: GridPosition, gt: &BBox) -> Result<Ltrb, FcosError> {
    if !gt.strictly_contains(pos.u, pos.v) {
        return Err(FcosError::OutsideBox {
            u: pos.u,
            v: pos.v,
            gt: *gt,
        });
    }
    Ltrb::new(pos.u - gt.x0(), pos.v - gt.y0(), gt.x1() - pos.u, gt.y1() - pos.v)
}

pub fn decode_box(pos: GridPosition, d: Ltrb) -> Result<BBox, FcosError> {
    Ok(BBox::new(pos.u - d.l, pos.v - d.t, pos.u + d.r, pos.v + d.b)?)
}

/// Class label and regression target of one location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FcosTarget {
    Background,
    Positive { class: u32, ltrb: Ltrb },
}

impl FcosTarget {
    /// `c_p`: 0 for background, the object class otherwise.
    pub fn class(&self) -> u32 {
        match self {
            FcosTarget::Background => 0,
            FcosTarget::Positive { class, .. } => *class,
        }
    }

    pub fn ltrb(&self) -> Option<Ltrb> {
        match self {
            FcosTarget::Background => None,
            FcosTarget::Positive { ltrb, .. } => Some(*ltrb),
        }
    }

    pub fn is_positive(&self) -> bool {
        matches!(self, FcosTarget::Positive { .. })
    }
}

/// Assigns each location to the smallest-area ground-truth box that strictly
/// contains it; equal areas go to the earlier box.
pub fn assign_targets(
    positions: &[GridPosition],
    gts: &[(BBox, u32)],
) -> Result<Vec<FcosTarget>, FcosError> {
    if gts.iter().any(|(_, c)| *c == 0) {
        return Err(FcosError::BackgroundClass);
    }
    positions
        .iter()
        .map(|&pos| {
            let best = gts
                .iter()
                .filter(|(b, _)| b.strictly_contains(pos.u, pos.v))
                .fold(None::<&(BBox, u32)>, |acc, cand| match acc {
                    Some(cur) if cur.0.area() <= cand.0.area() => Some(cur),
                    _ => Some(cand),
                });
            match best {
                None => Ok(FcosTarget::Background),
                Some((gt, class)) => Ok(FcosTarget::Positive {
                    class: *class,
                    ltrb: encode_target(pos, gt)?,
                }),
            }
        })
        .collect()
}

/// Per-class probabilities for one location; index `k` holds class `k + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClassScores(Vec<f64>);

impl ClassScores {
    pub fn new(probs: Vec<f64>) -> Result<Self, FcosError> {
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(FcosError::BadProbability(*p));
        }
        Ok(Self(probs))
    }

    /// All-zero scores except probability 1 on `class` (background when 0).
    pub fn one_hot(num_classes: usize, class: u32) -> Self {
        let mut v = vec![0.0; num_classes];
        if class > 0 {
            v[class as usize - 1] = 1.0;
        }
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ClassScores {
    type Error = FcosError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        ClassScores::new(v)
    }
}

impl From<ClassScores> for Vec<f64> {
    fn from(s: ClassScores) -> Self {
        s.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    /// Lower bound on IoU inside the log of the regression term.
    pub iou_floor: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            focal_gamma: 2.0,
            focal_alpha: 0.25,
            iou_floor: 1e-6,
        }
    }
}

// Smallest probability fed to ln; only reached when the focal weight is non-zero.
const PROB_EPS: f64 = 1e-12;

/// Sigmoid focal loss summed over the classes of one location.
pub fn focal_loss(scores: &ClassScores, class: u32, cfg: &LossConfig) -> f64 {
    scores
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            if class as usize == k + 1 {
                let w = (1.0 - p).powf(cfg.focal_gamma);
                if w == 0.0 {
                    0.0
                } else {
                    -cfg.focal_alpha * w * p.max(PROB_EPS).ln()
                }
            } else {
                let w = p.powf(cfg.focal_gamma);
                if w == 0.0 {
                    0.0
                } else {
                    -(1.0 - cfg.focal_alpha) * w * (1.0 - p).max(PROB_EPS).ln()
                }
            }
        })
        .sum()
}

/// `-ln(max(IoU, floor))` between the boxes decoded from the predicted and
/// target distances at `pos`.
pub fn iou_loss(pos: GridPosition, predicted: Ltrb, target: Ltrb, cfg: &LossConfig) -> f64 {
    let (Ok(p), Ok(t)) = (decode_box(pos, predicted), decode_box(pos, target)) else {
        unreachable!("non-negative finite distances always decode");
    };
    let overlap = iou(&p, &t).max(cfg.iou_floor);
    if overlap >= 1.0 {
        0.0
    } else {
        -overlap.ln()
    }
}

/// Total loss over aligned per-location scores, predicted distances and targets.
///
/// Regression only contributes where the target is positive, so background
/// entries of `regressions` are ignored. The IoU term is evaluated at the
/// origin: IoU is translation invariant, so the location itself drops out.
pub fn detection_loss(
    scores: &[ClassScores],
    regressions: &[Ltrb],
    targets: &[FcosTarget],
    cfg: &LossConfig,
) -> Result<f64, FcosError> {
    if scores.len() != regressions.len() || scores.len() != targets.len() {
        return Err(FcosError::LengthMismatch {
            scores: scores.len(),
            regressions: regressions.len(),
            targets: targets.len(),
        });
    }
    for (s, t) in scores.iter().zip(targets) {
        if t.class() as usize > s.as_slice().len() {
            return Err(FcosError::ClassOutOfRange {
                class: t.class(),
                len: s.as_slice().len(),
            });
        }
    }

    let positives = targets.iter().filter(|t| t.is_positive()).count();
    let n = positives.max(1) as f64;
    let origin = GridPosition::new(0.0, 0.0);

    let cls: f64 = scores
        .iter()
        .zip(targets)
        .map(|(s, t)| focal_loss(s, t.class(), cfg))
        .sum();
    let reg: f64 = regressions
        .iter()
        .zip(targets)
        .filter_map(|(pred, t)| t.ltrb().map(|target| iou_loss(origin, *pred, target, cfg)))
        .sum();
    Ok(cls / n + reg / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn p(u: f64, v: f64) -> GridPosition {
        GridPosition::new(u, v)
    }

    fn d(l: f64, t: f64, r: f64, b: f64) -> Ltrb {
        Ltrb::new(l, t, r, b).unwrap()
    }

    #[test]
    fn encode_examples() {
        let gt = bb(0., 0., 10., 10.);
        assert_eq!(encode_target(p(5., 5.), &gt).unwrap(), d(5., 5., 5., 5.));
        assert_eq!(encode_target(p(2., 3.), &gt).unwrap(), d(2., 3., 8., 7.));
        assert!(matches!(
            encode_target(p(1., 1.), &bb(1., 1., 9., 9.)),
            Err(FcosError::OutsideBox { .. })
        ));
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_box(p(5., 5.), d(5., 5., 5., 5.)).unwrap(), bb(0., 0., 10., 10.));
        assert_eq!(decode_box(p(2., 3.), d(2., 3., 8., 7.)).unwrap(), bb(0., 0., 10., 10.));
        let z = decode_box(p(0., 0.), d(0., 0., 0., 0.)).unwrap();
        assert_eq!(z, bb(0., 0., 0., 0.));
        assert!(Ltrb::new(-1., 0., 0., 0.).is_err());
    }

    #[test]
    fn assign_examples() {
        let t = assign_targets(&[p(5., 5.)], &[(bb(0., 0., 10., 10.), 3)]).unwrap();
        assert_eq!(t, vec![FcosTarget::Positive { class: 3, ltrb: d(5., 5., 5., 5.) }]);

        let t = assign_targets(&[p(50., 50.)], &[(bb(0., 0., 10., 10.), 3)]).unwrap();
        assert_eq!(t, vec![FcosTarget::Background]);
        assert_eq!(t[0].class(), 0);

        assert!(assign_targets(&[p(1., 1.)], &[(bb(0., 0., 2., 2.), 0)]).is_err());
    }

    #[test]
    fn nested_boxes_prefer_smaller_area() {
        let small = bb(5., 5., 15., 15.);
        let big = bb(0., 0., 20., 20.);
        let pos = p(10., 10.);
        // Both orders must agree; exhaustively check the two candidates.
        for gts in [vec![(small, 1), (big, 2)], vec![(big, 2), (small, 1)]] {
            let t = assign_targets(&[pos], &gts).unwrap();
            let candidates: Vec<_> = gts
                .iter()
                .filter(|(b, _)| b.strictly_contains(pos.u, pos.v))
                .collect();
            assert_eq!(candidates.len(), 2);
            let min = candidates
                .iter()
                .min_by(|a, b| a.0.area().total_cmp(&b.0.area()))
                .unwrap();
            assert_eq!(min.0.area(), 100.0);
            assert_eq!(t[0].class(), min.1);
            assert_eq!(t[0].ltrb().unwrap(), encode_target(pos, &small).unwrap());
        }
    }

    #[test]
    fn grid_positions_cover_frame() {
        let g = grid_positions(FrameSize::new(16, 8).unwrap(), 8).unwrap();
        assert_eq!(g, vec![p(4., 4.), p(12., 4.)]);
        assert!(grid_positions(FrameSize::new(16, 8).unwrap(), 0).is_err());
    }

    #[test]
    fn loss_zero_on_perfect_prediction() {
        let cfg = LossConfig::default();
        let targets = vec![
            FcosTarget::Positive { class: 2, ltrb: d(3., 4., 5., 6.) },
            FcosTarget::Background,
        ];
        let scores = vec![ClassScores::one_hot(3, 2), ClassScores::one_hot(3, 0)];
        let regs = vec![d(3., 4., 5., 6.), d(0., 0., 0., 0.)];
        assert_eq!(detection_loss(&scores, &regs, &targets, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn background_only_is_focal_term() {
        let cfg = LossConfig::default();
        let targets = vec![FcosTarget::Background; 4];
        let scores = vec![ClassScores::new(vec![0.5, 0.5]).unwrap(); 4];
        let regs = vec![d(1., 1., 1., 1.); 4];
        let got = detection_loss(&scores, &regs, &targets, &cfg).unwrap();
        // N floors at 1; each of 2 classes contributes -(0.75)(0.25)ln(0.5).
        let expected = 4.0 * 2.0 * (-(0.75) * 0.25 * 0.5f64.ln());
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn half_iou_gives_ln2() {
        // Target 10x10 around the location; prediction widened to 20x10 so the
        // decoded boxes overlap in exactly half the union.
        let cfg = LossConfig::default();
        let target = d(5., 5., 5., 5.);
        let pred = d(5., 5., 15., 5.);
        let pos = p(5., 5.);
        let overlap = iou(&decode_box(pos, pred).unwrap(), &decode_box(pos, target).unwrap());
        assert!((overlap - 0.5).abs() < 1e-15);
        let loss = detection_loss(
            &[ClassScores::one_hot(1, 1)],
            &[pred],
            &[FcosTarget::Positive { class: 1, ltrb: target }],
            &cfg,
        )
        .unwrap();
        assert!((loss - 0.6931).abs() < 1e-4);
        assert!((loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn disjoint_prediction_uses_floor() {
        let cfg = LossConfig::default();
        // Zero-area prediction never overlaps the target.
        let loss = iou_loss(p(0., 0.), d(0., 0., 0., 0.), d(1., 1., 1., 1.), &cfg);
        assert!((loss - (-(1e-6f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn loss_errors() {
        let cfg = LossConfig::default();
        assert!(matches!(
            detection_loss(&[ClassScores::one_hot(1, 1)], &[], &[FcosTarget::Background], &cfg),
            Err(FcosError::LengthMismatch { .. })
        ));
        assert!(matches!(
            detection_loss(
                &[ClassScores::one_hot(1, 0)],
                &[d(1., 1., 1., 1.)],
                &[FcosTarget::Positive { class: 2, ltrb: d(1., 1., 1., 1.) }],
                &cfg
            ),
            Err(FcosError::ClassOutOfRange { .. })
        ));
        assert!(ClassScores::new(vec![1.5]).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_on_pixel_grid(
            x0 in 0u32..4096, y0 in 0u32..4096, w in 2u32..4096, h in 2u32..4096,
            fu in 0.0..1.0f64, fv in 0.0..1.0f64,
        ) {
            // Coordinates in 1/64 px steps are representable, so every
            // subtraction is exact.
            let q = |x: u32| f64::from(x) / 64.0;
            let gt = bb(q(x0), q(y0), q(x0 + w), q(y0 + h));
            let u = q(x0 + 1 + ((fu * f64::from(w - 2)) as u32));
            let v = q(y0 + 1 + ((fv * f64::from(h - 2)) as u32));
            let pos = p(u, v);
            let target = encode_target(pos, &gt).unwrap();
            prop_assert!(target.to_array().iter().all(|x| *x >= 0.0));
            prop_assert_eq!(decode_box(pos, target).unwrap(), gt);
        }

        #[test]
        fn roundtrip_off_grid_within_rounding(
            x0 in -500.0..500.0f64, y0 in -500.0..500.0f64, w in 0.01..300.0f64, h in 0.01..300.0f64,
            fu in 0.01..0.99f64, fv in 0.01..0.99f64,
        ) {
            let gt = bb(x0, y0, x0 + w, y0 + h);
            let pos = p(x0 + fu * w, y0 + fv * h);
            prop_assume!(pos.u > gt.x0() && pos.u < gt.x1() && pos.v > gt.y0() && pos.v < gt.y1());
            let back = decode_box(pos, encode_target(pos, &gt).unwrap()).unwrap();
            // One rounding in the subtraction and one in the addition.
            for (a, b) in back.to_array().iter().zip(gt.to_array()) {
                prop_assert!((a - b).abs() <= 2.0 * f64::EPSILON * 1000.0, "{a} vs {b}");
            }
        }

        #[test]
        fn loss_nonnegative(
            probs in proptest::collection::vec(0.0..=1.0f64, 3),
            pred in (0.0..20.0f64, 0.0..20.0f64, 0.0..20.0f64, 0.0..20.0f64),
            class in 0u32..=3,
        ) {
            let cfg = LossConfig::default();
            let target = if class == 0 {
                FcosTarget::Background
            } else {
                FcosTarget::Positive { class, ltrb: d(4., 4., 4., 4.) }
            };
            let loss = detection_loss(
                &[ClassScores::new(probs).unwrap()],
                &[d(pred.0, pred.1, pred.2, pred.3)],
                &[target],
                &cfg,
            ).unwrap();
            prop_assert!(loss >= 0.0 && loss.is_finite());
        }

        #[test]
        fn decoded_iou_scale_invariant(
            t in (0.5..20.0f64, 0.5..20.0f64, 0.5..20.0f64, 0.5..20.0f64),
            q in (0.5..20.0f64, 0.5..20.0f64, 0.5..20.0f64, 0.5..20.0f64),
            u in 0.0..100.0f64, v in 0.0..100.0f64, s in 0.1..10.0f64,
        ) {
            let cfg = LossConfig::default();
            let a = iou_loss(p(u, v), d(q.0, q.1, q.2, q.3), d(t.0, t.1, t.2, t.3), &cfg);
            let b = iou_loss(
                p(u * s, v * s),
                d(q.0 * s, q.1 * s, q.2 * s, q.3 * s),
                d(t.0 * s, t.1 * s, t.2 * s, t.3 * s),
                &cfg,
            );
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
