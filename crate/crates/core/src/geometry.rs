//! Axis-aligned box arithmetic.
//!
//! Boxes use real-valued pixel coordinates with a top-left origin and an
//! exclusive far edge: the width of a box is `x1 - x0`, with no `+1`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("box coordinates must be finite, got ({0}, {1}, {2}, {3})")]
    NonFinite(f64, f64, f64, f64),
    #[error("inverted box ({0}, {1}, {2}, {3}): need x0 <= x1 and y0 <= y1")]
    Inverted(f64, f64, f64, f64),
    #[error("frame size must be at least 1x1, got {0}x{1}")]
    EmptyFrame(u32, u32),
}

/// An axis-aligned box `(x0, y0, x1, y1)`.
///
/// Always satisfies `x0 <= x1`, `y0 <= y1` with finite coordinates.
/// Zero-area boxes are allowed.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        if !(x0.is_finite() && y0.is_finite() && x1.is_finite() && y1.is_finite()) {
            return Err(GeometryError::NonFinite(x0, y0, x1, y1));
        }
        if x0 > x1 || y0 > y1 {
            return Err(GeometryError::Inverted(x0, y0, x1, y1));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    /// Box of the given size centred on `(cx, cy)`.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    /// Area of the overlap with `other` (zero when disjoint).
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        iou(self, other)
    }

    /// True when `(u, v)` lies strictly inside the box (boundary excluded).
    pub fn strictly_contains(&self, u: f64, v: f64) -> bool {
        self.x0 < u && u < self.x1 && self.y0 < v && v < self.y1
    }

    /// Multiplies every coordinate by `factor` (must be positive and finite).
    pub fn scaled(&self, factor: f64) -> Result<Self, GeometryError> {
        Self::new(self.x0 * factor, self.y0 * factor, self.x1 * factor, self.y1 * factor)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Result<Self, GeometryError> {
        Self::new(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)
    }

    /// Intersects the box with the frame rectangle `[0, width] x [0, height]`.
    ///
    /// A box entirely outside the frame collapses onto the nearest edge and
    /// ends up with zero area.
    pub fn clip(&self, frame: FrameSize) -> BBox {
        let (w, h) = (f64::from(frame.width), f64::from(frame.height));
        BBox {
            x0: self.x0.clamp(0.0, w),
            y0: self.y0.clamp(0.0, h),
            x1: self.x1.clamp(0.0, w),
            y1: self.y1.clamp(0.0, h),
        }
    }
}

impl fmt::Debug for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BBox({}, {}, {}, {})", self.x0, self.y0, self.x1, self.y1)
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(c: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// Frame dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "(u32, u32)", into = "(u32, u32)")]
pub struct FrameSize {
    width: u32,
    height: u32,
}

impl FrameSize {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyFrame(width, height));
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// The whole frame as a box.
    pub fn bounds(&self) -> BBox {
        BBox {
            x0: 0.0,
            y0: 0.0,
            x1: f64::from(self.width),
            y1: f64::from(self.height),
        }
    }
}

impl TryFrom<(u32, u32)> for FrameSize {
    type Error = GeometryError;

    fn try_from((w, h): (u32, u32)) -> Result<Self, Self::Error> {
        FrameSize::new(w, h)
    }
}

impl From<FrameSize> for (u32, u32) {
    fn from(f: FrameSize) -> Self {
        (f.width, f.height)
    }
}

/// Intersection over union. Two boxes whose union has zero area give 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

pub fn area(b: &BBox) -> f64 {
    b.area()
}

pub fn clip(b: &BBox, frame: FrameSize) -> BBox {
    b.clip(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    /// Counts unit cells covered by integer-coordinate boxes.
    fn raster_iou(a: [i32; 4], b: [i32; 4]) -> f64 {
        let inside = |r: [i32; 4], x: i32, y: i32| x >= r[0] && x < r[2] && y >= r[1] && y < r[3];
        let (mut inter, mut union) = (0u32, 0u32);
        for y in -1..32 {
            for x in -1..32 {
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                inter += u32::from(ia && ib);
                union += u32::from(ia || ib);
            }
        }
        if union == 0 {
            0.0
        } else {
            f64::from(inter) / f64::from(union)
        }
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&bb(0., 0., 10., 10.), &bb(0., 0., 10., 10.)), 1.0);
        assert_eq!(iou(&bb(0., 0., 10., 10.), &bb(20., 20., 30., 30.)), 0.0);
        let third = raster_iou([0, 0, 10, 10], [5, 0, 15, 10]);
        assert!((third - 1.0 / 3.0).abs() < 1e-12);
        assert!((iou(&bb(0., 0., 10., 10.), &bb(5., 0., 15., 10.)) - third).abs() < 1e-12);
    }

    #[test]
    fn degenerate_pair_has_zero_iou() {
        assert_eq!(iou(&bb(3., 3., 3., 9.), &bb(3., 3., 3., 9.)), 0.0);
        assert_eq!(iou(&bb(0., 0., 0., 0.), &bb(0., 0., 5., 5.)), 0.0);
    }

    #[test]
    fn area_examples() {
        assert_eq!(area(&bb(0., 0., 10., 10.)), 100.0);
        assert_eq!(area(&bb(3., 3., 3., 9.)), 0.0);
        assert_eq!(area(&bb(1.5, 2., 4.5, 5.)), 9.0);
    }

    #[test]
    fn clip_examples() {
        let f = FrameSize::new(100, 100).unwrap();
        assert_eq!(clip(&bb(-5., -5., 10., 10.), f), bb(0., 0., 10., 10.));
        assert_eq!(clip(&bb(50., 50., 60., 60.), f), bb(50., 50., 60., 60.));
        let outside = clip(&bb(150., 150., 160., 160.), f);
        assert_eq!(outside.area(), 0.0);
        assert_eq!(outside, bb(100., 100., 100., 100.));
    }

    #[test]
    fn rejects_invalid_boxes() {
        assert!(matches!(BBox::new(5., 0., 1., 1.), Err(GeometryError::Inverted(..))));
        assert!(matches!(BBox::new(f64::NAN, 0., 1., 1.), Err(GeometryError::NonFinite(..))));
        assert!(FrameSize::new(0, 10).is_err());
    }

    #[test]
    fn serde_rejects_inverted_box() {
        assert!(serde_json::from_str::<BBox>("[1, 1, 0, 2]").is_err());
        let b: BBox = serde_json::from_str("[1, 1, 2, 2]").unwrap();
        assert_eq!(b, bb(1., 1., 2., 2.));
    }

    fn any_box() -> impl Strategy<Value = BBox> {
        (-50.0..150.0f64, -50.0..150.0f64, 0.0..80.0f64, 0.0..80.0f64)
            .prop_map(|(x, y, w, h)| bb(x, y, x + w, y + h))
    }

    fn int_box() -> impl Strategy<Value = [i32; 4]> {
        (0..25i32, 0..25i32, 0..7i32, 0..7i32).prop_map(|(x, y, w, h)| [x, y, x + w, y + h])
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in any_box(), b in any_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn self_iou_is_one(a in any_box()) {
            prop_assume!(a.area() > 0.0);
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn iou_matches_raster(a in int_box(), b in int_box()) {
            let fa = bb(a[0].into(), a[1].into(), a[2].into(), a[3].into());
            let fb = bb(b[0].into(), b[1].into(), b[2].into(), b[3].into());
            prop_assert!((iou(&fa, &fb) - raster_iou(a, b)).abs() < 1e-9);
        }

        #[test]
        fn clip_never_grows(a in any_box(), w in 1u32..200, h in 1u32..200) {
            let f = FrameSize::new(w, h).unwrap();
            let c = clip(&a, f);
            prop_assert!(c.area() <= a.area());
            prop_assert!(c.x0() >= 0.0 && c.x1() <= f64::from(w));
            prop_assert!(c.y0() >= 0.0 && c.y1() <= f64::from(h));
        }
    }
}
