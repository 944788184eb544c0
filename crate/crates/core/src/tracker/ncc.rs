use serde::{Deserialize, Serialize};

use super::{Frame, TrackError, TrackResult, Tracker, TrackerFactory};
use crate::geometry::{BBox, FrameSize};

/// Relative size changes tried on every update, nominal size first so that
/// exact ties keep the current scale.
pub const SCALES: [f64; 3] = [1.0, 0.95, 1.05];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NccConfig {
    /// Half-width of the square search window in pixels. `None` uses the
    /// larger template side, rounded up.
    pub search_radius: Option<u32>,
}

/// Template tracker scoring normalised cross-correlation exhaustively over a
/// search window around the previous box, at three scales.
///
/// The template is captured once at init and never updated.
#[derive(Debug, Clone)]
pub struct NccTracker {
    config: NccConfig,
    state: Option<State>,
}

#[derive(Debug, Clone)]
struct State {
    template: Patch,
    frame_size: FrameSize,
    current: BBox,
}

#[derive(Debug, Clone)]
struct Patch {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Patch {
    fn resized(&self, width: usize, height: usize) -> Patch {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let mut data = Vec::with_capacity(width * height);
        for j in 0..height {
            let fy = ((j as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for i in 0..width {
                let fx = ((i as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                let at = |x: usize, y: usize| self.data[y * self.width + x];
                let top = at(x0, y0) * (1.0 - wx) + at(x1, y0) * wx;
                let bottom = at(x0, y1) * (1.0 - wx) + at(x1, y1) * wx;
                data.push(top * (1.0 - wy) + bottom * wy);
            }
        }
        Patch { width, height, data }
    }

    /// Zero-mean copy together with its L2 norm.
    fn centered(mut self) -> (Patch, f64) {
        let n = self.data.len() as f64;
        let mean = self.data.iter().sum::<f64>() / n;
        let mut norm = 0.0;
        for v in &mut self.data {
            *v -= mean;
            norm += *v * *v;
        }
        (self, norm.sqrt())
    }
}

/// Summed-area tables of intensity and squared intensity.
struct Integral {
    stride: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Integral {
    fn new(frame: &Frame) -> Self {
        let (w, h) = (frame.width(), frame.height());
        let stride = w + 1;
        let mut sum = vec![0.0; stride * (h + 1)];
        let mut sq = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let (mut row, mut row_sq) = (0.0, 0.0);
            for x in 0..w {
                let p = frame.get(x, y);
                row += p;
                row_sq += p * p;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row;
                sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + row_sq;
            }
        }
        Self { stride, sum, sq }
    }

    fn rect(table: &[f64], stride: usize, x: usize, y: usize, w: usize, h: usize) -> f64 {
        table[(y + h) * stride + x + w] - table[y * stride + x + w] - table[(y + h) * stride + x]
            + table[y * stride + x]
    }

    fn stats(&self, x: usize, y: usize, w: usize, h: usize) -> (f64, f64) {
        (
            Self::rect(&self.sum, self.stride, x, y, w, h),
            Self::rect(&self.sq, self.stride, x, y, w, h),
        )
    }
}

// Windows or templates flatter than this correlate as 0.
const FLAT_EPS: f64 = 1e-12;

impl NccTracker {
    pub fn new(config: NccConfig) -> Self {
        Self {
            config,
            state: None,
        }
    }

    /// Current box estimate, if initialised.
    pub fn current(&self) -> Option<BBox> {
        self.state.as_ref().map(|s| s.current)
    }

    fn radius(&self, template: &Patch) -> i64 {
        match self.config.search_radius {
            Some(r) => i64::from(r),
            None => template.width.max(template.height) as i64,
        }
    }
}

impl Default for NccTracker {
    fn default() -> Self {
        Self::new(NccConfig::default())
    }
}

/// Pixel index range whose centres fall inside `[lo, hi)`.
fn pixel_span(lo: f64, hi: f64) -> (usize, usize) {
    let a = (lo - 0.5).ceil().max(0.0) as usize;
    let b = (hi - 0.5).ceil().max(0.0) as usize;
    (a, b.max(a))
}

impl Tracker for NccTracker {
    fn init(&mut self, _index: usize, frame: &Frame, seed: BBox) -> Result<(), TrackError> {
        let clipped = seed.clip(frame.size());
        let (xa, xb) = pixel_span(clipped.x0(), clipped.x1());
        let (ya, yb) = pixel_span(clipped.y0(), clipped.y1());
        if clipped.area() <= 0.0 || xb == xa || yb == ya {
            return Err(TrackError::EmptySeed(seed));
        }
        let mut data = Vec::with_capacity((xb - xa) * (yb - ya));
        for y in ya..yb {
            data.extend_from_slice(&frame.pixels()[y * frame.width() + xa..y * frame.width() + xb]);
        }
        self.state = Some(State {
            template: Patch {
                width: xb - xa,
                height: yb - ya,
                data,
            },
            frame_size: frame.size(),
            current: clipped,
        });
        Ok(())
    }

    fn update(&mut self, _index: usize, frame: &Frame) -> Result<TrackResult, TrackError> {
        let radius = match &self.state {
            Some(s) => self.radius(&s.template),
            None => return Err(TrackError::NotInitialized),
        };
        let state = self.state.as_mut().ok_or(TrackError::NotInitialized)?;
        if frame.size() != state.frame_size {
            return Err(TrackError::FrameMismatch {
                expected: state.frame_size,
                got: frame.size(),
            });
        }

        let integral = Integral::new(frame);
        let (fw, fh) = (frame.width() as i64, frame.height() as i64);
        let prev = state.current;
        let (cx, cy) = prev.center();

        // (ncc, box) of the best candidate so far.
        let mut best: Option<(f64, BBox)> = None;
        for scale in SCALES {
            let (w, h) = (prev.width() * scale, prev.height() * scale);
            let ww = (w.round() as usize).max(1);
            let wh = (h.round() as usize).max(1);
            if ww as i64 > fw || wh as i64 > fh {
                continue;
            }
            let (tmpl, tnorm) = state.template.resized(ww, wh).centered();
            let n = (ww * wh) as f64;
            let base_x = (cx - ww as f64 / 2.0).round() as i64;
            let base_y = (cy - wh as f64 / 2.0).round() as i64;

            let offsets = std::iter::once((0, 0)).chain(
                (-radius..=radius)
                    .flat_map(|dy| (-radius..=radius).map(move |dx| (dx, dy)))
                    .filter(|&o| o != (0, 0)),
            );
            for (dx, dy) in offsets {
                let (x, y) = (base_x + dx, base_y + dy);
                if x < 0 || y < 0 || x + ww as i64 > fw || y + wh as i64 > fh {
                    continue;
                }
                let (x, y) = (x as usize, y as usize);
                let (s, sq) = integral.stats(x, y, ww, wh);
                let var = sq - s * s / n;
                let ncc = if tnorm <= FLAT_EPS || var <= FLAT_EPS * n {
                    0.0
                } else {
                    let mut cross = 0.0;
                    for j in 0..wh {
                        let row = &frame.pixels()[(y + j) * frame.width() + x..][..ww];
                        let trow = &tmpl.data[j * ww..(j + 1) * ww];
                        cross += row.iter().zip(trow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    (cross / (tnorm * var.sqrt())).clamp(-1.0, 1.0)
                };
                if best.is_none_or(|(b, _)| ncc > b) {
                    let ccx = x as f64 + ww as f64 / 2.0;
                    let ccy = y as f64 + wh as f64 / 2.0;
                    best = Some((ncc, BBox::from_center(ccx, ccy, w, h)?));
                }
            }
        }

        match best {
            Some((ncc, bbox)) => {
                state.current = bbox;
                Ok(TrackResult {
                    bbox,
                    score: ((ncc + 1.0) / 2.0).clamp(0.0, 1.0),
                })
            }
            // Nowhere to look: report the old box with no confidence.
            None => Ok(TrackResult {
                bbox: prev,
                score: 0.0,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NccTrackerFactory {
    pub config: NccConfig,
}

impl NccTrackerFactory {
    pub fn new(config: NccConfig) -> Self {
        Self { config }
    }
}

impl TrackerFactory for NccTrackerFactory {
    fn create(&self) -> Box<dyn Tracker + Send> {
        Box::new(NccTracker::new(self.config))
    }

    fn describe(&self) -> String {
        match self.config.search_radius {
            Some(r) => format!("ncc(search_radius={r})"),
            None => "ncc(search_radius=auto)".to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn size(w: u32, h: u32) -> FrameSize {
        FrameSize::new(w, h).unwrap()
    }

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    // Cheap deterministic texture in [0.1, 0.9].
    fn texel(seed: u64, x: i64, y: i64) -> f64 {
        let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
            ^ seed;
        h ^= h >> 29;
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 32;
        0.1 + 0.8 * ((h % 1000) as f64 / 999.0)
    }

    /// 64x64 frame, flat 0.5 background, textured 20x20 patch at (x, y).
    fn scene(x: i64, y: i64) -> Frame {
        let mut px = Vec::with_capacity(64 * 64);
        for j in 0..64 {
            for i in 0..64 {
                let inside = i >= x && i < x + 20 && j >= y && j < y + 20;
                px.push(if inside { texel(7, (i - x) / 2, (j - y) / 2) } else { 0.5 });
            }
        }
        Frame::new(size(64, 64), px).unwrap()
    }

    #[test]
    fn rejects_degenerate_seed() {
        let mut t = NccTracker::default();
        let f = scene(10, 10);
        assert!(matches!(t.init(0, &f, bb(0., 0., 0., 0.)), Err(TrackError::EmptySeed(_))));
        assert!(matches!(
            t.init(0, &f, bb(70., 70., 80., 80.)),
            Err(TrackError::EmptySeed(_))
        ));
    }

    #[test]
    fn update_before_init_fails() {
        let mut t = NccTracker::default();
        assert_eq!(t.update(1, &scene(10, 10)), Err(TrackError::NotInitialized));
    }

    #[test]
    fn partial_seed_uses_clipped_region() {
        let mut t = NccTracker::default();
        t.init(0, &scene(0, 0), bb(-5., -5., 20., 20.)).unwrap();
        assert_eq!(t.current(), Some(bb(0., 0., 20., 20.)));
        let r = t.update(1, &scene(0, 0)).unwrap();
        assert_eq!(r.bbox, bb(0., 0., 20., 20.));
    }

    #[test]
    fn static_object_scores_one() {
        let mut t = NccTracker::default();
        let f = scene(10, 10);
        t.init(0, &f, bb(10., 10., 30., 30.)).unwrap();
        let r = t.update(1, &f).unwrap();
        assert_eq!(r.bbox, bb(10., 10., 30., 30.));
        assert!((r.score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn follows_translation() {
        let mut t = NccTracker::default();
        t.init(0, &scene(10, 10), bb(10., 10., 30., 30.)).unwrap();
        let r = t.update(1, &scene(13, 12)).unwrap();
        let (cx, cy) = r.bbox.center();
        assert!((cx - 23.0).abs() <= 1.0 && (cy - 22.0).abs() <= 1.0, "{r:?}");
        assert!(r.score > 0.95);
    }

    #[test]
    fn frame_size_change_is_an_error() {
        let mut t = NccTracker::default();
        t.init(0, &scene(10, 10), bb(10., 10., 30., 30.)).unwrap();
        let other = Frame::filled(size(32, 32), 0.5).unwrap();
        assert!(matches!(t.update(1, &other), Err(TrackError::FrameMismatch { .. })));
    }

    #[test]
    fn resize_identity_and_constant() {
        let p = Patch {
            width: 2,
            height: 2,
            data: vec![0.25; 4],
        };
        let r = p.resized(5, 3);
        assert_eq!(r.data.len(), 15);
        assert!(r.data.iter().all(|v| (*v - 0.25).abs() < 1e-15));
        assert_eq!(p.resized(2, 2).data, p.data);
    }
}
