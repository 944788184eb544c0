//! Deterministic synthetic action clips with dense ground truth and a sparse
//! seed subsample.
//!
//! Every random draw comes from [`XorShift64Star`], so a config reproduces the
//! same frames, boxes and seeds on any platform. Box coordinates are snapped
//! to 1/16 px, which keeps them exact through the 4-decimal file formats.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::densify::{ActionClip, DensifyError, Seed};
use crate::geometry::{iou, BBox, FrameSize, GeometryError};
use crate::tracker::{Frame, OracleTrack, OracleTrackerFactory, TrackError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("clip needs at least one frame")]
    NoFrames,
    #[error("keep fraction {0} outside (0, 1]")]
    KeepFraction(f64),
    #[error("object {0}: initial box must have positive area and lie inside the frame")]
    InitialBox(usize),
    #[error("object {0}: class must be >= 1")]
    Class(usize),
    #[error("object {0}: sinusoid period must be positive")]
    Period(usize),
    #[error("object {0}: motion parameters must be finite and scale drift > -1")]
    Motion(usize),
    #[error("no object with id {0}")]
    UnknownObject(usize),
    #[error("background parameters out of range")]
    Background,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Frame(#[from] TrackError),
    #[error(transparent)]
    Clip(#[from] DensifyError),
}

/// SplitMix64 step, used to derive stream seeds:
/// `z = (s += 0x9E3779B97F4A7C15); z = (z ^ z>>30) * 0xBF58476D1CE4E5B9;
/// z = (z ^ z>>27) * 0x94D049BB133111EB; return z ^ z>>31`.
pub fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Marsaglia/Vigna xorshift64*:
/// `x ^= x >> 12; x ^= x << 25; x ^= x >> 27; out = x * 0x2545F4914F6CDD1D`.
/// The state is `splitmix64(seed)` (replaced by a fixed constant if that is 0).
#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let s = splitmix64(seed);
        Self {
            state: if s == 0 { 0x9E37_79B9_7F4A_7C15 } else { s },
        }
    }

    /// Independent stream for a (seed, tag) pair.
    pub fn stream(seed: u64, tag: u64) -> Self {
        Self::new(splitmix64(seed) ^ tag.wrapping_mul(0xD1B5_4A32_D192_ED03))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        (self.next_f64() * n as f64) as u64 % n
    }

    /// Approximately standard normal: sum of 12 uniforms minus 6. Avoids
    /// transcendental functions so results are bit-identical everywhere.
    pub fn approx_normal(&mut self) -> f64 {
        (0..12).map(|_| self.next_f64()).sum::<f64>() - 6.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Motion {
    /// Constant velocity in px/frame.
    Linear { vx: f64, vy: f64 },
    /// Centre offset `(ax, ay) * sin(2 pi k / period)`.
    Sinusoidal { ax: f64, ay: f64, period: f64 },
}

impl Motion {
    pub fn offset(&self, k: usize) -> (f64, f64) {
        let k = k as f64;
        match *self {
            Motion::Linear { vx, vy } => (vx * k, vy * k),
            Motion::Sinusoidal { ax, ay, period } => {
                let s = (2.0 * std::f64::consts::PI * k / period).sin();
                (ax * s, ay * s)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub class: u32,
    pub appearance_seed: u64,
    pub initial: BBox,
    pub motion: Motion,
    /// Relative size change per frame: size(k) = size(0) * (1 + drift)^k.
    #[serde(default)]
    pub scale_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub frame_size: FrameSize,
    pub num_frames: usize,
    pub objects: Vec<ObjectSpec>,
    /// Probability that a frame's box becomes a seed.
    pub keep_fraction: f64,
    pub seed: u64,
    pub background_level: f64,
    pub background_sigma: f64,
}

/// Side of a texture cell in pixels at the object's initial size.
const TEXTURE_CELL: f64 = 3.0;
const SNAP: f64 = 16.0;

fn snap(v: f64) -> f64 {
    (v * SNAP).round() / SNAP
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

impl SynthConfig {
    pub fn new(frame_size: FrameSize, num_frames: usize, objects: Vec<ObjectSpec>, keep_fraction: f64, seed: u64) -> Self {
        Self {
            frame_size,
            num_frames,
            objects,
            keep_fraction,
            seed,
            background_level: 0.5,
            background_sigma: 0.05,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.num_frames == 0 {
            return Err(SynthError::NoFrames);
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(SynthError::KeepFraction(self.keep_fraction));
        }
        if !(0.0..=1.0).contains(&self.background_level) || !(0.0..=1.0).contains(&self.background_sigma) {
            return Err(SynthError::Background);
        }
        let bounds = self.frame_size.bounds();
        for (i, o) in self.objects.iter().enumerate() {
            let b = o.initial;
            if b.area() <= 0.0 || b.x0() < 0.0 || b.y0() < 0.0 || b.x1() > bounds.x1() || b.y1() > bounds.y1() {
                return Err(SynthError::InitialBox(i));
            }
            if o.class == 0 {
                return Err(SynthError::Class(i));
            }
            let finite = match o.motion {
                Motion::Linear { vx, vy } => vx.is_finite() && vy.is_finite(),
                Motion::Sinusoidal { ax, ay, period } => {
                    if !(period > 0.0) {
                        return Err(SynthError::Period(i));
                    }
                    ax.is_finite() && ay.is_finite() && period.is_finite()
                }
            };
            if !finite || !o.scale_drift.is_finite() || o.scale_drift <= -1.0 {
                return Err(SynthError::Motion(i));
            }
        }
        Ok(())
    }

    /// Unclipped box of object `id` at frame `k`.
    pub fn true_box(&self, id: usize, k: usize) -> Result<BBox, SynthError> {
        let o = self.objects.get(id).ok_or(SynthError::UnknownObject(id))?;
        let (cx, cy) = o.initial.center();
        let (dx, dy) = o.motion.offset(k);
        let grow = (1.0 + o.scale_drift).powi(k as i32);
        let (w, h) = (o.initial.width() * grow, o.initial.height() * grow);
        let (cx, cy) = (cx + dx, cy + dy);
        Ok(BBox::new(
            snap(cx - w / 2.0),
            snap(cy - h / 2.0),
            snap(cx + w / 2.0),
            snap(cy + h / 2.0),
        )?)
    }

    /// Ground-truth box of object `id` at frame `k`: the true box clipped to
    /// the frame, or `None` once nothing of it is visible.
    pub fn gt_box(&self, id: usize, k: usize) -> Result<Option<BBox>, SynthError> {
        let b = self.true_box(id, k)?.clip(self.frame_size);
        Ok((b.area() > 0.0).then_some(b))
    }
}

/// IoU between object `id`'s ground-truth boxes at frames `k` and `k + 1`,
/// for every `k`. Absent boxes give 0.
pub fn true_consecutive_iou(config: &SynthConfig, id: usize) -> Result<Vec<f64>, SynthError> {
    let boxes: Vec<Option<BBox>> = (0..config.num_frames)
        .map(|k| config.gt_box(id, k))
        .collect::<Result<_, _>>()?;
    Ok(boxes
        .windows(2)
        .map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => iou(&a, &b),
            _ => 0.0,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectBox {
    pub object: usize,
    pub class: u32,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSeed {
    pub object: usize,
    pub seed: Seed,
}

/// A generated clip: frames, per-frame dense ground truth and sparse seeds
/// sorted by (frame, object).
#[derive(Debug, Clone)]
pub struct SynthClip {
    pub frames: Vec<Frame>,
    pub gt: Vec<Vec<ObjectBox>>,
    pub seeds: Vec<SynthSeed>,
}

impl SynthClip {
    pub fn action_clip(&self, id: impl Into<String>) -> Result<ActionClip, SynthError> {
        Ok(ActionClip::new(
            id,
            self.frames.clone(),
            self.seeds.iter().map(|s| s.seed).collect(),
        )?)
    }

    /// One ground-truth track per object, for the oracle tracker.
    pub fn oracle_tracks(&self, num_objects: usize) -> Vec<OracleTrack> {
        let mut tracks = vec![vec![None; self.frames.len()]; num_objects];
        for (k, boxes) in self.gt.iter().enumerate() {
            for b in boxes {
                tracks[b.object][k] = Some(b.bbox);
            }
        }
        tracks
    }

    pub fn oracle(&self, num_objects: usize) -> OracleTrackerFactory {
        OracleTrackerFactory::new(self.oracle_tracks(num_objects))
    }
}

fn texture(o: &ObjectSpec) -> (usize, usize, Vec<f64>) {
    let gw = (o.initial.width() / TEXTURE_CELL).ceil().max(1.0) as usize;
    let gh = (o.initial.height() / TEXTURE_CELL).ceil().max(1.0) as usize;
    let mut rng = XorShift64Star::new(o.appearance_seed);
    let cells = (0..gw * gh).map(|_| rng.uniform(0.05, 0.95)).collect();
    (gw, gh, cells)
}

pub fn generate_clip(config: &SynthConfig) -> Result<SynthClip, SynthError> {
    config.validate()?;
    let (fw, fh) = (config.frame_size.width() as usize, config.frame_size.height() as usize);
    let textures: Vec<_> = config.objects.iter().map(texture).collect();

    let mut frames = Vec::with_capacity(config.num_frames);
    let mut gt = Vec::with_capacity(config.num_frames);
    for k in 0..config.num_frames {
        let mut rng = XorShift64Star::stream(config.seed, k as u64);
        let mut px: Vec<f64> = (0..fw * fh)
            .map(|_| config.background_level + config.background_sigma * rng.approx_normal())
            .collect();
        let mut boxes = Vec::new();
        for (id, o) in config.objects.iter().enumerate() {
            let b = config.true_box(id, k)?;
            let (gw, gh, cells) = &textures[id];
            let (ya, yb) = pixel_span(b.y0(), b.y1(), fh);
            let (xa, xb) = pixel_span(b.x0(), b.x1(), fw);
            for y in ya..yb {
                let ty = (((y as f64 + 0.5 - b.y0()) / b.height() * *gh as f64) as usize).min(gh - 1);
                for x in xa..xb {
                    let tx = (((x as f64 + 0.5 - b.x0()) / b.width() * *gw as f64) as usize).min(gw - 1);
                    px[y * fw + x] = cells[ty * gw + tx];
                }
            }
            if let Some(bbox) = config.gt_box(id, k)? {
                boxes.push(ObjectBox {
                    object: id,
                    class: o.class,
                    bbox,
                });
            }
        }
        frames.push(Frame::new(config.frame_size, px.into_iter().map(quantize).collect())?);
        gt.push(boxes);
    }

    let mut seeds = Vec::new();
    let mut rng = XorShift64Star::stream(config.seed, u64::MAX);
    for (id, o) in config.objects.iter().enumerate() {
        let present: Vec<(usize, BBox)> = gt
            .iter()
            .enumerate()
            .filter_map(|(k, boxes)| boxes.iter().find(|b| b.object == id).map(|b| (k, b.bbox)))
            .collect();
        if present.is_empty() {
            continue;
        }
        let mut kept: Vec<(usize, BBox)> = present
            .iter()
            .copied()
            .filter(|_| rng.next_f64() < config.keep_fraction)
            .collect();
        if kept.is_empty() {
            kept.push(present[rng.below(present.len() as u64) as usize]);
        }
        seeds.extend(kept.into_iter().map(|(frame, bbox)| SynthSeed {
            object: id,
            seed: Seed {
                frame,
                class: o.class,
                bbox,
            },
        }));
    }
    seeds.sort_by_key(|s| (s.seed.frame, s.object));
    Ok(SynthClip { frames, gt, seeds })
}

/// Pixel indices in `[0, limit)` whose centres fall inside `[lo, hi)`.
fn pixel_span(lo: f64, hi: f64, limit: usize) -> (usize, usize) {
    let a = (lo - 0.5).ceil().clamp(0.0, limit as f64) as usize;
    let b = (hi - 0.5).ceil().clamp(0.0, limit as f64) as usize;
    (a, b.max(a))
}

/// Parameters for drawing a random scene of linearly moving objects that
/// stay fully inside the frame for the whole clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomScene {
    pub frame_size: FrameSize,
    pub num_frames: usize,
    pub num_objects: usize,
    pub num_classes: u32,
    pub keep_fraction: f64,
    pub seed: u64,
    /// Upper bound on |velocity| in px/frame.
    pub max_speed: f64,
    pub min_size: u32,
    pub max_size: u32,
}

impl RandomScene {
    pub fn new(frame_size: FrameSize, num_frames: usize, num_objects: usize, keep_fraction: f64, seed: u64) -> Self {
        Self {
            frame_size,
            num_frames,
            num_objects,
            num_classes: 3,
            keep_fraction,
            seed,
            max_speed: 3.0,
            min_size: 14,
            max_size: 24,
        }
    }

    pub fn config(&self) -> SynthConfig {
        let mut rng = XorShift64Star::stream(self.seed, 0x5CE4E);
        let (fw, fh) = (f64::from(self.frame_size.width()), f64::from(self.frame_size.height()));
        let span = self.num_frames.saturating_sub(1) as f64;
        let objects = (0..self.num_objects)
            .map(|i| {
                let size_range = u64::from(self.max_size.saturating_sub(self.min_size)) + 1;
                let w = (f64::from(self.min_size) + rng.below(size_range) as f64).min(fw);
                let h = (f64::from(self.min_size) + rng.below(size_range) as f64).min(fh);
                let mut vx = snap(rng.uniform(-self.max_speed, self.max_speed));
                let mut vy = snap(rng.uniform(-self.max_speed, self.max_speed));
                let norm = (vx * vx + vy * vy).sqrt();
                if norm > self.max_speed {
                    vx = snap(vx * self.max_speed / norm);
                    vy = snap(vy * self.max_speed / norm);
                }
                // Shrink the velocity until the whole path fits.
                let fits = |v: f64, size: f64, limit: f64| size + (v * span).abs() <= limit;
                while !fits(vx, w, fw) {
                    vx = snap(vx / 2.0);
                }
                while !fits(vy, h, fh) {
                    vy = snap(vy / 2.0);
                }
                let x_lo = (-(vx * span)).max(0.0);
                let x_hi = fw - w - (vx * span).max(0.0);
                let y_lo = (-(vy * span)).max(0.0);
                let y_hi = fh - h - (vy * span).max(0.0);
                let x0 = (x_lo + rng.below((x_hi - x_lo).floor() as u64 + 1) as f64).ceil().min(x_hi.floor());
                let y0 = (y_lo + rng.below((y_hi - y_lo).floor() as u64 + 1) as f64).ceil().min(y_hi.floor());
                ObjectSpec {
                    class: (i as u32 % self.num_classes.max(1)) + 1,
                    appearance_seed: rng.next_u64(),
                    initial: BBox::new(x0, y0, x0 + w, y0 + h).expect("non-negative size"),
                    motion: Motion::Linear { vx, vy },
                    scale_drift: 0.0,
                }
            })
            .collect();
        SynthConfig::new(self.frame_size, self.num_frames, objects, self.keep_fraction, self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn size(w: u32, h: u32) -> FrameSize {
        FrameSize::new(w, h).unwrap()
    }

    fn object(initial: BBox, motion: Motion) -> ObjectSpec {
        ObjectSpec {
            class: 1,
            appearance_seed: 11,
            initial,
            motion,
            scale_drift: 0.0,
        }
    }

    #[test]
    fn rng_reference_values() {
        // splitmix64(0) is a published reference value.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        let mut a = XorShift64Star::new(42);
        let mut b = XorShift64Star::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut r = XorShift64Star::new(1);
        for _ in 0..1000 {
            let x = r.next_f64();
            assert!((0.0..1.0).contains(&x));
            assert!(r.below(7) < 7);
        }
    }

    #[test]
    fn single_frame_single_object() {
        let cfg = SynthConfig::new(
            size(32, 32),
            1,
            vec![object(bb(4., 4., 20., 20.), Motion::Linear { vx: 0., vy: 0. })],
            1.0,
            3,
        );
        let clip = generate_clip(&cfg).unwrap();
        assert_eq!(clip.frames.len(), 1);
        assert_eq!(clip.gt, vec![vec![ObjectBox { object: 0, class: 1, bbox: bb(4., 4., 20., 20.) }]]);
        assert_eq!(clip.seeds.len(), 1);
        assert_eq!(clip.seeds[0].seed.bbox, bb(4., 4., 20., 20.));
    }

    #[test]
    fn empty_scene() {
        let cfg = SynthConfig::new(size(16, 16), 5, vec![], 0.5, 3);
        let clip = generate_clip(&cfg).unwrap();
        assert_eq!(clip.frames.len(), 5);
        assert!(clip.gt.iter().all(Vec::is_empty));
        assert!(clip.seeds.is_empty());
    }

    #[test]
    fn validation() {
        let ok = object(bb(4., 4., 20., 20.), Motion::Linear { vx: 0., vy: 0. });
        assert_eq!(generate_clip(&SynthConfig::new(size(32, 32), 0, vec![], 1.0, 0)).unwrap_err(), SynthError::NoFrames);
        assert!(matches!(
            generate_clip(&SynthConfig::new(size(32, 32), 1, vec![], 0.0, 0)),
            Err(SynthError::KeepFraction(_))
        ));
        let outside = object(bb(30., 30., 40., 40.), Motion::Linear { vx: 0., vy: 0. });
        assert!(matches!(
            generate_clip(&SynthConfig::new(size(32, 32), 1, vec![ok, outside], 1.0, 0)),
            Err(SynthError::InitialBox(1))
        ));
        let bad_period = object(bb(4., 4., 8., 8.), Motion::Sinusoidal { ax: 1., ay: 1., period: 0. });
        assert!(matches!(
            generate_clip(&SynthConfig::new(size(32, 32), 1, vec![bad_period], 1.0, 0)),
            Err(SynthError::Period(0))
        ));
    }

    #[test]
    fn consecutive_iou_examples() {
        let still = object(bb(10., 10., 30., 30.), Motion::Linear { vx: 0., vy: 0. });
        let sliding = object(bb(0., 0., 100., 100.), Motion::Linear { vx: 10., vy: 0. });
        let jumping = object(bb(0., 0., 10., 10.), Motion::Linear { vx: 12., vy: 0. });
        let cfg = SynthConfig::new(size(400, 200), 5, vec![still, sliding, jumping], 1.0, 0);
        assert_eq!(true_consecutive_iou(&cfg, 0).unwrap(), vec![1.0; 4]);
        let expected = (90.0 * 100.0) / (110.0 * 100.0);
        assert!(expected > 0.8181 && expected < 0.8182);
        for v in true_consecutive_iou(&cfg, 1).unwrap() {
            assert!((v - expected).abs() < 1e-12);
        }
        assert_eq!(true_consecutive_iou(&cfg, 2).unwrap(), vec![0.0; 4]);
        assert!(matches!(true_consecutive_iou(&cfg, 3), Err(SynthError::UnknownObject(3))));
    }

    #[test]
    fn leaving_object_is_absent() {
        let runner = object(bb(0., 0., 10., 10.), Motion::Linear { vx: 14., vy: 0. });
        let cfg = SynthConfig::new(size(32, 32), 4, vec![runner], 1.0, 0);
        let clip = generate_clip(&cfg).unwrap();
        assert_eq!(clip.gt[0].len(), 1);
        // Partially visible boxes are clipped, invisible ones dropped.
        assert_eq!(clip.gt[1][0].bbox, bb(14., 0., 24., 10.));
        assert_eq!(clip.gt[2][0].bbox, bb(28., 0., 32., 10.));
        assert!(clip.gt[3].is_empty());
        assert!(clip.seeds.iter().all(|s| s.seed.frame < 3));
    }

    #[test]
    fn frames_are_quantized_and_deterministic() {
        let cfg = RandomScene::new(size(48, 40), 6, 2, 0.3, 99).config();
        let a = generate_clip(&cfg).unwrap();
        let b = generate_clip(&cfg).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.gt, b.gt);
        assert_eq!(a.seeds, b.seeds);
        for f in &a.frames {
            assert!(f.pixels().iter().all(|p| ((p * 255.0).round() / 255.0) == *p));
        }
    }

    #[test]
    fn random_scene_stays_inside() {
        for seed in 0..20 {
            let scene = RandomScene::new(size(64, 48), 30, 3, 0.1, seed);
            let cfg = scene.config();
            cfg.validate().unwrap();
            for id in 0..3 {
                for k in 0..30 {
                    let t = cfg.true_box(id, k).unwrap();
                    assert_eq!(cfg.gt_box(id, k).unwrap(), Some(t), "seed {seed} object {id} frame {k}");
                }
            }
            let clip = generate_clip(&cfg).unwrap();
            for id in 0..3 {
                assert!(clip.seeds.iter().any(|s| s.object == id));
            }
        }
    }
}
