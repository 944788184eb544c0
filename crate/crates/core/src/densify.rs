//! Sparse-to-dense annotation by bidirectional single-object tracking.
//!
//! Every seed box initialises a fresh tracker on its own frame. The tracker is
//! then stepped frame by frame away from the seed, forward and backward in
//! time. A step is accepted only while the tracker confidence stays at or
//! above `rho1` and the new box overlaps the previously accepted box (or the
//! seed) with IoU at or above `rho2`; the first failing step ends that
//! direction without emitting anything for it. Accepted boxes from all seeds
//! are merged with the original seeds into one label set per frame.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, BBox, FrameSize};
use crate::tracker::{Frame, TrackError, TrackerFactory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensifyError {
    #[error("threshold {name} = {value} is outside [0, 1]")]
    Threshold { name: &'static str, value: f64 },
    #[error("clip {0:?} has no frames")]
    NoFrames(String),
    #[error("frame {index} is {got:?}, clip frames are {expected:?}")]
    FrameSize {
        index: usize,
        expected: FrameSize,
        got: FrameSize,
    },
    #[error("seed {seed} refers to frame {frame}, clip has {len} frames")]
    SeedFrame { seed: usize, frame: usize, len: usize },
    #[error("seed {seed} box {bbox:?} has zero area")]
    SeedArea { seed: usize, bbox: BBox },
    #[error("seed {seed} has class 0; object classes start at 1")]
    SeedClass { seed: usize },
    #[error("no seed with id {0}")]
    UnknownSeed(usize),
    #[error("tracker failed for seed {seed}: {source}")]
    Tracker {
        seed: usize,
        #[source]
        source: TrackError,
    },
}

/// Acceptance thresholds for tracked boxes and the duplicate-merge threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensifyParams {
    rho1: f64,
    rho2: f64,
    tau_dup: f64,
}

impl DensifyParams {
    pub const DEFAULT_RHO1: f64 = 0.8;
    pub const DEFAULT_RHO2: f64 = 0.4;
    pub const DEFAULT_TAU_DUP: f64 = 0.5;

    pub fn new(rho1: f64, rho2: f64, tau_dup: f64) -> Result<Self, DensifyError> {
        for (name, value) in [("rho1", rho1), ("rho2", rho2), ("tau_dup", tau_dup)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(DensifyError::Threshold { name, value });
            }
        }
        Ok(Self { rho1, rho2, tau_dup })
    }

    /// Minimum tracker score for a step to be accepted.
    pub fn rho1(&self) -> f64 {
        self.rho1
    }

    /// Minimum IoU between consecutive accepted boxes.
    pub fn rho2(&self) -> f64 {
        self.rho2
    }

    /// IoU at which two same-class labels on a frame count as duplicates.
    pub fn tau_dup(&self) -> f64 {
        self.tau_dup
    }
}

impl Default for DensifyParams {
    fn default() -> Self {
        Self {
            rho1: Self::DEFAULT_RHO1,
            rho2: Self::DEFAULT_RHO2,
            tau_dup: Self::DEFAULT_TAU_DUP,
        }
    }
}

/// A sparse human annotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub frame: usize,
    pub class: u32,
    pub bbox: BBox,
}

/// A frame sequence with its sparse seed annotations. Seed ids are positions
/// in [`ActionClip::seeds`].
#[derive(Debug, Clone)]
pub struct ActionClip {
    id: String,
    frames: Vec<Frame>,
    seeds: Vec<Seed>,
}

impl ActionClip {
    pub fn new(id: impl Into<String>, frames: Vec<Frame>, seeds: Vec<Seed>) -> Result<Self, DensifyError> {
        let id = id.into();
        let first = frames.first().ok_or_else(|| DensifyError::NoFrames(id.clone()))?.size();
        for (index, f) in frames.iter().enumerate() {
            if f.size() != first {
                return Err(DensifyError::FrameSize {
                    index,
                    expected: first,
                    got: f.size(),
                });
            }
        }
        for (i, s) in seeds.iter().enumerate() {
            if s.frame >= frames.len() {
                return Err(DensifyError::SeedFrame {
                    seed: i,
                    frame: s.frame,
                    len: frames.len(),
                });
            }
            if s.bbox.area() <= 0.0 {
                return Err(DensifyError::SeedArea { seed: i, bbox: s.bbox });
            }
            if s.class == 0 {
                return Err(DensifyError::SeedClass { seed: i });
            }
        }
        Ok(Self { id, frames, seeds })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn seeds(&self) -> &[Seed] {
        &self.seeds
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_size(&self) -> FrameSize {
        self.frames[0].size()
    }

    /// The same clip played backwards; seed `s` moves to frame `N - 1 - s.frame`
    /// and keeps its id.
    pub fn reversed(&self) -> ActionClip {
        let n = self.frames.len();
        ActionClip {
            id: self.id.clone(),
            frames: self.frames.iter().rev().cloned().collect(),
            seeds: self
                .seeds
                .iter()
                .map(|s| Seed {
                    frame: n - 1 - s.frame,
                    ..*s
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// Where a label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Original,
    Forward,
    Backward,
}

impl From<Direction> for Source {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Forward => Source::Forward,
            Direction::Backward => Source::Backward,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Original => "original",
            Source::Forward => "forward",
            Source::Backward => "backward",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoLabel {
    pub frame: usize,
    pub class: u32,
    pub bbox: BBox,
    pub score: f64,
    pub seed: usize,
    pub source: Source,
}

impl PseudoLabel {
    pub fn original(seed_id: usize, seed: &Seed) -> Self {
        Self {
            frame: seed.frame,
            class: seed.class,
            bbox: seed.bbox,
            score: 1.0,
            seed: seed_id,
            source: Source::Original,
        }
    }

    /// Total order used for output: frame, class, descending score, seed id,
    /// then source and coordinates so that no two distinct labels compare equal.
    pub fn output_order(&self, other: &Self) -> Ordering {
        self.frame
            .cmp(&other.frame)
            .then(self.class.cmp(&other.class))
            .then(other.score.total_cmp(&self.score))
            .then(self.seed.cmp(&other.seed))
            .then(self.source.cmp(&other.source))
            .then_with(|| cmp_coords(&self.bbox, &other.bbox))
    }

    /// Merge priority: originals first, then higher score, then lower seed id.
    fn merge_priority(&self, other: &Self) -> Ordering {
        let orig = |l: &Self| l.source != Source::Original;
        orig(self)
            .cmp(&orig(other))
            .then(other.score.total_cmp(&self.score))
            .then(self.seed.cmp(&other.seed))
            .then(self.source.cmp(&other.source))
            .then_with(|| cmp_coords(&self.bbox, &other.bbox))
    }
}

fn cmp_coords(a: &BBox, b: &BBox) -> Ordering {
    a.to_array()
        .iter()
        .zip(b.to_array().iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn track(
    clip: &ActionClip,
    factory: &dyn TrackerFactory,
    seed_id: usize,
    direction: Direction,
    params: &DensifyParams,
) -> Result<Vec<PseudoLabel>, DensifyError> {
    let seed = *clip.seeds.get(seed_id).ok_or(DensifyError::UnknownSeed(seed_id))?;
    let n = clip.len();
    let frames: Box<dyn Iterator<Item = usize>> = match direction {
        Direction::Forward => Box::new(seed.frame + 1..n),
        Direction::Backward => Box::new((0..seed.frame).rev()),
    };
    let mut frames = frames.peekable();
    if frames.peek().is_none() {
        return Ok(Vec::new());
    }

    let wrap = |source| DensifyError::Tracker { seed: seed_id, source };
    let mut tracker = factory.create();
    tracker
        .init(seed.frame, &clip.frames[seed.frame], seed.bbox)
        .map_err(wrap)?;

    let frame_size = clip.frame_size();
    let mut prev = seed.bbox;
    let mut out = Vec::new();
    for k in frames {
        let result = tracker.update(k, &clip.frames[k]).map_err(wrap)?;
        let current = result.bbox.clip(frame_size);
        if result.score < params.rho1 || iou(&prev, &current) < params.rho2 || current.area() <= 0.0 {
            break;
        }
        out.push(PseudoLabel {
            frame: k,
            class: seed.class,
            bbox: current,
            score: result.score.clamp(0.0, 1.0),
            seed: seed_id,
            source: direction.into(),
        });
        prev = current;
    }
    Ok(out)
}

/// Tracks seed `seed_id` towards the end of the clip. Emitted frames are
/// `i+1, i+2, ...` with no gaps, where `i` is the seed frame.
pub fn forward_track(
    clip: &ActionClip,
    factory: &dyn TrackerFactory,
    seed_id: usize,
    params: &DensifyParams,
) -> Result<Vec<PseudoLabel>, DensifyError> {
    track(clip, factory, seed_id, Direction::Forward, params)
}

/// Tracks seed `seed_id` towards the start of the clip: frames `i-1, i-2, ...`.
pub fn backward_track(
    clip: &ActionClip,
    factory: &dyn TrackerFactory,
    seed_id: usize,
    params: &DensifyParams,
) -> Result<Vec<PseudoLabel>, DensifyError> {
    track(clip, factory, seed_id, Direction::Backward, params)
}

/// Resolves duplicates among labels of the same class on the same frame.
///
/// Labels are visited in priority order (originals, then higher score, then
/// lower seed id). Originals are always kept; any other label is dropped when
/// its IoU with an already kept same-class label on its frame is at least
/// `tau_dup`. The result is in [`PseudoLabel::output_order`].
pub fn merge_pseudo_labels(mut labels: Vec<PseudoLabel>, tau_dup: f64) -> Vec<PseudoLabel> {
    labels.sort_by(|a, b| {
        a.frame
            .cmp(&b.frame)
            .then(a.class.cmp(&b.class))
            .then_with(|| a.merge_priority(b))
    });
    let mut kept: Vec<PseudoLabel> = Vec::with_capacity(labels.len());
    let mut group_start = 0;
    for label in labels {
        if kept
            .get(group_start)
            .is_some_and(|g| (g.frame, g.class) != (label.frame, label.class))
        {
            group_start = kept.len();
        }
        let duplicate = label.source != Source::Original
            && kept[group_start..]
                .iter()
                .any(|k| iou(&k.bbox, &label.bbox) >= tau_dup);
        if !duplicate {
            kept.push(label);
        }
    }
    kept.sort_by(PseudoLabel::output_order);
    kept
}

/// Dense labels of one clip: `frames[k]` holds every label of frame `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseClip {
    pub clip_id: String,
    pub frames: Vec<Vec<PseudoLabel>>,
}

impl DenseClip {
    pub fn from_labels(clip_id: impl Into<String>, num_frames: usize, labels: Vec<PseudoLabel>) -> Self {
        let mut frames = vec![Vec::new(); num_frames];
        for l in labels {
            frames[l.frame].push(l);
        }
        for f in &mut frames {
            f.sort_by(PseudoLabel::output_order);
        }
        Self {
            clip_id: clip_id.into(),
            frames,
        }
    }

    pub fn labels(&self) -> impl Iterator<Item = &PseudoLabel> {
        self.frames.iter().flatten()
    }

    pub fn num_labels(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }
}

/// A seed direction that could not be tracked; its original label is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedWarning {
    pub seed: usize,
    pub direction: Direction,
    pub error: DensifyError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensifyOutcome {
    pub dense: DenseClip,
    pub warnings: Vec<SeedWarning>,
}

/// Runs forward and backward tracking from every seed, in parallel on the
/// current rayon pool, and merges the results with the original seeds.
/// The output does not depend on scheduling.
pub fn densify_clip(
    clip: &ActionClip,
    factory: &dyn TrackerFactory,
    params: &DensifyParams,
) -> DensifyOutcome {
    let jobs: Vec<(usize, Direction)> = (0..clip.seeds.len())
        .flat_map(|s| [(s, Direction::Forward), (s, Direction::Backward)])
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(seed, dir)| (seed, dir, track(clip, factory, seed, dir, params)))
        .collect();

    let mut labels: Vec<PseudoLabel> = clip
        .seeds
        .iter()
        .enumerate()
        .map(|(id, s)| PseudoLabel::original(id, s))
        .collect();
    let mut warnings = Vec::new();
    for (seed, direction, result) in results {
        match result {
            Ok(mut tracked) => labels.append(&mut tracked),
            Err(error) => {
                log::warn!("clip {}: skipping seed {seed} {direction:?}: {error}", clip.id);
                warnings.push(SeedWarning {
                    seed,
                    direction,
                    error,
                });
            }
        }
    }
    let merged = merge_pseudo_labels(labels, params.tau_dup);
    DensifyOutcome {
        dense: DenseClip::from_labels(clip.id.clone(), clip.len(), merged),
        warnings,
    }
}
