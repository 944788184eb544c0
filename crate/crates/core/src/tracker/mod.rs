//! Single-object trackers.
//!
//! A [`Tracker`] is initialised on one frame with a seed box and then fed the
//! following frames one by one (in either temporal direction). Each update
//! yields a box and a confidence in `[0, 1]`. Trackers carry mutable state and
//! are used from one thread; a [`TrackerFactory`] hands out fresh instances so
//! independent tracks can run in parallel.

mod ncc;
mod oracle;

pub use ncc::{NccConfig, NccTracker, NccTrackerFactory, SCALES};
pub use oracle::{OracleTrack, OracleTracker, OracleTrackerFactory};

use thiserror::Error;

use crate::geometry::{BBox, FrameSize, GeometryError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackError {
    #[error("frame buffer holds {got} pixels, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("pixel intensity {0} outside [0, 1]")]
    Intensity(f64),
    #[error("seed box {0:?} has no area inside the frame")]
    EmptySeed(BBox),
    #[error("update called before init")]
    NotInitialized,
    #[error("frame size {got:?} differs from the initial frame {expected:?}")]
    FrameMismatch { expected: FrameSize, got: FrameSize },
    #[error("no ground-truth track matches seed {seed:?} on frame {frame}")]
    NoMatchingTrack { frame: usize, seed: BBox },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Grayscale image with intensities in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    size: FrameSize,
    pixels: Vec<f64>,
}

impl Frame {
    pub fn new(size: FrameSize, pixels: Vec<f64>) -> Result<Self, TrackError> {
        let expected = size.width() as usize * size.height() as usize;
        if pixels.len() != expected {
            return Err(TrackError::BufferSize {
                expected,
                got: pixels.len(),
            });
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(TrackError::Intensity(*p));
        }
        Ok(Self { size, pixels })
    }

    /// Uniformly filled frame.
    pub fn filled(size: FrameSize, value: f64) -> Result<Self, TrackError> {
        Self::new(size, vec![value; size.width() as usize * size.height() as usize])
    }

    pub fn size(&self) -> FrameSize {
        self.size
    }

    pub fn width(&self) -> usize {
        self.size.width() as usize
    }

    pub fn height(&self) -> usize {
        self.size.height() as usize
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width() + x]
    }

    /// Applies `f` to every pixel; the result must stay within `[0, 1]`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self, TrackError> {
        Self::new(self.size, self.pixels.iter().map(|&p| f(p)).collect())
    }
}

/// Tracker output for one frame. The box may extend past the frame edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackResult {
    pub bbox: BBox,
    pub score: f64,
}

pub trait Tracker {
    /// Starts tracking `seed` on the frame with index `index`.
    fn init(&mut self, index: usize, frame: &Frame, seed: BBox) -> Result<(), TrackError>;

    /// Locates the object on the next frame in the tracking direction.
    fn update(&mut self, index: usize, frame: &Frame) -> Result<TrackResult, TrackError>;
}

impl<T: Tracker + ?Sized> Tracker for Box<T> {
    fn init(&mut self, index: usize, frame: &Frame, seed: BBox) -> Result<(), TrackError> {
        (**self).init(index, frame, seed)
    }

    fn update(&mut self, index: usize, frame: &Frame) -> Result<TrackResult, TrackError> {
        (**self).update(index, frame)
    }
}

/// Produces fresh, uninitialised trackers.
pub trait TrackerFactory: Sync {
    fn create(&self) -> Box<dyn Tracker + Send>;

    /// Short description recorded in output headers.
    fn describe(&self) -> String;
}
