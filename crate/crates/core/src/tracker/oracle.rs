use std::collections::BTreeMap;
use std::sync::Arc;

use super::{Frame, TrackError, TrackResult, Tracker, TrackerFactory};
use crate::geometry::BBox;

/// Ground-truth boxes of one object, indexed by frame; `None` where absent.
pub type OracleTrack = Vec<Option<BBox>>;

/// Replays known trajectories. On init it locks onto the track whose box on
/// the seed frame overlaps the seed most (ties go to the lower track index),
/// then reports that track's box on every update with score 1, unless a
/// scripted score override exists for the frame. Frames where the object is
/// absent repeat the last box with score 0.
#[derive(Debug, Clone)]
pub struct OracleTracker {
    tracks: Arc<Vec<OracleTrack>>,
    score_overrides: Arc<BTreeMap<usize, f64>>,
    active: Option<(usize, BBox)>,
}

impl OracleTracker {
    /// Index of the track this tracker locked onto.
    pub fn track_id(&self) -> Option<usize> {
        self.active.map(|(id, _)| id)
    }
}

impl Tracker for OracleTracker {
    fn init(&mut self, index: usize, _frame: &Frame, seed: BBox) -> Result<(), TrackError> {
        let best = self
            .tracks
            .iter()
            .enumerate()
            .filter_map(|(id, t)| t.get(index).copied().flatten().map(|b| (id, b.iou(&seed))))
            .filter(|(_, overlap)| *overlap > 0.0)
            .fold(None::<(usize, f64)>, |acc, cand| match acc {
                Some(cur) if cur.1 >= cand.1 => Some(cur),
                _ => Some(cand),
            });
        match best {
            Some((id, _)) => {
                self.active = Some((id, seed));
                Ok(())
            }
            None => Err(TrackError::NoMatchingTrack { frame: index, seed }),
        }
    }

    fn update(&mut self, index: usize, _frame: &Frame) -> Result<TrackResult, TrackError> {
        let (id, last) = self.active.ok_or(TrackError::NotInitialized)?;
        match self.tracks[id].get(index).copied().flatten() {
            Some(bbox) => {
                self.active = Some((id, bbox));
                let score = self.score_overrides.get(&index).copied().unwrap_or(1.0);
                Ok(TrackResult { bbox, score })
            }
            None => Ok(TrackResult {
                bbox: last,
                score: 0.0,
            }),
        }
    }
}

/// Hands out [`OracleTracker`]s sharing one set of ground-truth tracks.
#[derive(Debug, Clone, Default)]
pub struct OracleTrackerFactory {
    tracks: Arc<Vec<OracleTrack>>,
    score_overrides: Arc<BTreeMap<usize, f64>>,
}

impl OracleTrackerFactory {
    pub fn new(tracks: Vec<OracleTrack>) -> Self {
        Self {
            tracks: Arc::new(tracks),
            score_overrides: Arc::default(),
        }
    }

    /// Reports `score` instead of 1 on the given frame, for every track.
    pub fn with_score(mut self, frame: usize, score: f64) -> Self {
        Arc::make_mut(&mut self.score_overrides).insert(frame, score);
        self
    }

    /// Reports `score` on every frame index in `frames`.
    pub fn with_scores(mut self, frames: impl IntoIterator<Item = usize>, score: f64) -> Self {
        let map = Arc::make_mut(&mut self.score_overrides);
        for f in frames {
            map.insert(f, score);
        }
        self
    }

    pub fn tracks(&self) -> &[OracleTrack] {
        &self.tracks
    }

    pub fn tracker(&self) -> OracleTracker {
        OracleTracker {
            tracks: Arc::clone(&self.tracks),
            score_overrides: Arc::clone(&self.score_overrides),
            active: None,
        }
    }
}

impl TrackerFactory for OracleTrackerFactory {
    fn create(&self) -> Box<dyn Tracker + Send> {
        Box::new(self.tracker())
    }

    fn describe(&self) -> String {
        "oracle".to_string()
    }
}
