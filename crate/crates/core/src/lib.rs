//! Turns sparsely annotated frame sequences into dense detection datasets by
//! bidirectional single-object tracking, plus the supporting pieces: anchor-free
//! regression targets and loss, joint-NMS ensembling, multi-threshold AP
//! evaluation and a synthetic clip generator.

pub mod densify;
pub mod ensemble;
pub mod eval;
pub mod fcos;
pub mod geometry;
pub mod io;
pub mod synth;
pub mod tracker;

pub use densify::{
    backward_track, densify_clip, forward_track, merge_pseudo_labels, ActionClip, DenseClip, DensifyParams,
    PseudoLabel, Seed, Source,
};
pub use ensemble::{joint_nms, nms, Detection, EnsembleParams};
pub use eval::{average_precision, evaluate, DetectionSet, EvalReport, GroundTruthSet};
pub use geometry::{iou, BBox, FrameSize};
pub use tracker::{Frame, TrackResult, Tracker, TrackerFactory};
