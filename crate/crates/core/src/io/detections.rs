use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dense::DenseDataset;
use super::{check_header, image_id, parse_image_id, read_json, write_json, DatasetError, Fixed4, FORMAT_VERSION};
use crate::ensemble::Detection;
use crate::eval::{DetectionSet, EvalReport, GroundTruthSet};
use crate::geometry::BBox;
use crate::tracker::OracleTrack;

pub const DETECTIONS_FORMAT: &str = "densetrack-detections";
pub const GT_FORMAT: &str = "densetrack-gt";
pub const EVAL_FORMAT: &str = "densetrack-eval";

/// Producer parameters embedded in an output file.
pub type Params = BTreeMap<String, String>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionFile {
    pub params: Params,
    pub detections: DetectionSet,
}

#[derive(Serialize, Deserialize)]
struct FileDetection {
    image_id: String,
    class: u32,
    bbox: [Fixed4; 4],
    score: Fixed4,
    #[serde(default)]
    model: u32,
}

#[derive(Serialize, Deserialize)]
struct FileDetections {
    format: String,
    version: u32,
    #[serde(default)]
    params: Params,
    detections: Vec<FileDetection>,
}

#[derive(Deserialize)]
struct Head {
    format: String,
    version: u32,
}

fn invalid(path: &Path, message: String) -> DatasetError {
    DatasetError::Invalid {
        path: path.to_path_buf(),
        message,
    }
}

pub fn write_detections(path: &Path, file: &DetectionFile) -> Result<(), DatasetError> {
    let out = FileDetections {
        format: DETECTIONS_FORMAT.to_string(),
        version: FORMAT_VERSION,
        params: file.params.clone(),
        detections: file
            .detections
            .images
            .iter()
            .flat_map(|(img, dets)| {
                dets.iter().map(move |d| FileDetection {
                    image_id: img.clone(),
                    class: d.class,
                    bbox: d.bbox.to_array().map(Fixed4),
                    score: Fixed4(d.score),
                    model: d.model,
                })
            })
            .collect(),
    };
    write_json(path, &out)
}

/// Reads a detection file. A dense pseudo-label file is also accepted and
/// converted with [`dense_to_detections`].
pub fn read_detections(path: &Path) -> Result<DetectionFile, DatasetError> {
    let head: Head = read_json(path)?;
    if head.format == super::DENSE_FORMAT {
        let dense = super::read_dense(path)?;
        let mut params = Params::new();
        params.insert("source".into(), super::DENSE_FORMAT.into());
        params.insert("tracker".into(), dense.header.tracker.clone());
        return Ok(DetectionFile {
            params,
            detections: dense_to_detections(&dense),
        });
    }
    check_header(path, DETECTIONS_FORMAT, &head.format, head.version)?;
    let file: FileDetections = read_json(path)?;
    let mut detections = DetectionSet::default();
    for d in file.detections {
        let bbox = BBox::try_from(d.bbox.map(|v| v.0)).map_err(|e| invalid(path, e.to_string()))?;
        let det = Detection::new(bbox, d.class, d.score.0, d.model).map_err(|e| invalid(path, e.to_string()))?;
        detections.add(d.image_id, det);
    }
    Ok(DetectionFile {
        params: file.params,
        detections,
    })
}

/// Every pseudo label becomes a detection on image `clip/frame`.
pub fn dense_to_detections(dense: &DenseDataset) -> DetectionSet {
    let mut set = DetectionSet::default();
    for clip in &dense.clips {
        for l in clip.labels() {
            set.add(
                image_id(&clip.clip_id, l.frame),
                Detection {
                    bbox: l.bbox,
                    class: l.class,
                    score: l.score,
                    model: 0,
                },
            );
        }
    }
    set
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtEntry {
    pub class: u32,
    pub bbox: BBox,
    /// Object identity, when known (synthetic data).
    pub object: Option<usize>,
}

/// Ground truth per image. Images with no boxes are kept so they count as
/// evaluated images.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthFile {
    pub params: Params,
    pub images: BTreeMap<String, Vec<GtEntry>>,
}

impl GroundTruthFile {
    pub fn ground_truth_set(&self) -> GroundTruthSet {
        let mut set = GroundTruthSet::default();
        for (img, boxes) in &self.images {
            set.images
                .entry(img.clone())
                .or_default()
                .extend(boxes.iter().map(|b| crate::eval::GroundTruth { class: b.class, bbox: b.bbox }));
        }
        set
    }

    /// Per-object tracks of one clip, for the oracle tracker. Boxes without an
    /// object id are ignored.
    pub fn oracle_tracks(&self, clip_id: &str, num_frames: usize) -> Vec<OracleTrack> {
        let mut tracks: Vec<OracleTrack> = Vec::new();
        for (img, boxes) in &self.images {
            let Some((clip, frame)) = parse_image_id(img) else { continue };
            if clip != clip_id || frame >= num_frames {
                continue;
            }
            for b in boxes {
                if let Some(obj) = b.object {
                    if tracks.len() <= obj {
                        tracks.resize(obj + 1, vec![None; num_frames]);
                    }
                    tracks[obj][frame] = Some(b.bbox);
                }
            }
        }
        tracks
    }
}

#[derive(Serialize, Deserialize)]
struct FileGtBox {
    class: u32,
    bbox: [Fixed4; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    object: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct FileGtImage {
    image_id: String,
    boxes: Vec<FileGtBox>,
}

#[derive(Serialize, Deserialize)]
struct FileGt {
    format: String,
    version: u32,
    #[serde(default)]
    params: Params,
    images: Vec<FileGtImage>,
}

pub fn write_ground_truth(path: &Path, file: &GroundTruthFile) -> Result<(), DatasetError> {
    let out = FileGt {
        format: GT_FORMAT.to_string(),
        version: FORMAT_VERSION,
        params: file.params.clone(),
        images: file
            .images
            .iter()
            .map(|(img, boxes)| FileGtImage {
                image_id: img.clone(),
                boxes: boxes
                    .iter()
                    .map(|b| FileGtBox {
                        class: b.class,
                        bbox: b.bbox.to_array().map(Fixed4),
                        object: b.object,
                    })
                    .collect(),
            })
            .collect(),
    };
    write_json(path, &out)
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruthFile, DatasetError> {
    let head: Head = read_json(path)?;
    check_header(path, GT_FORMAT, &head.format, head.version)?;
    let file: FileGt = read_json(path)?;
    let mut images = BTreeMap::new();
    for img in file.images {
        let mut boxes = Vec::with_capacity(img.boxes.len());
        for b in img.boxes {
            if b.class == 0 {
                return Err(invalid(path, format!("{}: class must be >= 1", img.image_id)));
            }
            let bbox = BBox::try_from(b.bbox.map(|v| v.0)).map_err(|e| invalid(path, e.to_string()))?;
            boxes.push(GtEntry {
                class: b.class,
                bbox,
                object: b.object,
            });
        }
        images.insert(img.image_id, boxes);
    }
    Ok(GroundTruthFile {
        params: file.params,
        images,
    })
}

#[derive(Serialize)]
struct FileClassAp {
    class: u32,
    ap: Vec<Fixed4>,
}

#[derive(Serialize)]
struct FileEval<'a> {
    format: &'static str,
    version: u32,
    params: &'a Params,
    thresholds: Vec<Fixed4>,
    map: Vec<Option<Fixed4>>,
    per_class: Vec<FileClassAp>,
    counts: crate::eval::EvalCounts,
}

pub fn write_eval_report(path: &Path, report: &EvalReport, params: &Params) -> Result<(), DatasetError> {
    let out = FileEval {
        format: EVAL_FORMAT,
        version: FORMAT_VERSION,
        params,
        thresholds: report.thresholds.iter().copied().map(Fixed4).collect(),
        map: report.map.iter().map(|m| m.map(Fixed4)).collect(),
        per_class: report
            .per_class
            .iter()
            .map(|c| FileClassAp {
                class: c.class,
                ap: c.ap.iter().copied().map(Fixed4).collect(),
            })
            .collect(),
        counts: report.counts,
    };
    write_json(path, &out)
}
