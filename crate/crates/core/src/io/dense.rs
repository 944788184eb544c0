use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_header, quantize4, read_json, write_json, DatasetError, Fixed4, FORMAT_VERSION};
use crate::densify::{DenseClip, DensifyParams, PseudoLabel, Source};
use crate::geometry::BBox;

pub const DENSE_FORMAT: &str = "densetrack-dense";
pub const DENSE_VERSION: u32 = FORMAT_VERSION;

/// Parameters that produced a dense dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHeader {
    pub params: DensifyParams,
    pub tracker: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseDataset {
    pub header: DenseHeader,
    pub clips: Vec<DenseClip>,
}

impl DenseDataset {
    /// The dataset as it reads back after being written: every real number
    /// rounded to four decimals, labels re-sorted.
    pub fn quantized(&self) -> DenseDataset {
        let q = |b: &BBox| {
            BBox::new(quantize4(b.x0()), quantize4(b.y0()), quantize4(b.x1()), quantize4(b.y1()))
                .expect("rounding keeps boxes ordered")
        };
        let p = &self.header.params;
        DenseDataset {
            header: DenseHeader {
                params: DensifyParams::new(quantize4(p.rho1()), quantize4(p.rho2()), quantize4(p.tau_dup()))
                    .expect("rounding keeps thresholds in range"),
                tracker: self.header.tracker.clone(),
            },
            clips: self
                .clips
                .iter()
                .map(|c| {
                    let labels = c
                        .labels()
                        .map(|l| PseudoLabel {
                            bbox: q(&l.bbox),
                            score: quantize4(l.score),
                            ..*l
                        })
                        .collect();
                    DenseClip::from_labels(c.clip_id.clone(), c.frames.len(), labels)
                })
                .collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct FileParams {
    rho1: Fixed4,
    rho2: Fixed4,
    tau_dup: Fixed4,
    tracker: String,
}

#[derive(Serialize, Deserialize)]
struct FileLabel {
    frame: usize,
    class: u32,
    bbox: [Fixed4; 4],
    score: Fixed4,
    source: Source,
    seed: usize,
}

#[derive(Serialize, Deserialize)]
struct FileClip {
    clip_id: String,
    num_frames: usize,
    labels: Vec<FileLabel>,
}

#[derive(Serialize, Deserialize)]
struct FileDense {
    format: String,
    version: u32,
    params: FileParams,
    clips: Vec<FileClip>,
}

pub fn write_dense(path: &Path, dataset: &DenseDataset) -> Result<(), DatasetError> {
    let d = dataset.quantized();
    let p = &d.header.params;
    let file = FileDense {
        format: DENSE_FORMAT.to_string(),
        version: DENSE_VERSION,
        params: FileParams {
            rho1: Fixed4(p.rho1()),
            rho2: Fixed4(p.rho2()),
            tau_dup: Fixed4(p.tau_dup()),
            tracker: d.header.tracker.clone(),
        },
        clips: d
            .clips
            .iter()
            .map(|c| FileClip {
                clip_id: c.clip_id.clone(),
                num_frames: c.frames.len(),
                labels: c
                    .labels()
                    .map(|l| FileLabel {
                        frame: l.frame,
                        class: l.class,
                        bbox: l.bbox.to_array().map(Fixed4),
                        score: Fixed4(l.score),
                        source: l.source,
                        seed: l.seed,
                    })
                    .collect(),
            })
            .collect(),
    };
    write_json(path, &file)
}

pub fn read_dense(path: &Path) -> Result<DenseDataset, DatasetError> {
    // Check the header before the body so a newer version is reported as such.
    #[derive(Deserialize)]
    struct Head {
        format: String,
        version: u32,
    }
    let head: Head = read_json(path)?;
    check_header(path, DENSE_FORMAT, &head.format, head.version)?;
    let file: FileDense = read_json(path)?;

    let invalid = |message: String| DatasetError::Invalid {
        path: path.to_path_buf(),
        message,
    };
    let params = DensifyParams::new(file.params.rho1.0, file.params.rho2.0, file.params.tau_dup.0)
        .map_err(|e| invalid(e.to_string()))?;
    let mut clips = Vec::with_capacity(file.clips.len());
    for c in file.clips {
        let mut labels = Vec::with_capacity(c.labels.len());
        for l in c.labels {
            if l.frame >= c.num_frames {
                return Err(invalid(format!(
                    "clip {}: label frame {} beyond {} frames",
                    c.clip_id, l.frame, c.num_frames
                )));
            }
            let bbox = BBox::try_from(l.bbox.map(|v| v.0)).map_err(|e| invalid(e.to_string()))?;
            labels.push(PseudoLabel {
                frame: l.frame,
                class: l.class,
                bbox,
                score: l.score.0,
                seed: l.seed,
                source: l.source,
            });
        }
        clips.push(DenseClip::from_labels(c.clip_id, c.num_frames, labels));
    }
    Ok(DenseDataset {
        header: DenseHeader {
            params,
            tracker: file.params.tracker,
        },
        clips,
    })
}
