//! File formats.
//!
//! * sparse seeds: CSV `clip_id,frame_index,class_id,x0,y0,x1,y1`, `#` comments
//! * dense pseudo labels, detections, ground truth, eval reports: JSON with a
//!   `format` tag and integer `version`
//! * frames: binary PGM (P5, maxval 255), one file per frame named by index
//!
//! Real numbers are written with exactly four decimals, and every collection
//! is written in a fixed order, so identical inputs give identical bytes.

mod dense;
mod detections;
mod fixed;
mod frames;
mod sparse;

pub use dense::{read_dense, write_dense, DenseDataset, DenseHeader, DENSE_FORMAT, DENSE_VERSION};
pub use detections::{
    dense_to_detections, read_detections, read_ground_truth, write_detections, write_eval_report, write_ground_truth,
    DetectionFile, GroundTruthFile, GtEntry, Params, DETECTIONS_FORMAT, EVAL_FORMAT, GT_FORMAT,
};
pub use fixed::{quantize4, Fixed4};
pub use frames::{frame_file_name, load_frames, read_pgm, write_pgm};
pub use sparse::{read_sparse, write_sparse, SparseClip, SPARSE_HEADER};

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::{FrameSize, GeometryError};

/// Version written into, and the newest accepted from, every JSON format.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}:{line}: invalid box: {source}")]
    InvalidBox {
        path: PathBuf,
        line: u64,
        #[source]
        source: GeometryError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: expected a {expected} file, found {found:?}")]
    Format {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },
    #[error("{path}: format version {found} is newer than supported version {supported}")]
    Version { path: PathBuf, found: u32, supported: u32 },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("{path}: frame is {got:?}, earlier frames are {expected:?}")]
    MixedDimensions {
        path: PathBuf,
        expected: FrameSize,
        got: FrameSize,
    },
    #[error("{0}: no frames found")]
    NoFrames(PathBuf),
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn json(path: &Path, source: serde_json::Error) -> Self {
        DatasetError::Json {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Writes through a temporary file in the target directory, then renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(
    path: &Path,
    write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), DatasetError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| DatasetError::io(path, e))?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        write(&mut buf).map_err(|e| DatasetError::io(path, e))?;
        buf.flush().map_err(|e| DatasetError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| DatasetError::io(path, e.error))?;
    Ok(())
}

/// Image id of frame `frame` of clip `clip_id`, as used by detection and
/// ground-truth files.
pub fn image_id(clip_id: &str, frame: usize) -> String {
    format!("{clip_id}/{frame:05}")
}

/// Inverse of [`image_id`].
pub fn parse_image_id(id: &str) -> Option<(&str, usize)> {
    let (clip, frame) = id.rsplit_once('/')?;
    Some((clip, frame.parse().ok()?))
}

/// Checks the `format` and `version` fields of a JSON document.
pub(crate) fn check_header(path: &Path, expected: &'static str, format: &str, version: u32) -> Result<(), DatasetError> {
    if format != expected {
        return Err(DatasetError::Format {
            path: path.to_path_buf(),
            expected,
            found: format.to_string(),
        });
    }
    if version > FORMAT_VERSION {
        return Err(DatasetError::Version {
            path: path.to_path_buf(),
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    Ok(())
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::json(path, e))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}
