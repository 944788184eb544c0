use std::io::BufReader;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};

use super::{write_atomic, DatasetError};
use crate::geometry::FrameSize;
use crate::tracker::Frame;

/// File name of frame `index` inside a clip directory.
pub fn frame_file_name(index: usize) -> String {
    format!("{index:05}.pgm")
}

pub fn read_pgm(path: &Path) -> Result<Frame, DatasetError> {
    let image_err = |message: String| DatasetError::Image {
        path: path.to_path_buf(),
        message,
    };
    let file = std::fs::File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let img = image::load(BufReader::new(file), ImageFormat::Pnm)
        .map_err(|e| image_err(e.to_string()))?
        .into_luma8();
    let size = FrameSize::new(img.width(), img.height()).map_err(|e| image_err(e.to_string()))?;
    let pixels = img.into_raw().into_iter().map(|b| f64::from(b) / 255.0).collect();
    Frame::new(size, pixels).map_err(|e| image_err(e.to_string()))
}

/// Writes a binary PGM (P5, maxval 255). Intensities are rounded to the
/// nearest of the 256 levels.
pub fn write_pgm(path: &Path, frame: &Frame) -> Result<(), DatasetError> {
    let bytes: Vec<u8> = frame
        .pixels()
        .iter()
        .map(|p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    write_atomic(path, |w| {
        PnmEncoder::new(w)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(&bytes, frame.size().width(), frame.size().height(), ExtendedColorType::L8)
            .map_err(std::io::Error::other)
    })
}

/// Loads every `<number>.pgm` in `dir`, ordered by number. All frames must
/// share one size.
pub fn load_frames(dir: &Path) -> Result<Vec<Frame>, DatasetError> {
    let entries = std::fs::read_dir(dir).map_err(|e| DatasetError::io(dir, e))?;
    let mut files: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| DatasetError::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
            continue;
        }
        let index = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| DatasetError::Invalid {
                path: path.clone(),
                message: "frame file name is not a number".to_string(),
            })?;
        files.push((index, path));
    }
    if files.is_empty() {
        return Err(DatasetError::NoFrames(dir.to_path_buf()));
    }
    files.sort();
    if let Some(w) = files.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(DatasetError::Invalid {
            path: w[1].1.clone(),
            message: format!("duplicate frame number {}", w[1].0),
        });
    }

    let mut frames: Vec<Frame> = Vec::with_capacity(files.len());
    for (_, path) in files {
        let frame = read_pgm(&path)?;
        if let Some(first) = frames.first() {
            if first.size() != frame.size() {
                return Err(DatasetError::MixedDimensions {
                    path,
                    expected: first.size(),
                    got: frame.size(),
                });
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}
