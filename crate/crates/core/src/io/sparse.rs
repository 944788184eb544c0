use std::collections::BTreeMap;
use std::path::Path;

use super::{write_atomic, DatasetError};
use crate::densify::Seed;
use crate::geometry::BBox;

pub const SPARSE_HEADER: &str = "clip_id,frame_index,class_id,x0,y0,x1,y1";

/// Seeds of one clip, sorted by frame (file order within a frame).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseClip {
    pub clip_id: String,
    pub seeds: Vec<Seed>,
}

/// Reads sparse annotations, grouped by clip id in ascending order.
pub fn read_sparse(path: &Path) -> Result<Vec<SparseClip>, DatasetError> {
    let file = std::fs::File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);

    let parse_err = |line: u64, message: String| DatasetError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| parse_err(e.position().map_or(1, |p| p.line()), e.to_string()))?
        .clone();
    let expected: Vec<&str> = SPARSE_HEADER.split(',').collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(parse_err(1, format!("expected header {SPARSE_HEADER:?}")));
    }

    let mut clips: BTreeMap<String, Vec<Seed>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or_default();
        let num = |i: usize| -> Result<f64, DatasetError> {
            field(i)
                .parse::<f64>()
                .map_err(|e| parse_err(line, format!("column {}: {e}", expected[i])))
        };
        let frame: usize = field(1)
            .parse()
            .map_err(|e| parse_err(line, format!("frame_index: {e}")))?;
        let class: u32 = field(2)
            .parse()
            .map_err(|e| parse_err(line, format!("class_id: {e}")))?;
        if class == 0 {
            return Err(parse_err(line, "class_id must be >= 1".to_string()));
        }
        let bbox = BBox::new(num(3)?, num(4)?, num(5)?, num(6)?).map_err(|source| DatasetError::InvalidBox {
            path: path.to_path_buf(),
            line,
            source,
        })?;
        clips
            .entry(field(0).to_string())
            .or_default()
            .push(Seed { frame, class, bbox });
    }
    Ok(clips
        .into_iter()
        .map(|(clip_id, mut seeds)| {
            seeds.sort_by_key(|s| s.frame);
            SparseClip { clip_id, seeds }
        })
        .collect())
}

/// Writes sparse annotations; `comment` lines are emitted first, prefixed `# `.
pub fn write_sparse(path: &Path, clips: &[SparseClip], comment: &[String]) -> Result<(), DatasetError> {
    write_atomic(path, |w| {
        for c in comment {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "{SPARSE_HEADER}")?;
        for clip in clips {
            for s in &clip.seeds {
                writeln!(
                    w,
                    "{},{},{},{:.4},{:.4},{:.4},{:.4}",
                    clip.clip_id,
                    s.frame,
                    s.class,
                    s.bbox.x0(),
                    s.bbox.y0(),
                    s.bbox.x1(),
                    s.bbox.y1()
                )?;
            }
        }
        Ok(())
    })
}
