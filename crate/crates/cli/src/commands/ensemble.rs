use std::collections::BTreeSet;

use densetrack_core::ensemble::{joint_nms, Detection, EnsembleParams};
use densetrack_core::eval::DetectionSet;
use densetrack_core::io::{read_detections, write_detections, DetectionFile};
use rayon::prelude::*;

use super::{file_name, require_exists, require_parent};
use crate::args::EnsembleArgs;
use crate::error::{Classify, Outcome};

pub fn run(a: &EnsembleArgs) -> Outcome {
    let top_k = usize::try_from(a.top_k).usage()?;
    let params = EnsembleParams::new(a.nms_iou, top_k, a.score_floor).usage()?;
    for d in &a.dets {
        require_exists("--det", d)?;
    }
    require_parent("--out", &a.out)?;

    // Model id is the position of the file on the command line.
    let models: Vec<DetectionSet> = a
        .dets
        .iter()
        .enumerate()
        .map(|(m, path)| {
            let file = read_detections(path).data()?;
            let images = file
                .detections
                .images
                .into_iter()
                .map(|(img, dets)| {
                    let dets = dets.into_iter().map(|d| Detection { model: m as u32, ..d }).collect();
                    (img, dets)
                })
                .collect();
            Ok(DetectionSet { images })
        })
        .collect::<Outcome<_>>()?;

    let images: BTreeSet<&String> = models.iter().flat_map(|m| m.images.keys()).collect();
    let fused: Vec<(String, Vec<Detection>)> = images
        .into_par_iter()
        .map(|img| {
            let per_model: Vec<Vec<Detection>> = models
                .iter()
                .map(|m| m.images.get(img).cloned().unwrap_or_default())
                .collect();
            Ok((img.clone(), joint_nms(&per_model, &params).internal()?))
        })
        .collect::<Outcome<_>>()?;

    let mut out = DetectionFile::default();
    out.params.insert("nms_iou".into(), params.nms_iou().to_string());
    out.params.insert("top_k".into(), params.top_k().to_string());
    out.params.insert("score_floor".into(), params.score_floor().to_string());
    let inputs: Vec<String> = a.dets.iter().map(|p| file_name(p)).collect();
    out.params.insert("inputs".into(), inputs.join(","));
    let (before, mut after) = (models.iter().map(DetectionSet::count).sum::<usize>(), 0);
    for (img, dets) in fused {
        after += dets.len();
        out.detections.images.insert(img, dets);
    }
    write_detections(&a.out, &out).internal()?;
    log::info!("fused {} models: {before} -> {after} detections, wrote {}", models.len(), a.out.display());
    Ok(())
}
