use std::collections::BTreeMap;

use densetrack_core::geometry::FrameSize;
use densetrack_core::io::{
    frame_file_name, image_id, write_ground_truth, write_pgm, write_sparse, GroundTruthFile, GtEntry, SparseClip,
};
use densetrack_core::synth::{generate_clip, RandomScene, SynthClip};
use rayon::prelude::*;

use crate::args::SynthArgs;
use crate::error::{Classify, Outcome};

pub fn clip_id(index: usize) -> String {
    format!("clip{index:03}")
}

fn scene(a: &SynthArgs, size: FrameSize, index: usize) -> RandomScene {
    let mut s = RandomScene::new(size, a.frames as usize, a.objects, a.keep, a.seed.wrapping_add(index as u64));
    s.num_classes = a.classes;
    s.max_speed = a.max_speed;
    s
}

fn params(a: &SynthArgs) -> BTreeMap<String, String> {
    [
        ("clips", a.clips.to_string()),
        ("frames", a.frames.to_string()),
        ("objects", a.objects.to_string()),
        ("classes", a.classes.to_string()),
        ("keep", a.keep.to_string()),
        ("seed", a.seed.to_string()),
        ("width", a.width.to_string()),
        ("height", a.height.to_string()),
        ("max_speed", a.max_speed.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

pub fn run(a: &SynthArgs) -> Outcome {
    let size = FrameSize::new(a.width, a.height).usage()?;
    let frames_root = a.out.join("frames");
    std::fs::create_dir_all(&frames_root).internal()?;

    let clips: Vec<(String, SynthClip)> = (0..a.clips)
        .into_par_iter()
        .map(|i| {
            let id = clip_id(i);
            let clip = generate_clip(&scene(a, size, i).config()).usage()?;
            let dir = frames_root.join(&id);
            std::fs::create_dir_all(&dir).internal()?;
            clip.frames
                .par_iter()
                .enumerate()
                .try_for_each(|(k, f)| write_pgm(&dir.join(frame_file_name(k)), f))
                .internal()?;
            Ok((id, clip))
        })
        .collect::<Outcome<_>>()?;

    let params = params(a);
    let mut gt = GroundTruthFile {
        params: params.clone(),
        images: BTreeMap::new(),
    };
    let mut sparse = Vec::with_capacity(clips.len());
    for (id, clip) in &clips {
        for (k, boxes) in clip.gt.iter().enumerate() {
            gt.images.insert(
                image_id(id, k),
                boxes
                    .iter()
                    .map(|b| GtEntry {
                        class: b.class,
                        bbox: b.bbox,
                        object: Some(b.object),
                    })
                    .collect(),
            );
        }
        sparse.push(SparseClip {
            clip_id: id.clone(),
            seeds: clip.seeds.iter().map(|s| s.seed).collect(),
        });
    }
    write_ground_truth(&a.out.join("gt.json"), &gt).internal()?;
    let comment: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    write_sparse(&a.out.join("seeds.csv"), &sparse, &comment).internal()?;

    let seeds: usize = sparse.iter().map(|c| c.seeds.len()).sum();
    log::info!(
        "wrote {} clips, {} ground-truth boxes, {seeds} seeds to {}",
        clips.len(),
        gt.images.values().map(Vec::len).sum::<usize>(),
        a.out.display()
    );
    Ok(())
}
