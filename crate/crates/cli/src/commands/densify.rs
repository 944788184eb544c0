use densetrack_core::densify::{densify_clip, ActionClip, DenseClip, DensifyParams};
use densetrack_core::io::{load_frames, read_ground_truth, read_sparse, write_dense, DenseDataset, DenseHeader};
use densetrack_core::tracker::{NccConfig, NccTrackerFactory, OracleTrackerFactory, TrackerFactory};
use rayon::prelude::*;

use super::{require_exists, require_parent};
use crate::args::{DensifyArgs, TrackerKind};
use crate::error::{Classify, Failure, Outcome};

pub fn run(a: &DensifyArgs) -> Outcome {
    let params = DensifyParams::new(a.rho1, a.rho2, a.tau_dup).usage()?;
    require_exists("--in", &a.input)?;
    require_exists("--frames", &a.frames)?;
    require_parent("--out", &a.out)?;
    let gt = match (a.tracker, &a.gt) {
        (TrackerKind::Oracle, None) => return Err(Failure::usage("--tracker oracle needs --gt")),
        (TrackerKind::Oracle, Some(path)) => {
            require_exists("--gt", path)?;
            Some(read_ground_truth(path).data()?)
        }
        (TrackerKind::Ncc, _) => None,
    };
    if a.tracker == TrackerKind::Oracle && a.search_radius.is_some() {
        log::warn!("--search-radius is ignored by the oracle tracker");
    }
    let ncc = NccTrackerFactory::new(NccConfig {
        search_radius: a.search_radius,
    });
    let tracker_name = match a.tracker {
        TrackerKind::Ncc => ncc.describe(),
        TrackerKind::Oracle => "oracle".to_string(),
    };

    let sparse = read_sparse(&a.input).data()?;
    log::info!("{} clips with {} seeds", sparse.len(), sparse.iter().map(|c| c.seeds.len()).sum::<usize>());

    let clips: Vec<DenseClip> = sparse
        .par_iter()
        .map(|sc| {
            let frames = load_frames(&a.frames.join(&sc.clip_id)).data()?;
            let clip = ActionClip::new(sc.clip_id.clone(), frames, sc.seeds.clone())
                .map_err(|e| anyhow::anyhow!("clip {}: {e}", sc.clip_id))
                .data()?;
            let oracle;
            let factory: &dyn TrackerFactory = match &gt {
                Some(gt) => {
                    oracle = OracleTrackerFactory::new(gt.oracle_tracks(&sc.clip_id, clip.len()));
                    &oracle
                }
                None => &ncc,
            };
            let outcome = densify_clip(&clip, factory, &params);
            log::info!(
                "clip {}: {} seeds -> {} labels over {} frames{}",
                sc.clip_id,
                sc.seeds.len(),
                outcome.dense.num_labels(),
                clip.len(),
                if outcome.warnings.is_empty() {
                    String::new()
                } else {
                    format!(", {} seed directions skipped", outcome.warnings.len())
                }
            );
            Ok(outcome.dense)
        })
        .collect::<Outcome<_>>()?;

    let dataset = DenseDataset {
        header: DenseHeader {
            params,
            tracker: tracker_name,
        },
        clips,
    };
    write_dense(&a.out, &dataset).internal()?;
    log::info!("wrote {}", a.out.display());
    Ok(())
}
