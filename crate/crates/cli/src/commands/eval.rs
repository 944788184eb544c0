use densetrack_core::eval::{evaluate_with, Interpolation, IouComparison, Protocol};
use densetrack_core::io::{read_detections, read_ground_truth, write_eval_report, Params};

use super::{file_name, require_exists, require_parent};
use crate::args::{Comparison, EvalArgs, Interp};
use crate::error::{Classify, Failure, Outcome};

pub fn run(a: &EvalArgs) -> Outcome {
    if a.thresholds.is_empty() {
        return Err(Failure::usage("--thresholds needs at least one value"));
    }
    require_exists("--det", &a.det)?;
    require_exists("--gt", &a.gt)?;
    if let Some(out) = &a.out {
        require_parent("--out", out)?;
    }

    let dets = read_detections(&a.det).data()?;
    let gt = read_ground_truth(&a.gt).data()?;
    let protocol = Protocol {
        comparison: match a.iou_comparison {
            Comparison::Strict => IouComparison::Greater,
            Comparison::Inclusive => IouComparison::GreaterOrEqual,
        },
        interpolation: match a.interpolation {
            Interp::AllPoint => Interpolation::AllPoint,
            Interp::ElevenPoint => Interpolation::ElevenPoint,
        },
    };
    let report = evaluate_with(&dets.detections, &gt.ground_truth_set(), &a.thresholds, &protocol).usage()?;
    print!("{}", report.render_table());

    if let Some(out) = &a.out {
        let mut params = Params::new();
        params.insert("det".into(), file_name(&a.det));
        params.insert("gt".into(), file_name(&a.gt));
        let t: Vec<String> = a.thresholds.iter().map(f64::to_string).collect();
        params.insert("thresholds".into(), t.join(","));
        params.insert("iou_comparison".into(), protocol.comparison.name().into());
        params.insert("interpolation".into(), protocol.interpolation.name().into());
        write_eval_report(out, &report, &params).internal()?;
        log::info!("wrote {}", out.display());
    }
    Ok(())
}
