//! `fcos-targets`: target assignment and loss for a problem given as JSON.
//!
//! Input:
//!
//! ```json
//! {
//!   "positions": [[u, v], ...],          // or "grid": {"width": W, "height": H, "stride": S}
//!   "boxes": [{"bbox": [x0, y0, x1, y1], "class": 1}, ...],
//!   "predictions": {                     // optional
//!     "scores": [[p1, p2, ...], ...],    // per position, index k is class k + 1
//!     "regressions": [[l, t, r, b], ...]
//!   },
//!   "loss": {"focal_gamma": 2, "focal_alpha": 0.25, "iou_floor": 1e-6}  // optional
//! }
//! ```

use densetrack_core::fcos::{
    assign_targets, detection_loss, grid_positions, ClassScores, FcosTarget, GridPosition, LossConfig, Ltrb,
};
use densetrack_core::geometry::{BBox, FrameSize};
use serde::{Deserialize, Serialize};

use super::{require_exists, require_parent};
use crate::args::FcosArgs;
use crate::error::{Classify, Failure, Outcome};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Grid {
    width: u32,
    height: u32,
    stride: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GtBox {
    bbox: BBox,
    class: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Predictions {
    scores: Vec<ClassScores>,
    regressions: Vec<Ltrb>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Problem {
    positions: Option<Vec<GridPosition>>,
    grid: Option<Grid>,
    boxes: Vec<GtBox>,
    predictions: Option<Predictions>,
    loss: Option<LossConfig>,
}

#[derive(Serialize)]
struct TargetOut {
    class: u32,
    ltrb: Option<Ltrb>,
}

#[derive(Serialize)]
struct Answer {
    positions: Vec<GridPosition>,
    targets: Vec<TargetOut>,
    num_positive: usize,
    loss: Option<f64>,
}

fn solve(p: Problem) -> anyhow::Result<Answer> {
    let positions = match (p.positions, p.grid) {
        (Some(pos), None) => pos,
        (None, Some(g)) => grid_positions(FrameSize::new(g.width, g.height)?, g.stride)?,
        _ => anyhow::bail!("give exactly one of \"positions\" or \"grid\""),
    };
    let boxes: Vec<(BBox, u32)> = p.boxes.iter().map(|b| (b.bbox, b.class)).collect();
    let targets = assign_targets(&positions, &boxes)?;
    let loss = match p.predictions {
        Some(pred) => Some(detection_loss(
            &pred.scores,
            &pred.regressions,
            &targets,
            &p.loss.unwrap_or_default(),
        )?),
        None => None,
    };
    Ok(Answer {
        num_positive: targets.iter().filter(|t| t.is_positive()).count(),
        targets: targets
            .iter()
            .map(|t: &FcosTarget| TargetOut {
                class: t.class(),
                ltrb: t.ltrb(),
            })
            .collect(),
        positions,
        loss,
    })
}

pub fn run(a: &FcosArgs) -> Outcome {
    require_exists("--in", &a.input)?;
    if let Some(out) = &a.out {
        require_parent("--out", out)?;
    }
    let text = std::fs::read_to_string(&a.input)
        .map_err(|e| Failure::Data(anyhow::anyhow!("{}: {e}", a.input.display())))?;
    let problem: Problem = serde_json::from_str(&text)
        .map_err(|e| Failure::Data(anyhow::anyhow!("{}: {e}", a.input.display())))?;
    let answer = solve(problem).data()?;
    let mut json = serde_json::to_string_pretty(&answer).internal()?;
    json.push('\n');
    match &a.out {
        Some(out) => densetrack_core::io::write_atomic(out, |w| w.write_all(json.as_bytes())).internal()?,
        None => print!("{json}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_problem_with_perfect_predictions() {
        let p: Problem = serde_json::from_str(
            r#"{"grid": {"width": 16, "height": 16, "stride": 8},
                "boxes": [{"bbox": [0, 0, 10, 10], "class": 2}],
                "predictions": {
                    "scores": [[0, 1], [0, 0], [0, 0], [0, 0]],
                    "regressions": [[4, 4, 6, 6], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]
                }}"#,
        )
        .unwrap();
        let a = solve(p).unwrap();
        assert_eq!(a.positions.len(), 4);
        assert_eq!(a.num_positive, 1);
        assert_eq!(a.targets[0].class, 2);
        assert_eq!(a.targets[0].ltrb.unwrap().to_array(), [4.0, 4.0, 6.0, 6.0]);
        assert_eq!(a.loss, Some(0.0));
    }

    #[test]
    fn needs_exactly_one_position_source() {
        let p: Problem = serde_json::from_str(r#"{"boxes": []}"#).unwrap();
        assert!(solve(p).is_err());
    }
}
