use densetrack_core::geometry::{BBox, FrameSize};
use densetrack_core::synth::{generate_clip, Motion, ObjectSpec, SynthClip, SynthConfig};
use densetrack_core::tracker::{Frame, NccTracker, TrackResult, Tracker, SCALES};

fn clip(motion: Motion, drift: f64, sigma: f64) -> SynthClip {
    let mut config = SynthConfig::new(
        FrameSize::new(96, 96).unwrap(),
        30,
        vec![ObjectSpec {
            class: 1,
            appearance_seed: 11,
            initial: BBox::new(30.0, 30.0, 52.0, 50.0).unwrap(),
            motion,
            scale_drift: drift,
        }],
        1.0,
        3,
    );
    config.background_sigma = sigma;
    generate_clip(&config).unwrap()
}

fn run(frames: &[Frame], seed: BBox) -> Vec<TrackResult> {
    let mut t = NccTracker::default();
    t.init(0, &frames[0], seed).unwrap();
    (1..frames.len()).map(|k| t.update(k, &frames[k]).unwrap()).collect()
}

#[test]
fn box_area_changes_by_at_most_one_scale_step() {
    let c = clip(Motion::Linear { vx: 0.75, vy: -0.5 }, 0.01, 0.05);
    let seed = c.gt[0][0].bbox;
    let lo = SCALES.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = SCALES.iter().copied().fold(0.0, f64::max);
    let mut prev = seed.area();
    for r in run(&c.frames, seed) {
        let a = r.bbox.area();
        assert!(a >= prev * lo * lo * (1.0 - 1e-12) && a <= prev * hi * hi * (1.0 + 1e-12), "{prev} -> {a}");
        prev = a;
    }
}

#[test]
fn score_ignores_affine_intensity_changes() {
    let c = clip(Motion::Sinusoidal { ax: 6.0, ay: 3.0, period: 15.0 }, 0.0, 0.05);
    let seed = c.gt[0][0].bbox;
    let base = run(&c.frames, seed);
    for (gain, offset) in [(0.5, 0.0), (0.5, 0.25), (1.0, 0.0), (0.8, 0.1)] {
        let frames: Vec<Frame> = c
            .frames
            .iter()
            .map(|f| Frame::new(f.size(), f.pixels().iter().map(|p| gain * p + offset).collect()).unwrap())
            .collect();
        for (a, b) in base.iter().zip(run(&frames, seed)) {
            assert_eq!(a.bbox, b.bbox);
            assert!((a.score - b.score).abs() <= 1e-6, "gain {gain} offset {offset}: {} vs {}", a.score, b.score);
        }
    }
}

#[test]
fn rigid_translation_on_flat_background_is_followed_exactly() {
    for (vx, vy) in [(1.0, 0.0), (2.0, -1.0), (-3.0, 2.0), (1.5, 0.5)] {
        let c = clip(Motion::Linear { vx, vy }, 0.0, 0.0);
        let seed = c.gt[0][0].bbox;
        let mut followed = 0;
        for (k, r) in run(&c.frames, seed).iter().enumerate() {
            // Only while the whole object is in view.
            let Some(g) = c.gt[k + 1].first().filter(|g| g.bbox.width() == 22.0 && g.bbox.height() == 20.0) else {
                break;
            };
            let ((x, y), (gx, gy)) = (r.bbox.center(), g.bbox.center());
            assert!((x - gx).abs() <= 1.0 && (y - gy).abs() <= 1.0, "v ({vx}, {vy}) frame {}: {:?} vs {:?}", k + 1, r.bbox, g.bbox);
            followed += 1;
        }
        assert!(followed >= 10, "v ({vx}, {vy}): only {followed} frames in view");
    }
}

#[test]
fn identical_inputs_give_identical_results() {
    let c = clip(Motion::Linear { vx: 1.25, vy: 0.75 }, 0.005, 0.05);
    let seed = c.gt[0][0].bbox;
    assert_eq!(run(&c.frames, seed), run(&c.frames, seed));
}
