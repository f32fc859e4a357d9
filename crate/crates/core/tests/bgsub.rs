mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vigil_core::bgsub::{
    connected_components, foreground_gate, BackgroundModel, BackgroundSubtractor, BgSubConfig, BinaryMask, Blob,
};
use vigil_core::model::{BBox, Frame};

#[test]
fn components_match_flood_fill() {
    assert_eq!(oracles::components_suite(11), Ok(300));
}

#[test]
fn diagonal_touch_joins_and_gap_separates() {
    #[rustfmt::skip]
    let data = vec![
        255, 0,   0,   0,
        0,   255, 0,   255,
        0,   0,   0,   255,
    ];
    let blobs = connected_components(&BinaryMask { width: 4, height: 3, data });
    assert_eq!(blobs.len(), 2);
    assert_eq!(blobs[0], Blob { area: 2, bbox: BBox::new(0, 0, 2, 2) });
    assert_eq!(blobs[1], Blob { area: 2, bbox: BBox::new(3, 1, 1, 2) });
}

fn constant(w: u32, h: u32, v: u8) -> Frame {
    Frame::new("c", 0, 0, w, h, 1, vec![v; (w * h) as usize]).unwrap()
}

fn max_gap(model: &BackgroundModel, v: u8) -> f64 {
    model.accumulator().iter().map(|a| (a - f64::from(v)).abs()).fold(0.0, f64::max)
}

/// Smallest k with 255·(1−alpha)^k < target, found by stepping.
fn steps_below(alpha: f64, start: f64, target: f64) -> u32 {
    let (mut gap, mut k) = (start, 0);
    while gap >= target {
        gap *= 1.0 - alpha;
        k += 1;
    }
    k
}

#[test]
fn accumulator_converges_within_derived_bound() {
    assert_eq!(steps_below(0.05, 255.0, 1.0), 109);
    let mut model = BackgroundModel::new(16, 8, 0.05);
    model.accumulate_weighted(&constant(16, 8, 0)).unwrap();
    let target = constant(16, 8, 255);
    let mut previous = max_gap(&model, 255);
    for k in 1..=109 {
        model.accumulate_weighted(&target).unwrap();
        let gap = max_gap(&model, 255);
        assert!((gap - previous * 0.95).abs() < 1e-9, "step {k}: not geometric");
        if k < 109 {
            assert!(gap >= 1.0, "step {k}: converged too early");
        }
        previous = gap;
    }
    assert!(previous < 1.0);
}

#[test]
fn random_constant_inputs_decay_geometrically() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let alpha = rng.gen_range(0.01..0.5);
        let (from, to) = (rng.gen::<u8>(), rng.gen::<u8>());
        let mut model = BackgroundModel::new(4, 4, alpha);
        model.accumulate_weighted(&constant(4, 4, from)).unwrap();
        let mut previous = max_gap(&model, to);
        for _ in 0..30 {
            model.accumulate_weighted(&constant(4, 4, to)).unwrap();
            let gap = max_gap(&model, to);
            assert!((gap - previous * (1.0 - alpha)).abs() < 1e-9);
            previous = gap;
        }
    }
}

#[test]
fn gate_recovers_after_background_switch() {
    let cfg = BgSubConfig::default();
    let bound = (f64::from(cfg.diff_threshold) / 255.0).ln() / (1.0 - cfg.alpha).ln();
    let bound = bound.ceil() as usize;
    assert_eq!(bound, 46);
    let mut sub = BackgroundSubtractor::new(cfg);
    for _ in 0..20 {
        assert_eq!(sub.process(&constant(40, 30, 0)), None);
    }
    let mut last_true = 0;
    for k in 1..=bound + 10 {
        if sub.process(&constant(40, 30, 255)).is_some() {
            last_true = k;
        }
    }
    assert!(last_true >= 1, "the switch itself must be foreground");
    assert!(last_true <= bound, "gate still open after {last_true} frames, bound {bound}");
}

#[test]
fn gate_threshold_is_strict() {
    let blob = Blob { area: 30_720, bbox: BBox::new(0, 0, 160, 192) };
    assert_eq!(foreground_gate(&[blob], 640 * 480, 0.10), None);
    let bigger = Blob { area: 30_721, ..blob };
    assert_eq!(foreground_gate(&[blob, bigger], 640 * 480, 0.10), Some(bigger));
}
