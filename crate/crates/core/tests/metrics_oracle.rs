#[path = "support/oracles.rs"]
mod oracles;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rollscan_core::metrics::average_precision;
use rollscan_core::{evaluate, iou, BBox, Detection, DetectionSet, GroundTruthSet, ImageInfo, MetricConfig};

fn instance(seed: u64) -> (DetectionSet, GroundTruthSet) {
    oracles::random_instance(&mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn matches_brute_force_on_random_instances() {
    let cfg = MetricConfig::default();
    for seed in 0..400 {
        let (dets, gts) = instance(seed);
        let got = evaluate(&dets, &gts, &cfg).unwrap();
        let want = oracles::brute_force_evaluate(&dets, &gts, 0.25);
        assert!(oracles::close(got.precision, want.precision, 1e-9), "seed {seed}: P {:?} vs {:?}", got.precision, want.precision);
        assert!(oracles::close(got.recall, want.recall, 1e-9), "seed {seed}: R");
        assert!(oracles::close(got.map50, want.map50, 1e-9), "seed {seed}: mAP50 {:?} vs {:?}", got.map50, want.map50);
        assert!(oracles::close(got.map5095, want.map5095, 1e-9), "seed {seed}: mAP50-95");
    }
}

#[test]
fn iou_of_half_overlapping_unit_squares_is_one_third() {
    let a = BBox::new(0.0, 0.0, 2.0, 2.0, 0).unwrap();
    let b = BBox::new(1.0, 0.0, 3.0, 2.0, 0).unwrap();
    assert_eq!(iou(&a, &b), 1.0 / 3.0);
}

#[test]
fn hand_computed_ap() {
    // TP, FP, TP against 2 GT: envelope 1 up to recall 0.5, 2/3 after
    let ap = average_precision(&[true, false, true], 2, Default::default()).unwrap();
    assert!((ap - (51.0 + 50.0 * 2.0 / 3.0) / 101.0).abs() < 1e-12);
    assert_eq!(average_precision(&[], 0, Default::default()), None);
    assert_eq!(average_precision(&[false], 0, Default::default()), Some(0.0));
    assert_eq!(average_precision(&[], 3, Default::default()), Some(0.0));
}

fn arb_box() -> impl Strategy<Value = BBox> {
    (0.0f64..50.0, 0.0f64..50.0, 0.5f64..20.0, 0.5f64..20.0)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h, 0).unwrap())
}

fn with_confidences(dets: &DetectionSet, f: impl Fn(f64) -> f64) -> DetectionSet {
    DetectionSet::new(
        dets.detections
            .iter()
            .map(|d| Detection { confidence: f(d.confidence), ..*d })
            .collect(),
    )
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let (ab, ba) = (iou(&a, &b), iou(&b, &a));
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn strict_thresholds_never_score_higher(seed in any::<u64>()) {
        let (dets, gts) = instance(seed);
        let r = evaluate(&dets, &gts, &MetricConfig::default()).unwrap();
        if let (Some(a), Some(b)) = (r.map50, r.map5095) {
            prop_assert!(b <= a + 1e-12);
            let per: Vec<f64> = r.per_threshold.iter().filter_map(|t| t.map).collect();
            prop_assert!(per.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        }
    }

    #[test]
    fn ap_depends_only_on_confidence_order(seed in any::<u64>()) {
        let (dets, gts) = instance(seed);
        let cfg = MetricConfig::default();
        let a = evaluate(&dets, &gts, &cfg).unwrap();
        // strictly increasing map of [0, 1] onto itself
        let b = evaluate(&with_confidences(&dets, |c| c * c), &gts, &cfg).unwrap();
        prop_assert_eq!(a.map50, b.map50);
        prop_assert_eq!(a.map5095, b.map5095);
    }

    #[test]
    fn a_trailing_false_positive_never_raises_ap(seed in any::<u64>()) {
        let (dets, gts) = instance(seed);
        prop_assume!(!dets.is_empty());
        let lowest = dets.detections.iter().map(|d| d.confidence).fold(1.0, f64::min);
        let mut more = dets.detections.clone();
        let far = BBox::new(900.0, 900.0, 910.0, 910.0, dets.detections[0].bbox.class_id).unwrap();
        more.push(Detection::new(dets.detections[0].image_id, far, lowest / 2.0).unwrap());
        let cfg = MetricConfig::default();
        let a = evaluate(&dets, &gts, &cfg).unwrap();
        let b = evaluate(&DetectionSet::new(more), &gts, &cfg).unwrap();
        prop_assert!(b.map50.unwrap() <= a.map50.unwrap() + 1e-12);
        prop_assert!(b.map5095.unwrap() <= a.map5095.unwrap() + 1e-12);
    }

    #[test]
    fn duplicating_the_dataset_keeps_ap(seed in any::<u64>()) {
        let (dets, gts) = instance(seed);
        // distinct confidences so each detection ranks right next to its copy
        let dets = DetectionSet::new(
            dets.detections.iter().enumerate().map(|(i, d)| Detection { confidence: (i as f64 + 1.0) / 1000.0, ..*d }).collect(),
        );
        let shift = 1000;
        let mut gts2 = gts.clone();
        for a in gts.images.values() {
            gts2.insert(ImageInfo { id: a.info.id + shift, ..a.info.clone() }, a.boxes.clone());
        }
        let mut dets2 = dets.detections.clone();
        dets2.extend(dets.detections.iter().map(|d| Detection { image_id: d.image_id + shift, ..*d }));
        let cfg = MetricConfig::default();
        let a = evaluate(&dets, &gts, &cfg).unwrap();
        let b = evaluate(&DetectionSet::new(dets2), &gts2, &cfg).unwrap();
        prop_assert!(oracles::close(a.map50, b.map50, 1e-12));
        prop_assert!(oracles::close(a.map5095, b.map5095, 1e-12));
        prop_assert!(oracles::close(a.precision, b.precision, 1e-12));
        prop_assert!(oracles::close(a.recall, b.recall, 1e-12));
    }

    #[test]
    fn perfect_detections_score_one(seed in any::<u64>()) {
        let (_, gts) = instance(seed);
        prop_assume!(gts.total_boxes() > 0);
        let r = evaluate(&gts.as_detections(1.0), &gts, &MetricConfig::default()).unwrap();
        prop_assert_eq!(r.map50, Some(1.0));
        prop_assert_eq!(r.map5095, Some(1.0));
        prop_assert_eq!((r.precision, r.recall), (Some(1.0), Some(1.0)));
    }
}
