mod common;

use std::collections::BTreeMap;

use common::*;
use hivewatch_core::evaluation::{average_precision, match_detections, Detection, GroundTruthBox};
use hivewatch_core::geometry::{diou, giou, iou, BoundingBox};
use hivewatch_core::nms::{suppress, NmsConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-9;

fn by_image(scene: &Scene) -> BTreeMap<String, (Vec<Detection>, Vec<GroundTruthBox>)> {
    let mut out: BTreeMap<String, (Vec<Detection>, Vec<GroundTruthBox>)> = BTreeMap::new();
    for d in &scene.detections {
        out.entry(d.image_id.to_string()).or_default().0.push(d.clone());
    }
    for g in &scene.truth {
        out.entry(g.image_id.to_string()).or_default().1.push(g.clone());
    }
    out
}

#[test]
fn matching_agrees_with_greedy_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let scene = random_scene(&mut rng, 5, 6);
        for t in [0.3, 0.5, 0.75] {
            for (dets, gts) in by_image(&scene).values() {
                let got = match_detections(dets, gts, t).unwrap();
                let d: Vec<(Corners, f64)> = dets.iter().map(|d| (corners(&d.bbox), d.confidence)).collect();
                let g: Vec<Corners> = gts.iter().map(|g| corners(&g.bbox)).collect();
                let want = greedy_oracle(&d, &g, t);
                let pairs: Vec<(usize, usize)> = got
                    .assignments
                    .iter()
                    .map(|a| (a.detection, a.ground_truth))
                    .collect();
                assert_eq!(pairs, want);
                assert_eq!(got.true_positives, want.len());
                assert_eq!(got.false_positives, dets.len() - want.len());
                assert_eq!(got.false_negatives, gts.len() - want.len());
            }
        }
    }
}

#[test]
fn ap_within_sampling_bias_of_exact_curve() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let scene = random_scene(&mut rng, 5, 6);
        for t in [0.5, 0.75] {
            let got = average_precision(&scene.detections, &scene.truth, t)
                .unwrap()
                .average_precision;
            let exact = exact_ap_oracle(&scene.detections, &scene.truth, t);
            worst = worst.max((got - exact).abs());
            assert!((got - exact).abs() <= 0.01 + EPS, "ap {got} vs exact {exact}");
        }
    }
    assert!(worst > 0.0, "scenes never exercised the interpolation bias");
}

#[test]
fn iou_family_properties_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10_000 {
        let a = random_box(&mut rng, 50.0);
        let b = if rand::Rng::random_bool(&mut rng, 0.5) {
            nearby_box(&mut rng, &a)
        } else {
            random_box(&mut rng, 50.0)
        };
        let v = iou(&a, &b);
        assert!((v - iou(&b, &a)).abs() <= EPS);
        assert!((-EPS..=1.0 + EPS).contains(&v));
        assert!((v - iou_oracle(corners(&a), corners(&b))).abs() <= EPS);
        assert!((iou(&a, &a) - 1.0).abs() <= EPS);
        let (dx, dy) = (17.25, -4.5);
        assert!((iou(&a.translate(dx, dy), &b.translate(dx, dy)) - v).abs() <= EPS);
        let g = giou(&a, &b).unwrap();
        let d = diou(&a, &b).unwrap();
        assert!(g <= v + EPS && g >= -1.0 - EPS);
        assert!(d <= v + EPS && d >= -1.0 - EPS);
        assert!((g - giou(&b, &a).unwrap()).abs() <= EPS);
        assert!((d - diou(&b, &a).unwrap()).abs() <= EPS);
    }
}

#[test]
fn nms_agrees_with_quadratic_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for i in 0..1000 {
        let cands = random_candidates(&mut rng, 40);
        let cfg = NmsConfig {
            iou_threshold: [0.3, 0.45, 0.7][i % 3],
            confidence_floor: [0.0, 0.25][i % 2],
            max_detections: [5, 300][i % 2],
        };
        let kept = suppress(&cands, &cfg);
        let want = nms_oracle(
            &cands,
            cfg.iou_threshold,
            cfg.confidence_floor,
            cfg.max_detections,
        );
        assert_eq!(kept, want);
        assert_eq!(suppress(&kept, &cfg), kept, "not idempotent");
        let mut shuffled = cands.clone();
        shuffled.shuffle(&mut rng);
        assert_eq!(suppress(&shuffled, &cfg), kept, "depends on input order");
    }
}

fn arb_box() -> impl Strategy<Value = BoundingBox> {
    (-100.0..100.0f64, -100.0..100.0f64, 0.01..50.0f64, 0.01..50.0f64)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, x + w, y + h).unwrap())
}

proptest! {
    #[test]
    fn iou_bounded_and_symmetric(a in arb_box(), b in arb_box()) {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!((v - iou(&b, &a)).abs() <= EPS);
    }

    #[test]
    fn giou_and_diou_never_exceed_iou(a in arb_box(), b in arb_box()) {
        let v = iou(&a, &b);
        prop_assert!(giou(&a, &b).unwrap() <= v + EPS);
        prop_assert!(diou(&a, &b).unwrap() <= v + EPS);
    }

    #[test]
    fn uniform_scaling_keeps_iou(a in arb_box(), b in arb_box(), s in 0.1..10.0f64) {
        prop_assert!((iou(&a.scale(s), &b.scale(s)) - iou(&a, &b)).abs() <= 1e-7);
    }

    #[test]
    fn nms_output_is_sorted_and_capped(seed in any::<u64>(), cap in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cands = random_candidates(&mut rng, 30);
        let cfg = NmsConfig { max_detections: cap, ..NmsConfig::default() };
        let kept = suppress(&cands, &cfg);
        prop_assert!(kept.len() <= cap);
        prop_assert!(kept.windows(2).all(|w| w[0].confidence >= w[1].confidence));
        prop_assert!(kept.iter().all(|d| d.confidence >= cfg.confidence_floor));
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert!(a.class_id != b.class_id || iou(&a.bbox, &b.bbox) < cfg.iou_threshold);
            }
        }
    }

    #[test]
    fn ap_is_a_fraction_and_perfect_predictions_score_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = random_scene(&mut rng, 5, 6);
        let ap = average_precision(&scene.detections, &scene.truth, 0.5).unwrap().average_precision;
        prop_assert!((0.0..=1.0).contains(&ap));
        let perfect: Vec<Detection> = scene
            .truth
            .iter()
            .map(|g| Detection::new(g.bbox, 1.0, 0, g.image_id.clone()).unwrap())
            .collect();
        let ap = average_precision(&perfect, &scene.truth, 0.95).unwrap().average_precision;
        prop_assert!((ap - 1.0).abs() <= EPS);
    }
}
