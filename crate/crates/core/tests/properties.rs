use std::collections::BTreeMap;

use proptest::prelude::*;

use cptal_core::classify::{parse_answer, ActivityClass, ClassOutcome};
use cptal_core::eval::{
    match_and_score, overlap_score, read_ground_truth, within_tolerance, write_ground_truth, Annotation, EvalMode,
    GroundTruth,
};
use cptal_core::graph::{graph_stats, kmst, pairwise_distances, SimilarityGraph};
use cptal_core::keypoints::{
    resample, select_and_normalize, window, CameraView, FeatureVector, Keypoint, KeypointSeries, RawKeypointFrame,
    NUM_KEYPOINTS,
};
use cptal_core::pipeline::{fuse_views, merge_proposals, ActivityInterval, ViewTag};
use cptal_core::scan::{edge_counts_for_set, null_moments, scan, StatKind};
use cptal_core::synth::gen_null;

fn frame(coords: &[(f64, f64, f64)]) -> RawKeypointFrame {
    let mut keypoints = [Keypoint::default(); NUM_KEYPOINTS];
    for (k, &(x, y, confidence)) in coords.iter().enumerate() {
        keypoints[k] = Keypoint { x, y, confidence };
    }
    RawKeypointFrame { frame_index: 0, person_id: 0, timestamp_s: 0.0, keypoints }
}

fn interval(view: ViewTag, s: f64, len: f64, p: f64) -> ActivityInterval {
    ActivityInterval {
        video_id: "v".into(),
        view,
        start_s: s,
        end_s: s + len,
        stat_value: 3.0,
        p_value: Some(p),
        class_id: None,
        label: None,
    }
}

fn intervals(view: ViewTag, max: usize) -> impl Strategy<Value = Vec<ActivityInterval>> {
    prop::collection::vec((0.0..200.0f64, 1.0..40.0f64, 0.0..0.05f64), 0..max)
        .prop_map(move |v| v.into_iter().map(|(s, l, p)| interval(view, s, l, p)).collect())
}

fn series(n: usize, hz: f64) -> KeypointSeries {
    KeypointSeries {
        video_id: "v".into(),
        view: CameraView::Dashboard,
        sample_hz: hz,
        vectors: (0..n).map(|i| FeatureVector { values: vec![i as f64, 0.5], mask: vec![true] }).collect(),
    }
}

proptest! {
    #[test]
    fn normalized_features_stay_in_unit_range(
        coords in prop::collection::vec((-500.0..3000.0f64, -500.0..2000.0f64, 0.0..=1.0f64), NUM_KEYPOINTS)
    ) {
        let f = frame(&coords);
        let subset: Vec<usize> = (0..NUM_KEYPOINTS).collect();
        let v = select_and_normalize(&f, 1920.0, 1080.0, 0.5, &subset, None);
        prop_assert!(v.values.iter().all(|x| (0.0..=1.0).contains(x)));
        for (k, &(_, _, c)) in coords.iter().enumerate() {
            prop_assert_eq!(v.mask[k], c > 0.5);
        }
    }

    #[test]
    fn low_confidence_keypoints_repeat_previous(
        prev in prop::collection::vec(0.0..1.0f64, 4),
        conf in prop::collection::vec(0.0..=1.0f64, 2),
    ) {
        let previous = FeatureVector { values: prev.clone(), mask: vec![true, true] };
        let f = frame(&[(960.0, 540.0, conf[0]), (96.0, 108.0, conf[1])]);
        let v = select_and_normalize(&f, 1920.0, 1080.0, 0.5, &[0, 1], Some(&previous));
        let fresh = [(0.5, 0.5), (0.05, 0.1)];
        for k in 0..2 {
            let expected = if conf[k] > 0.5 { fresh[k] } else { (prev[2 * k], prev[2 * k + 1]) };
            prop_assert!((v.values[2 * k] - expected.0).abs() < 1e-12);
            prop_assert!((v.values[2 * k + 1] - expected.1).abs() < 1e-12);
        }
    }

    #[test]
    fn resampling_commutes_with_windowing(n in 60usize..1500, win_s in 1usize..12) {
        // 30 Hz to 10 Hz; windows are whole seconds so they start on kept frames.
        let s = series(n, 30.0);
        let win = win_s as f64;
        let offset = (win_s / 2) as f64;
        let a = window(&resample(&s, 10.0).unwrap(), win, offset, 1).unwrap();
        let b: Vec<_> = window(&s, win, offset, 1)
            .unwrap()
            .into_iter()
            .map(|w| resample(&w.series, 10.0).unwrap())
            .collect();
        prop_assert_eq!(a.len(), b.len());
        for (wa, wb) in a.iter().zip(&b) {
            prop_assert_eq!(&wa.series.vectors, &wb.vectors);
        }
    }

    #[test]
    fn power_of_two_scaling_leaves_scan_unchanged(seed in 0u64..1000, exp in -3i32..4) {
        let rows = gen_null(40, 3, seed);
        let c = 2f64.powi(exp);
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x * c).collect()).collect();
        let g1 = kmst(&pairwise_distances(&rows).unwrap(), 3).unwrap();
        let g2 = kmst(&pairwise_distances(&scaled).unwrap(), 3).unwrap();
        prop_assert_eq!(&g1, &g2);
        for kind in StatKind::ALL {
            prop_assert_eq!(scan(&g1, 40, 4, 36, kind).unwrap(), scan(&g2, 40, 4, 36, kind).unwrap());
        }
    }

    #[test]
    fn counts_and_moments_survive_relabeling(
        seed in 0u64..1000,
        perm in Just((0..30usize).collect::<Vec<_>>()).prop_shuffle(),
        group in prop::collection::vec(any::<bool>(), 30),
    ) {
        let rows = gen_null(30, 2, seed);
        let g = kmst(&pairwise_distances(&rows).unwrap(), 2).unwrap();
        let h = g.relabeled(&perm);
        let mut moved = vec![false; 30];
        for (v, &inside) in group.iter().enumerate() {
            moved[perm[v]] = inside;
        }
        prop_assert_eq!(edge_counts_for_set(&g, &group), edge_counts_for_set(&h, &moved));
        let n1 = group.iter().filter(|&&b| b).count();
        if (2..=28).contains(&n1) {
            prop_assert_eq!(null_moments(&graph_stats(&g), 30, n1).unwrap(), null_moments(&graph_stats(&h), 30, n1).unwrap());
        }
    }

    #[test]
    fn merge_is_idempotent_and_separating(props in intervals(ViewTag::Dashboard, 12), iou in 0.1..0.9f64) {
        let once = merge_proposals(&props, iou);
        prop_assert_eq!(merge_proposals(&once, iou), once.clone());
        for i in 0..once.len() {
            for j in i + 1..once.len() {
                prop_assert!(once[i].iou(&once[j]) < iou);
            }
        }
        prop_assert!(once.len() <= props.len());
    }

    #[test]
    fn fusion_ignores_which_view_is_which(
        a in intervals(ViewTag::Dashboard, 6),
        b in intervals(ViewTag::Rearview, 6),
        c in intervals(ViewTag::RightWindow, 6),
        min_views in 1usize..=3,
    ) {
        let build = |x: &[ActivityInterval], y: &[ActivityInterval], z: &[ActivityInterval]| {
            let mut m = BTreeMap::new();
            m.insert(CameraView::Dashboard, x.to_vec());
            m.insert(CameraView::Rearview, y.to_vec());
            m.insert(CameraView::RightWindow, z.to_vec());
            fuse_views(&m, 2.0, 2.0, min_views)
        };
        let base = build(&a, &b, &c);
        prop_assert_eq!(&build(&c, &a, &b), &base);
        prop_assert_eq!(&build(&b, &c, &a), &base);
        prop_assert_eq!(&build(&a, &c, &b), &base);
        prop_assert!(base.iter().all(|f| f.view == ViewTag::Fused && f.start_s < f.end_s));
    }

    #[test]
    fn overlap_score_properties(gs in -100i32..100, gl in 1i32..50, ps in -100i32..100, pl in 1i32..50, shift in -1000i32..1000) {
        let g = (gs as f64, (gs + gl) as f64);
        let p = (ps as f64, (ps + pl) as f64);
        let os = overlap_score(g, p);
        prop_assert!((0.0..=1.0).contains(&os));
        prop_assert_eq!(os, overlap_score(p, g));
        prop_assert_eq!(os == 1.0, g == p);
        let disjoint = g.1 <= p.0 || p.1 <= g.0;
        prop_assert_eq!(os == 0.0, disjoint);
        let sh = shift as f64;
        let (g2, p2) = ((g.0 + sh, g.1 + sh), (p.0 + sh, p.1 + sh));
        prop_assert_eq!(os, overlap_score(g2, p2));
        prop_assert_eq!(within_tolerance(g, p, 10.0), within_tolerance(g2, p2, 10.0));
    }

    #[test]
    fn removing_a_prediction_never_adds_matches(
        gt in prop::collection::vec((1u8..=16, 0.0..300.0f64, 5.0..40.0f64), 1..8),
        preds in prop::collection::vec((0.0..300.0f64, 5.0..40.0f64, 1u8..=16), 1..10),
        drop in any::<prop::sample::Index>(),
    ) {
        let truth = GroundTruth {
            video_id: "v".into(),
            activities: gt.iter().map(|&(c, s, l)| Annotation { class_id: c, start_s: s, end_s: s + l }).collect(),
        };
        let preds: Vec<ActivityInterval> = preds
            .iter()
            .map(|&(s, l, c)| ActivityInterval { class_id: Some(c), ..interval(ViewTag::Fused, s, l, 0.01) })
            .collect();
        let mut fewer = preds.clone();
        fewer.remove(drop.index(preds.len()));
        for mode in [EvalMode::Proposal, EvalMode::Classified] {
            let full = match_and_score(&truth, &preds, mode, 10.0);
            let less = match_and_score(&truth, &fewer, mode, 10.0);
            prop_assert!(less.matched <= full.matched);
            prop_assert!(full.matched <= full.total);
        }
    }

    #[test]
    fn ground_truth_scores_perfectly(gt in prop::collection::vec((1u8..=16, 5.0..40.0f64), 1..10)) {
        // Laid end to end so no prediction fits two activities equally well.
        let mut t = 0.0;
        let mut activities = Vec::new();
        for &(c, len) in &gt {
            activities.push(Annotation { class_id: c, start_s: t, end_s: t + len });
            t += len + 25.0;
        }
        let truth = GroundTruth { video_id: "v".into(), activities };
        let preds: Vec<ActivityInterval> = truth
            .activities
            .iter()
            .map(|a| ActivityInterval {
                class_id: Some(a.class_id),
                ..interval(ViewTag::Fused, a.start_s, a.end_s - a.start_s, 0.01)
            })
            .collect();
        for mode in [EvalMode::Proposal, EvalMode::Classified] {
            let r = match_and_score(&truth, &preds, mode, 10.0);
            prop_assert_eq!(r.accuracy, 1.0);
            prop_assert!((r.mean_overlap - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ground_truth_csv_roundtrip_is_bit_exact(
        rows in prop::collection::vec((0u8..3, 1u8..=16, any::<f64>(), 0.0..1e6f64), 0..20)
    ) {
        let mut by_video: BTreeMap<String, Vec<Annotation>> = BTreeMap::new();
        for (vid, c, s, l) in rows {
            if !s.is_finite() || l.is_nan() || l <= 0.0 {
                continue;
            }
            let start_s = s.rem_euclid(1e7);
            let end_s = start_s + l;
            if end_s > start_s {
                by_video.entry(format!("video{vid}")).or_default().push(Annotation { class_id: c, start_s, end_s });
            }
        }
        let truths: Vec<GroundTruth> =
            by_video.into_iter().map(|(video_id, activities)| GroundTruth { video_id, activities }).collect();
        let mut buf = Vec::new();
        write_ground_truth(&truths, &mut buf).unwrap();
        let back = read_ground_truth(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), truths.len());
        for (a, b) in back.iter().zip(&truths) {
            prop_assert_eq!(&a.video_id, &b.video_id);
            for (x, y) in a.activities.iter().zip(&b.activities) {
                prop_assert_eq!(x.start_s.to_bits(), y.start_s.to_bits());
                prop_assert_eq!(x.end_s.to_bits(), y.end_s.to_bits());
                prop_assert_eq!(x.class_id, y.class_id);
            }
        }
    }

    #[test]
    fn class_names_parse_in_any_case(id in 1u8..=16, upper in any::<bool>(), prefix in "[a-z ]{0,12}") {
        let c = ActivityClass::from_id(id).unwrap();
        let name = if upper { c.name().to_uppercase() } else { c.name().to_lowercase() };
        // A prefix of plain words must not contain another class phrase.
        let text = format!("{prefix} {name}");
        if let ClassOutcome::Class(found) = parse_answer(&text) {
            if found != c {
                prop_assert!(parse_answer(&prefix) != ClassOutcome::NoActivity);
            }
        } else {
            prop_assert!(false, "no class in {text:?}");
        }
    }
}

#[test]
fn relabeled_graph_keeps_shape() {
    let g = SimilarityGraph::from_edges(4, vec![(0, 1), (1, 2), (2, 3)]);
    let h = g.relabeled(&[3, 2, 1, 0]);
    assert_eq!(graph_stats(&g).shared_pairs, graph_stats(&h).shared_pairs);
    assert_eq!(h.edges, vec![(2, 3), (1, 2), (0, 1)]);
}
