use cptal_core::classify::MockClassifier;
use cptal_core::config::RunConfig;
use cptal_core::detect::{detect_rows, DetectionConfig};
use cptal_core::keypoints::{build_series, parse_keypoints, write_keypoint_csv, Normalization};
use cptal_core::pipeline::ViewTag;
use cptal_core::run::{run_pipeline, RunOutput};
use cptal_core::synth::{gen_null, gen_planted, gen_scenario, series_to_frames, ScenarioSpec};

fn run_scenario(n_activities: usize, seed: u64, views: usize, error_rate: f64) -> (ScenarioSpec, RunOutput) {
    let spec = ScenarioSpec::random("synthetic", n_activities, seed);
    let sc = gen_scenario(&spec).unwrap();
    let mut cfg = RunConfig::default();
    cfg.detection.seed = seed;
    let mock = MockClassifier { ground_truth: sc.ground_truth.activities.clone(), error_rate, seed };
    let out = run_pipeline(&sc.views[..views], Some(std::slice::from_ref(&sc.ground_truth)), &cfg, &mock).unwrap();
    (spec, out)
}

#[test]
fn planted_interval_is_found_and_null_is_quiet() {
    let cfg = DetectionConfig::default();
    let rows = gen_planted(600, 10, 200, 260, &[1.5; 10], 11).unwrap();
    let d = detect_rows(&rows, 0.0, 10.0, &cfg, 5).unwrap().expect("significant");
    assert!(d.t1.abs_diff(200) <= 30 && d.t2.abs_diff(260) <= 30, "{d:?}");
    assert!((d.p_value - 1.0 / 101.0).abs() < 1e-12);

    let quiet = gen_null(600, 10, 11);
    let out = cptal_core::detect::scan_window(&quiet, 0.0, 10.0, &cfg, 5).unwrap().unwrap();
    assert!(out.p_value > 0.0 && out.p_value <= 1.0);
}

#[test]
fn three_views_closed_loop() {
    let (spec, out) = run_scenario(3, 4, 3, 0.0);
    let p = out.proposal_report.unwrap();
    let c = out.classified_report.unwrap();
    assert_eq!(p.total, spec.activities.len());
    assert!(p.matched >= 2, "{p:?}");
    assert_eq!(c.matched, p.matched);
    assert!(out.fused.iter().all(|f| f.view == ViewTag::Fused));
    assert_eq!(out.proposals.len(), 3);
    for w in out.classified.windows(2) {
        assert!(w[0].start_s <= w[1].start_s);
    }
}

#[test]
fn single_view_passes_through() {
    let (_, out) = run_scenario(2, 9, 1, 0.0);
    let per_view = out.proposals.values().next().unwrap();
    assert_eq!(out.fused.len(), per_view.len());
    for (f, p) in out.fused.iter().zip(per_view) {
        assert_eq!((f.start_s, f.end_s), (p.start_s, p.end_s));
    }
}

#[test]
fn synthetic_views_survive_the_keypoint_csv() {
    let spec = ScenarioSpec { n_seconds: 4.0, activities: vec![], ..ScenarioSpec::random("v", 0, 3) };
    let sc = gen_scenario(&spec).unwrap();
    let original = &sc.views[1];
    let mut buf = Vec::new();
    write_keypoint_csv(&series_to_frames(original, 1920.0, 1080.0), &mut buf).unwrap();
    let frames = parse_keypoints(buf.as_slice(), spec.sample_hz).unwrap();
    let back = build_series(&frames, "v", original.view, spec.sample_hz, &Normalization::default()).unwrap();
    assert_eq!(back.len(), original.len());
    for (a, b) in back.vectors.iter().zip(&original.vectors) {
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
