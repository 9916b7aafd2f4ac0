//! End-to-end orchestration: ingest, sweep, merge, fuse, classify, evaluate.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::{classify_intervals, Classifier, HttpClassifier, MockClassifier, PromptTemplate};
use crate::config::{ClassifierConfig, ClassifierKind, IngestConfig, RunConfig};
use crate::error::open_file;
use crate::eval::{evaluate_all, EvalMode, EvaluationReport, GroundTruth};
use crate::keypoints::{build_series, parse_keypoints_filtered, resample, CameraView, KeypointSeries};
use crate::pipeline::{fuse_views, merge_proposals, sweep, ActivityInterval};
use crate::Result;

/// Read a keypoint file and turn it into a normalized series at the file's
/// frame rate.
pub fn ingest_file(path: &Path, video_id: &str, view: CameraView, cfg: &IngestConfig) -> Result<KeypointSeries> {
    let frames = parse_keypoints_filtered(open_file(path)?, cfg.fps, cfg.person)?;
    Ok(build_series(&frames, video_id, view, cfg.fps, &cfg.normalization())?)
}

/// The series at the detection rate (unchanged if already at or below it).
pub fn detection_series(series: &KeypointSeries, cfg: &RunConfig) -> Result<KeypointSeries> {
    if series.sample_hz > cfg.detection.sample_hz + 1e-9 {
        Ok(resample(series, cfg.detection.sample_hz)?)
    } else {
        Ok(series.clone())
    }
}

/// Sweep one view at the detection rate and merge overlapping proposals.
pub fn detect_view(series: &KeypointSeries, cfg: &RunConfig) -> Result<Vec<ActivityInterval>> {
    let raw = sweep(&detection_series(series, cfg)?, &cfg.detection)?;
    Ok(merge_proposals(&raw, cfg.fusion.merge_iou))
}

/// Fuse per-view proposals; `min_views` is capped at the number of views.
pub fn fuse(per_view: &BTreeMap<CameraView, Vec<ActivityInterval>>, cfg: &RunConfig) -> Vec<ActivityInterval> {
    let min_views = cfg.fusion.min_views.min(per_view.len()).max(1);
    let fused = fuse_views(per_view, cfg.fusion.start_tol_s, cfg.fusion.end_tol_s, min_views);
    merge_proposals(&fused, cfg.fusion.merge_iou)
}

/// Classifier described by the configuration. The mock needs the ground
/// truth of the video it answers for.
pub fn build_classifier(cfg: &ClassifierConfig, truth: Option<&GroundTruth>) -> Box<dyn Classifier> {
    match cfg.kind {
        ClassifierKind::Mock => Box::new(MockClassifier {
            ground_truth: truth.map(|t| t.activities.clone()).unwrap_or_default(),
            error_rate: cfg.error_rate,
            seed: cfg.seed,
        }),
        ClassifierKind::Http => {
            Box::new(HttpClassifier::new(cfg.endpoint.as_deref().unwrap_or_default(), cfg.timeout_s, cfg.retries))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub proposals: BTreeMap<CameraView, Vec<ActivityInterval>>,
    pub fused: Vec<ActivityInterval>,
    pub classified: Vec<ActivityInterval>,
    pub proposal_report: Option<EvaluationReport>,
    pub classified_report: Option<EvaluationReport>,
}

/// Run the whole pipeline on the views of one video.
///
/// Reports are computed on the fused intervals when ground truth is given;
/// only annotations for the views' video id count.
pub fn run_pipeline(
    views: &[KeypointSeries],
    truths: Option<&[GroundTruth]>,
    cfg: &RunConfig,
    classifier: &dyn Classifier,
) -> Result<RunOutput> {
    cfg.validate()?;
    let mut proposals = BTreeMap::new();
    for series in views {
        proposals.insert(series.view, detect_view(series, cfg)?);
    }
    let fused = fuse(&proposals, cfg);
    let template = PromptTemplate::from_id(cfg.classifier.template)?;
    let classified = classify_intervals(&fused, classifier, cfg.classifier.clip.as_deref(), template);

    let (proposal_report, classified_report) = match truths {
        Some(truths) => {
            let ids: Vec<&str> = views.iter().map(|v| v.video_id.as_str()).collect();
            let relevant: Vec<GroundTruth> =
                truths.iter().filter(|t| ids.contains(&t.video_id.as_str())).cloned().collect();
            let tol = cfg.evaluation.tol_s;
            (
                Some(evaluate_all(&relevant, &fused, EvalMode::Proposal, tol)),
                Some(evaluate_all(&relevant, &classified, EvalMode::Classified, tol)),
            )
        }
        None => (None, None),
    };
    Ok(RunOutput { proposals, fused, classified, proposal_report, classified_report })
}
