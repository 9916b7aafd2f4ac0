//! Resolved run configuration: every knob of ingest, detection, fusion,
//! classification and evaluation in one serializable record.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::PromptTemplate;
use crate::detect::DetectionConfig;
use crate::keypoints::{validate_subset, Normalization, HEAD_HANDS_SUBSET};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid {field}: {msg}")]
    Invalid { field: &'static str, msg: String },
    #[error("cannot parse configuration: {0}")]
    Parse(String),
}

fn invalid(field: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, msg: msg.into() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Frame rate of the keypoint files.
    pub fps: f64,
    pub frame_w: f64,
    pub frame_h: f64,
    pub conf_threshold: f64,
    /// COCO-17 keypoint indices used as features.
    pub subset: Vec<usize>,
    /// Keep only this person id instead of the most confident detection.
    pub person: Option<u32>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            fps: 30.0,
            frame_w: 1920.0,
            frame_h: 1080.0,
            conf_threshold: 0.5,
            subset: HEAD_HANDS_SUBSET.to_vec(),
            person: None,
        }
    }
}

impl IngestConfig {
    pub fn normalization(&self) -> Normalization {
        Normalization {
            frame_w: self.frame_w,
            frame_h: self.frame_h,
            conf_threshold: self.conf_threshold,
            subset: self.subset.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(invalid("fps", format!("{} must be positive", self.fps)));
        }
        if !(self.frame_w > 0.0 && self.frame_h > 0.0) {
            return Err(invalid("frame_w/frame_h", "frame dimensions must be positive"));
        }
        if !(0.0..=1.0).contains(&self.conf_threshold) {
            return Err(invalid("conf_threshold", format!("{} not in [0, 1]", self.conf_threshold)));
        }
        validate_subset(&self.subset).map_err(|e| invalid("subset", e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Proposals from overlapping windows with IoU at or above this merge.
    pub merge_iou: f64,
    pub start_tol_s: f64,
    pub end_tol_s: f64,
    pub min_views: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { merge_iou: 0.3, start_tol_s: 2.0, end_tol_s: 2.0, min_views: 2 }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.merge_iou > 0.0 && self.merge_iou <= 1.0) {
            return Err(invalid("merge_iou", format!("{} not in (0, 1]", self.merge_iou)));
        }
        if !(self.start_tol_s >= 0.0 && self.end_tol_s >= 0.0) {
            return Err(invalid("start_tol_s/end_tol_s", "tolerances must be non-negative"));
        }
        if !(1..=3).contains(&self.min_views) {
            return Err(invalid("min_views", format!("{} not in 1..=3", self.min_views)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Mock,
    Http,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    pub endpoint: Option<String>,
    /// Prompt template id, 1 to 3.
    pub template: u8,
    /// Mock only: probability of answering with a wrong class.
    pub error_rate: f64,
    pub timeout_s: f64,
    pub retries: u32,
    /// Media reference sent to the service; defaults to the video id.
    pub clip: Option<String>,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            kind: ClassifierKind::Mock,
            endpoint: None,
            template: 3,
            error_rate: 0.0,
            timeout_s: 30.0,
            retries: 2,
            clip: None,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        PromptTemplate::from_id(self.template).map_err(|e| invalid("template", e.to_string()))?;
        if !(0.0..=1.0).contains(&self.error_rate) {
            return Err(invalid("error_rate", format!("{} not in [0, 1]", self.error_rate)));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(invalid("timeout_s", "must be positive"));
        }
        if self.kind == ClassifierKind::Http && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(invalid("endpoint", "required for the http classifier"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Start and end slack for a prediction to count as a match.
    pub tol_s: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { tol_s: 10.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub ingest: IngestConfig,
    pub detection: DetectionConfig,
    pub fusion: FusionConfig,
    pub classifier: ClassifierConfig,
    pub evaluation: EvalConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.ingest.validate()?;
        self.detection.validate()?;
        if self.detection.sample_hz > self.ingest.fps + 1e-9 {
            return Err(invalid(
                "sample_hz",
                format!("{} exceeds the input frame rate {}", self.detection.sample_hz, self.ingest.fps),
            ));
        }
        self.fusion.validate()?;
        self.classifier.validate()?;
        if self.evaluation.tol_s.is_nan() || self.evaluation.tol_s < 0.0 {
            return Err(invalid("tol_s", "must be non-negative"));
        }
        Ok(())
    }
}
