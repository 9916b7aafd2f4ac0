//! Flag groups shared by several subcommands. Every field is optional and,
//! when present, overrides the value from `--config` or the defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use cptal_core::config::{ClassifierKind, ConfigError, RunConfig};
use cptal_core::keypoints::CameraView;
use cptal_core::scan::StatKind;

#[derive(Args, Debug, Clone, Default)]
pub struct IngestArgs {
    /// Frame rate of the keypoint files.
    #[arg(long)]
    pub fps: Option<f64>,
    #[arg(long)]
    pub frame_w: Option<f64>,
    #[arg(long)]
    pub frame_h: Option<f64>,
    /// Keypoints at or below this confidence are forward-filled.
    #[arg(long)]
    pub conf_threshold: Option<f64>,
    /// Use only this person id instead of the most confident detection.
    #[arg(long)]
    pub person: Option<u32>,
    /// Comma-separated COCO-17 indices to use as features.
    #[arg(long, value_delimiter = ',')]
    pub subset: Option<Vec<usize>>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct DetectionArgs {
    /// Detection sampling rate in Hz.
    #[arg(long)]
    pub sample_hz: Option<f64>,
    /// Number of spanning trees in the similarity graph.
    #[arg(long)]
    pub k: Option<usize>,
    /// Scan statistic: o, w, g or m.
    #[arg(long)]
    pub stat: Option<StatKind>,
    #[arg(long)]
    pub l0_frac: Option<f64>,
    #[arg(long)]
    pub l1_frac: Option<f64>,
    /// Permutations for the p-value.
    #[arg(long = "perm-b", alias = "permutations")]
    pub perm_b: Option<usize>,
    /// Significance level; 1 keeps every window's best interval.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub window_secs: Option<f64>,
    /// Start of the second, shifted window pass; 0 disables it.
    #[arg(long)]
    pub offset_secs: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct FusionArgs {
    /// Merge same-view proposals whose IoU reaches this value.
    #[arg(long)]
    pub merge_iou: Option<f64>,
    #[arg(long)]
    pub start_tol: Option<f64>,
    #[arg(long)]
    pub end_tol: Option<f64>,
    /// Views that must agree on an interval.
    #[arg(long)]
    pub min_views: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ClassifierArgs {
    /// mock or http.
    #[arg(long, value_parser = parse_kind)]
    pub classifier: Option<ClassifierKind>,
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Prompt template id (1, 2 or 3).
    #[arg(long)]
    pub template: Option<u8>,
    /// Mock only: probability of a wrong answer.
    #[arg(long)]
    pub error_rate: Option<f64>,
    #[arg(long)]
    pub timeout_s: Option<f64>,
    #[arg(long)]
    pub retries: Option<u32>,
    /// Media reference sent to the classifier; defaults to the video id.
    #[arg(long)]
    pub clip: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct EvalArgs {
    /// Start/end tolerance in seconds.
    #[arg(long)]
    pub tol: Option<f64>,
}

fn parse_kind(s: &str) -> Result<ClassifierKind, String> {
    match s {
        "mock" => Ok(ClassifierKind::Mock),
        "http" => Ok(ClassifierKind::Http),
        other => Err(format!("unknown classifier {other:?} (expected mock or http)")),
    }
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src.clone() {
            $dst = v;
        }
    };
}

impl IngestArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let c = &mut cfg.ingest;
        set!(c.fps, self.fps);
        set!(c.frame_w, self.frame_w);
        set!(c.frame_h, self.frame_h);
        set!(c.conf_threshold, self.conf_threshold);
        set!(c.subset, self.subset);
        if self.person.is_some() {
            c.person = self.person;
        }
    }
}

impl DetectionArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let c = &mut cfg.detection;
        set!(c.sample_hz, self.sample_hz);
        set!(c.k, self.k);
        set!(c.stat, self.stat);
        set!(c.l0_frac, self.l0_frac);
        set!(c.l1_frac, self.l1_frac);
        set!(c.perm_b, self.perm_b);
        set!(c.alpha, self.alpha);
        set!(c.window_secs, self.window_secs);
        set!(c.offset_secs, self.offset_secs);
    }
}

impl FusionArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let c = &mut cfg.fusion;
        set!(c.merge_iou, self.merge_iou);
        set!(c.start_tol_s, self.start_tol);
        set!(c.end_tol_s, self.end_tol);
        set!(c.min_views, self.min_views);
    }
}

impl ClassifierArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let c = &mut cfg.classifier;
        set!(c.kind, self.classifier);
        set!(c.template, self.template);
        set!(c.error_rate, self.error_rate);
        set!(c.timeout_s, self.timeout_s);
        set!(c.retries, self.retries);
        if self.endpoint.is_some() {
            c.endpoint = self.endpoint.clone();
        }
        if self.clip.is_some() {
            c.clip = self.clip.clone();
        }
    }
}

impl EvalArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        set!(cfg.evaluation.tol_s, self.tol);
    }
}

/// Load `--config` (TOML) or start from defaults.
pub fn base_config(path: Option<&Path>) -> cptal_core::Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = cptal_core::error::read_text(path)?;
    let cfg = toml::from_str(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

/// A `--views` entry: `VIEW=PATH`, or a bare path whose file name names the
/// view (`dash`, `rear`, `right`), or else the view at that position.
pub fn parse_view_arg(arg: &str, position: usize) -> (CameraView, PathBuf) {
    if let Some((label, path)) = arg.split_once('=') {
        if let Some(v) = CameraView::parse(label) {
            return (v, PathBuf::from(path));
        }
    }
    let path = PathBuf::from(arg);
    let stem = path.file_stem().map(|s| s.to_string_lossy().to_lowercase()).unwrap_or_default();
    let guess = if stem.contains("dash") {
        Some(CameraView::Dashboard)
    } else if stem.contains("rear") {
        Some(CameraView::Rearview)
    } else if stem.contains("right") || stem.contains("window") {
        Some(CameraView::RightWindow)
    } else {
        None
    };
    (guess.unwrap_or(CameraView::ALL[position % 3]), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn view_arguments() {
        assert_eq!(parse_view_arg("rearview=a.csv", 0), (CameraView::Rearview, PathBuf::from("a.csv")));
        assert_eq!(parse_view_arg("x/dash.csv", 2).0, CameraView::Dashboard);
        assert_eq!(parse_view_arg("x/right_window.csv", 0).0, CameraView::RightWindow);
        assert_eq!(parse_view_arg("cam.csv", 1).0, CameraView::Rearview);
    }

    #[test]
    fn overrides_only_touch_given_fields() {
        let mut cfg = RunConfig::default();
        DetectionArgs { k: Some(10), ..Default::default() }.apply(&mut cfg);
        assert_eq!(cfg.detection.k, 10);
        assert_eq!(cfg.detection.window_secs, 60.0);
    }
}
