//! Single-window detection: distances, k-MST, scan, permutation gate.

use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::graph::{kmst, pairwise_distances, SimilarityGraph};
use crate::keypoints::SeriesWindow;
use crate::pipeline::{ActivityInterval, ViewTag};
use crate::rng::mix;
use crate::scan::{ScanError, ScanResult, Scanner, StatKind};
use crate::Result;

/// Smallest window any detection runs on.
pub const MIN_WINDOW_OBS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    /// Number of spanning trees in the similarity graph.
    pub k: usize,
    pub l0_frac: f64,
    pub l1_frac: f64,
    pub stat: StatKind,
    pub perm_b: usize,
    /// Significance gate; 1 keeps every window's maximizer.
    pub alpha: f64,
    pub sample_hz: f64,
    pub window_secs: f64,
    pub offset_secs: f64,
    pub seed: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            k: 26,
            l0_frac: 0.1,
            l1_frac: 0.9,
            stat: StatKind::MaxType,
            perm_b: 100,
            alpha: 0.05,
            sample_hz: 10.0,
            window_secs: 60.0,
            offset_secs: 30.0,
            seed: 0,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &'static str, msg: String| Err(ConfigError::Invalid { field, msg });
        if self.k == 0 {
            return bad("k", "must be at least 1".into());
        }
        if !(self.l0_frac > 0.0 && self.l0_frac < 1.0) {
            return bad("l0_frac", format!("{} not in (0, 1)", self.l0_frac));
        }
        if !(self.l1_frac > 0.0 && self.l1_frac < 1.0) {
            return bad("l1_frac", format!("{} not in (0, 1)", self.l1_frac));
        }
        if self.l0_frac > self.l1_frac {
            return bad("l0_frac", format!("l0_frac {} exceeds l1_frac {}", self.l0_frac, self.l1_frac));
        }
        if self.perm_b == 0 {
            return bad("perm_b", "must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha", format!("{} not in (0, 1]", self.alpha));
        }
        if !(self.sample_hz > 0.0 && self.sample_hz.is_finite()) {
            return bad("sample_hz", format!("{} must be positive", self.sample_hz));
        }
        if !(self.window_secs > 0.0 && self.window_secs.is_finite()) {
            return bad("window_secs", format!("{} must be positive", self.window_secs));
        }
        if !(self.offset_secs >= 0.0 && self.offset_secs < self.window_secs) {
            return bad("offset_secs", format!("{} not in [0, window_secs={})", self.offset_secs, self.window_secs));
        }
        Ok(())
    }

    /// Interval length bounds `(l0, l1)` for a window of `n` observations:
    /// `ceil(l0_frac n)` and `floor(l1_frac n)`, clamped to `[2, n - 2]`.
    pub fn length_bounds(&self, n: usize) -> (usize, usize) {
        let l0 = ((self.l0_frac * n as f64 - 1e-9).ceil() as usize).max(2);
        let l1 = ((self.l1_frac * n as f64 + 1e-9).floor() as usize).min(n.saturating_sub(2));
        (l0, l1)
    }

    /// Observations a window needs: at least [`MIN_WINDOW_OBS`] and `l0 + 4`.
    pub fn required_obs(&self, n: usize) -> usize {
        MIN_WINDOW_OBS.max(self.length_bounds(n).0 + 4)
    }

    /// Smallest window length that passes [`DetectionConfig::required_obs`]
    /// with valid length bounds.
    pub fn min_window_len(&self) -> usize {
        (MIN_WINDOW_OBS..)
            .find(|&n| {
                let (l0, l1) = self.length_bounds(n);
                n >= self.required_obs(n) && l0 <= l1
            })
            .expect("some window length is always admissible")
    }
}

/// Outcome of scanning one window, in window-local indices and in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub t1: usize,
    pub t2: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub stat_kind: StatKind,
    pub value: f64,
    pub p_value: f64,
}

impl Detection {
    /// Convert a window-local scan result to absolute seconds.
    pub fn from_scan(best: &ScanResult, start_s: f64, sample_hz: f64, p_value: f64) -> Self {
        Self {
            t1: best.t1,
            t2: best.t2,
            start_s: start_s + best.t1 as f64 / sample_hz,
            end_s: start_s + best.t2 as f64 / sample_hz,
            stat_kind: best.stat_kind,
            value: best.value,
            p_value,
        }
    }

    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

/// Build the window's similarity graph.
pub fn window_graph<R: AsRef<[f64]> + Sync>(rows: &[R], k: usize) -> Result<SimilarityGraph> {
    let dm = pairwise_distances(rows)?;
    Ok(kmst(&dm, k)?)
}

/// Scan one window of observations and compute its permutation p-value,
/// without applying the significance gate.
///
/// Times are `start_s + index / sample_hz`. Returns `Ok(None)` when no
/// candidate interval has a defined statistic.
pub fn scan_window<R: AsRef<[f64]> + Sync>(
    rows: &[R],
    start_s: f64,
    sample_hz: f64,
    cfg: &DetectionConfig,
    seed: u64,
) -> Result<Option<Detection>> {
    let n = rows.len();
    let required = cfg.required_obs(n);
    if n < required {
        return Err(ScanError::WindowTooShort { n, required }.into());
    }
    let (l0, l1) = cfg.length_bounds(n);
    let g = window_graph(rows, cfg.k)?;
    let scanner = Scanner::new(&g, l0, l1, cfg.stat)?;
    let best = match scanner.scan(&g) {
        Ok(r) => r,
        Err(ScanError::NoValidCandidate) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let p_value = scanner.permutation_pvalue(&g, best.value, cfg.perm_b, seed)?;
    Ok(Some(Detection::from_scan(&best, start_s, sample_hz, p_value)))
}

/// [`scan_window`] followed by the `p <= alpha` gate.
pub fn detect_rows<R: AsRef<[f64]> + Sync>(
    rows: &[R],
    start_s: f64,
    sample_hz: f64,
    cfg: &DetectionConfig,
    seed: u64,
) -> Result<Option<Detection>> {
    Ok(scan_window(rows, start_s, sample_hz, cfg, seed)?.filter(|d| d.significant(cfg.alpha)))
}

/// Permutation seed for one window; distinct per view and window position.
pub fn window_seed(cfg: &DetectionConfig, window: &SeriesWindow) -> u64 {
    let view_salt = window.series.view as u64 + 1;
    mix(mix(cfg.seed, view_salt), window.start_index as u64)
}

/// Detect at most one significant interval in a window.
pub fn detect(window: &SeriesWindow, cfg: &DetectionConfig) -> Result<Option<ActivityInterval>> {
    let s = &window.series;
    let found = detect_rows(&s.vectors, window.start_s, s.sample_hz, cfg, window_seed(cfg, window))?;
    Ok(found.map(|d| ActivityInterval {
        video_id: s.video_id.clone(),
        view: ViewTag::from(s.view),
        start_s: d.start_s,
        end_s: d.end_s,
        stat_value: d.value,
        p_value: Some(d.p_value),
        class_id: None,
        label: None,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bounds_for_minute_window() {
        let cfg = DetectionConfig::default();
        assert_eq!(cfg.length_bounds(600), (60, 540));
        assert_eq!(cfg.length_bounds(300), (30, 270));
        assert_eq!(cfg.length_bounds(20), (2, 18));
        assert_eq!(cfg.required_obs(600), 64);
        assert_eq!(cfg.min_window_len(), 20);
        let wide = DetectionConfig { l0_frac: 0.9, l1_frac: 0.95, ..Default::default() };
        assert!(wide.min_window_len() >= 40);
    }

    #[test]
    fn validation_catches_inverted_bounds() {
        let cfg = DetectionConfig { l0_frac: 0.9, l1_frac: 0.1, ..Default::default() };
        assert!(cfg.validate().is_err());
        assert!(DetectionConfig::default().validate().is_ok());
        assert!(DetectionConfig { offset_secs: 60.0, ..Default::default() }.validate().is_err());
        assert!(DetectionConfig { k: 0, ..Default::default() }.validate().is_err());
        assert!(DetectionConfig { alpha: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn index_to_seconds() {
        // t1 = 239, t2 = 260 at 10 Hz in a window starting at 180 s
        let best = ScanResult { t1: 239, t2: 260, stat_kind: StatKind::MaxType, value: 3.0, p_value: None };
        let d = Detection::from_scan(&best, 180.0, 10.0, 0.01);
        assert!((d.start_s - 203.9).abs() < 1e-9);
        assert!((d.end_s - 206.0).abs() < 1e-9);
    }

    #[test]
    fn short_window_rejected() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let err = scan_window(&rows, 0.0, 10.0, &DetectionConfig::default(), 1).unwrap_err();
        assert!(matches!(err, crate::Error::Scan(ScanError::WindowTooShort { n: 10, required: 20 })));
    }
}
