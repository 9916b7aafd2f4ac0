//! Synthetic observation matrices and multi-view scenarios with known
//! activity intervals.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{Annotation, GroundTruth};
use crate::keypoints::{CameraView, FeatureVector, Keypoint, KeypointSeries, RawKeypointFrame, NUM_KEYPOINTS};
use crate::rng::{mix, stream_rng};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("activities {first} and {second} overlap")]
    OverlappingActivities { first: usize, second: usize },
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
}

/// `n` rows of `dim` i.i.d. standard normal draws.
pub fn gen_null(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, 0);
    (0..n).map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

/// [`gen_null`] with `shift` added to rows `t1..t2` (the interval `(t1, t2]`
/// in 1-based terms).
pub fn gen_planted(
    n: usize,
    dim: usize,
    t1: usize,
    t2: usize,
    shift: &[f64],
    seed: u64,
) -> Result<Vec<Vec<f64>>, SynthError> {
    if !(t1 < t2 && t2 <= n) {
        return Err(SynthError::InvalidSpec(format!("need t1 < t2 <= n, got {t1}, {t2}, {n}")));
    }
    if shift.len() != dim {
        return Err(SynthError::InvalidSpec(format!("shift has {} entries, dim is {dim}", shift.len())));
    }
    let mut rows = gen_null(n, dim, seed);
    for row in &mut rows[t1..t2] {
        for (v, s) in row.iter_mut().zip(shift) {
            *v += s;
        }
    }
    Ok(rows)
}

/// How an activity changes the feature distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alteration {
    /// Added to the latent mean of every feature.
    Shift(Vec<f64>),
    /// Multiplies the noise standard deviation.
    CovarianceScale(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedActivity {
    pub class_id: u8,
    pub start_s: f64,
    pub end_s: f64,
    pub alteration: Alteration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub video_id: String,
    pub n_seconds: f64,
    pub sample_hz: f64,
    /// Feature dimension: twice the number of keypoints carrying signal.
    pub dim: usize,
    pub activities: Vec<PlantedActivity>,
    pub noise_sd: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    /// One activity per 60 s slot, 12.1 to 30 s long and at least 10 s apart.
    /// Classes are drawn without replacement while possible.
    pub fn random(video_id: &str, n_activities: usize, seed: u64) -> Self {
        const SLOT_S: f64 = 60.0;
        let dim = 22;
        let mut rng = stream_rng(seed, 1);
        let mut classes: Vec<u8> = Vec::new();
        while classes.len() < n_activities {
            let mut deck: Vec<u8> = (1..=16).collect();
            deck.shuffle(&mut rng);
            classes.extend(deck);
        }
        let activities = (0..n_activities)
            .map(|i| {
                // Tenths of a second keep annotations readable.
                let dur = rng.random_range(121..=300u32);
                let offset = rng.random_range(50..=(550 - dur));
                let start = (SLOT_S as u32 * 10 * i as u32 + offset) as f64 / 10.0;
                let end = start + dur as f64 / 10.0;
                let alteration = if rng.random_bool(0.8) {
                    Alteration::Shift((0..dim).map(|_| if rng.random_bool(0.5) { 1.5 } else { -1.5 }).collect())
                } else {
                    Alteration::CovarianceScale(3.0)
                };
                PlantedActivity { class_id: classes[i], start_s: start, end_s: end, alteration }
            })
            .collect();
        Self {
            video_id: video_id.to_string(),
            n_seconds: SLOT_S * n_activities.max(1) as f64,
            sample_hz: 30.0,
            dim,
            activities,
            noise_sd: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if !(self.n_seconds > 0.0 && self.n_seconds.is_finite()) {
            return bad(format!("n_seconds {} must be positive", self.n_seconds));
        }
        if !(self.sample_hz > 0.0 && self.sample_hz.is_finite()) {
            return bad(format!("sample_hz {} must be positive", self.sample_hz));
        }
        if self.dim == 0 || !self.dim.is_multiple_of(2) || self.dim > 2 * NUM_KEYPOINTS {
            return bad(format!("dim {} must be even and in 2..={}", self.dim, 2 * NUM_KEYPOINTS));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd {} must be positive", self.noise_sd));
        }
        for (i, a) in self.activities.iter().enumerate() {
            if !(1..=16).contains(&a.class_id) {
                return bad(format!("activity {i}: class {} not in 1..=16", a.class_id));
            }
            if !(0.0 <= a.start_s && a.start_s < a.end_s && a.end_s <= self.n_seconds) {
                return bad(format!("activity {i}: [{}, {}] outside [0, {}]", a.start_s, a.end_s, self.n_seconds));
            }
            match &a.alteration {
                Alteration::Shift(v) if v.len() != self.dim => {
                    return bad(format!("activity {i}: shift has {} entries, dim is {}", v.len(), self.dim));
                }
                Alteration::CovarianceScale(s) if !(*s > 0.0 && s.is_finite()) => {
                    return bad(format!("activity {i}: covariance scale {s} must be positive"));
                }
                _ => {}
            }
        }
        let mut order: Vec<usize> = (0..self.activities.len()).collect();
        order.sort_by(|&a, &b| self.activities[a].start_s.total_cmp(&self.activities[b].start_s));
        for w in order.windows(2) {
            let (a, b) = (&self.activities[w[0]], &self.activities[w[1]]);
            if b.start_s < a.end_s {
                return Err(SynthError::OverlappingActivities { first: w[0].min(w[1]), second: w[0].max(w[1]) });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub views: Vec<KeypointSeries>,
    pub ground_truth: GroundTruth,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Three synchronized views sharing the activity signal.
///
/// Each feature is `sigmoid(view_offset + signal + noise)`: the offset is a
/// fixed per-view, per-feature constant, the signal is the active shift (or
/// zero), and the noise is independent per view with the activity's scale
/// applied.
pub fn gen_scenario(spec: &ScenarioSpec) -> Result<Scenario, SynthError> {
    spec.validate()?;
    let n = (spec.n_seconds * spec.sample_hz).round() as usize;
    // Per-observation activity index, shared by all views.
    let mut active: Vec<Option<usize>> = vec![None; n];
    for (i, a) in spec.activities.iter().enumerate() {
        let lo = (a.start_s * spec.sample_hz).round() as usize;
        let hi = ((a.end_s * spec.sample_hz).round() as usize).min(n);
        for slot in &mut active[lo..hi] {
            *slot = Some(i);
        }
    }
    let views = CameraView::ALL
        .iter()
        .map(|&view| {
            let mut rng = stream_rng(mix(spec.seed, view as u64 + 1), 0);
            let offsets: Vec<f64> = (0..spec.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let vectors = active
                .iter()
                .map(|act| {
                    let alt = act.map(|i| &spec.activities[i].alteration);
                    let scale = match alt {
                        Some(Alteration::CovarianceScale(s)) => *s,
                        _ => 1.0,
                    };
                    let values = (0..spec.dim)
                        .map(|j| {
                            let eps: f64 = rng.sample(StandardNormal);
                            let shift = match alt {
                                Some(Alteration::Shift(v)) => v[j],
                                _ => 0.0,
                            };
                            sigmoid(offsets[j] + shift + spec.noise_sd * scale * eps)
                        })
                        .collect();
                    FeatureVector { values, mask: vec![true; spec.dim / 2] }
                })
                .collect();
            KeypointSeries { video_id: spec.video_id.clone(), view, sample_hz: spec.sample_hz, vectors }
        })
        .collect();
    let mut activities: Vec<Annotation> = spec
        .activities
        .iter()
        .map(|a| Annotation { class_id: a.class_id, start_s: a.start_s, end_s: a.end_s })
        .collect();
    activities.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    Ok(Scenario { views, ground_truth: GroundTruth { video_id: spec.video_id.clone(), activities } })
}

/// Express a series as keypoint frames: feature pairs become keypoints
/// `0, 1, ...` in pixel units with confidence 1; the rest are zero with
/// confidence 0.
pub fn series_to_frames(series: &KeypointSeries, frame_w: f64, frame_h: f64) -> Vec<RawKeypointFrame> {
    series
        .vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut keypoints = [Keypoint::default(); NUM_KEYPOINTS];
            for (k, xy) in v.values.chunks_exact(2).enumerate().take(NUM_KEYPOINTS) {
                keypoints[k] = Keypoint { x: xy[0] * frame_w, y: xy[1] * frame_h, confidence: 1.0 };
            }
            RawKeypointFrame { frame_index: i as u64, person_id: 0, timestamp_s: series.time_of(i), keypoints }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_is_deterministic() {
        assert_eq!(gen_null(50, 3, 9), gen_null(50, 3, 9));
        assert_ne!(gen_null(50, 3, 9), gen_null(50, 3, 10));
    }

    #[test]
    fn null_column_means_near_zero() {
        let rows = gen_null(10_000, 4, 1);
        for j in 0..4 {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64;
            assert!(mean.abs() < 0.05, "column {j} mean {mean}");
        }
    }

    #[test]
    fn planted_shift_is_visible() {
        let shift = vec![2.0, -1.0];
        let rows = gen_planted(4000, 2, 1000, 3000, &shift, 4).unwrap();
        for (j, &s) in shift.iter().enumerate() {
            let inside = rows[1000..3000].iter().map(|r| r[j]).sum::<f64>() / 2000.0;
            let outside = rows[..1000].iter().chain(&rows[3000..]).map(|r| r[j]).sum::<f64>() / 2000.0;
            assert!((inside - outside - s).abs() < 0.15);
        }
        let zero = gen_planted(30, 2, 5, 10, &[0.0, 0.0], 4).unwrap();
        assert_eq!(zero, gen_null(30, 2, 4));
        assert!(gen_planted(30, 2, 10, 5, &[0.0, 0.0], 4).is_err());
        assert!(gen_planted(30, 2, 5, 10, &[0.0], 4).is_err());
    }

    #[test]
    fn overlapping_activities_rejected() {
        let mut spec = ScenarioSpec::random("v", 2, 3);
        spec.activities[1].start_s = spec.activities[0].end_s - 1.0;
        spec.activities[1].end_s = spec.activities[1].start_s + 5.0;
        assert_eq!(gen_scenario(&spec).unwrap_err(), SynthError::OverlappingActivities { first: 0, second: 1 });
    }

    #[test]
    fn random_spec_is_valid_and_spaced() {
        for seed in 0..50 {
            let spec = ScenarioSpec::random("v", 10, seed);
            spec.validate().unwrap();
            for w in spec.activities.windows(2) {
                assert!(w[1].start_s - w[0].end_s >= 10.0 - 1e-9);
            }
            for a in &spec.activities {
                assert!(a.end_s - a.start_s > 10.0);
            }
        }
    }

    #[test]
    fn empty_scenario_is_noise() {
        let spec = ScenarioSpec { activities: vec![], n_seconds: 5.0, ..ScenarioSpec::random("v", 0, 1) };
        let sc = gen_scenario(&spec).unwrap();
        assert!(sc.ground_truth.activities.is_empty());
        assert_eq!(sc.views.len(), 3);
        for v in &sc.views {
            assert_eq!(v.len(), 150);
            assert!(v.vectors.iter().flat_map(|f| &f.values).all(|&x| x > 0.0 && x < 1.0));
        }
    }

    #[test]
    fn frames_carry_features() {
        let spec = ScenarioSpec { n_seconds: 1.0, activities: vec![], ..ScenarioSpec::random("v", 0, 2) };
        let sc = gen_scenario(&spec).unwrap();
        let frames = series_to_frames(&sc.views[0], 1920.0, 1080.0);
        assert_eq!(frames.len(), 30);
        let v = &sc.views[0].vectors[3].values;
        assert_eq!(frames[3].keypoints[1].x, v[2] * 1920.0);
        assert_eq!(frames[3].keypoints[10].confidence, 1.0);
        assert_eq!(frames[3].keypoints[11].confidence, 0.0);
    }
}
