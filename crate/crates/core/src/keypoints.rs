//! Pose-keypoint ingestion: parsing, confidence filtering, normalization,
//! gap imputation, resampling and windowing.
//!
//! Input rows follow the COCO-17 keypoint order (see [`COCO_KEYPOINTS`]).
//! Two encodings are accepted and auto-detected from the first byte:
//!
//! - CSV with a header: `frame_index,person_id,kp0_x,kp0_y,kp0_c,...,kp16_c`
//! - JSON lines: `{"frame": 0, "person": 0, "keypoints": [[x, y, c], ...]}`

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_KEYPOINTS: usize = 17;

/// Columns in a keypoint CSV row: frame index, person id, then 17 triples.
pub const CSV_COLUMNS: usize = 2 + 3 * NUM_KEYPOINTS;

pub const COCO_KEYPOINTS: [&str; NUM_KEYPOINTS] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

/// Head and hand keypoints: nose, eyes, ears, shoulders, elbows, wrists.
pub const HEAD_HANDS_SUBSET: [usize; 11] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed keypoint row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("frame index decreases at line {line} ({previous} -> {found})")]
    NonMonotonicFrames { line: u64, previous: u64, found: u64 },
    #[error("resampling to {target_hz} Hz would upsample a {source_hz} Hz series")]
    UpsampleRequested { source_hz: f64, target_hz: f64 },
    #[error("series is empty")]
    EmptySeries,
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("invalid keypoint subset: {0}")]
    InvalidSubset(String),
    #[error("invalid sampling rate {0}")]
    InvalidRate(f64),
    #[error("i/o error while reading keypoints: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

/// One person's pose in one frame, as produced by the upstream pose model.
#[derive(Clone, Debug, PartialEq)]
pub struct RawKeypointFrame {
    pub frame_index: u64,
    pub person_id: u32,
    pub timestamp_s: f64,
    pub keypoints: [Keypoint; NUM_KEYPOINTS],
}

impl RawKeypointFrame {
    pub fn mean_confidence(&self) -> f64 {
        self.keypoints.iter().map(|k| k.confidence).sum::<f64>() / NUM_KEYPOINTS as f64
    }
}

/// Normalized `(x, y)` coordinates for the selected keypoints, flattened as
/// `[x0, y0, x1, y1, ...]`, with one mask entry per keypoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// `true` where the keypoint was observed in this frame, `false` where it
    /// was forward-filled.
    pub mask: Vec<bool>,
}

impl FeatureVector {
    pub fn zeros(keypoints: usize) -> Self {
        Self { values: vec![0.0; 2 * keypoints], mask: vec![false; keypoints] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraView {
    Dashboard,
    Rearview,
    RightWindow,
}

impl CameraView {
    pub const ALL: [CameraView; 3] = [CameraView::Dashboard, CameraView::Rearview, CameraView::RightWindow];

    pub fn as_str(self) -> &'static str {
        match self {
            CameraView::Dashboard => "dashboard",
            CameraView::Rearview => "rearview",
            CameraView::RightWindow => "right_window",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "dashboard" | "dash" => Some(CameraView::Dashboard),
            "rearview" | "rear" => Some(CameraView::Rearview),
            "right_window" | "rightwindow" | "right" => Some(CameraView::RightWindow),
            _ => None,
        }
    }
}

impl std::fmt::Display for CameraView {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Uniformly sampled sequence of feature vectors from one camera view.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypointSeries {
    pub video_id: String,
    pub view: CameraView,
    pub sample_hz: f64,
    pub vectors: Vec<FeatureVector>,
}

impl KeypointSeries {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.vectors.len() as f64 / self.sample_hz
    }

    /// Time stamp of observation `index`.
    pub fn time_of(&self, index: usize) -> f64 {
        index as f64 / self.sample_hz
    }
}

/// Confidence filtering and normalization parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub frame_w: f64,
    pub frame_h: f64,
    pub conf_threshold: f64,
    pub subset: Vec<usize>,
}

impl Default for Normalization {
    fn default() -> Self {
        Self { frame_w: 1920.0, frame_h: 1080.0, conf_threshold: 0.5, subset: HEAD_HANDS_SUBSET.to_vec() }
    }
}

pub fn validate_subset(subset: &[usize]) -> Result<(), IngestError> {
    if subset.is_empty() {
        return Err(IngestError::InvalidSubset("empty".into()));
    }
    for (i, &k) in subset.iter().enumerate() {
        if k >= NUM_KEYPOINTS {
            return Err(IngestError::InvalidSubset(format!("index {k} is not a COCO-17 keypoint")));
        }
        if subset[..i].contains(&k) {
            return Err(IngestError::InvalidSubset(format!("duplicate index {k}")));
        }
    }
    Ok(())
}

/// Parse a keypoint file (CSV or JSON lines), keeping the most confident
/// person per frame.
pub fn parse_keypoints<R: Read>(source: R, fps: f64) -> Result<Vec<RawKeypointFrame>, IngestError> {
    parse_keypoints_filtered(source, fps, None)
}

/// As [`parse_keypoints`], optionally restricted to one `person_id`.
pub fn parse_keypoints_filtered<R: Read>(
    source: R,
    fps: f64,
    person: Option<u32>,
) -> Result<Vec<RawKeypointFrame>, IngestError> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(IngestError::InvalidRate(fps));
    }
    let mut reader = BufReader::new(source);
    let first = loop {
        let buf = reader.fill_buf()?;
        if buf.is_empty() {
            break None;
        }
        match buf.iter().position(|b| !b.is_ascii_whitespace()) {
            Some(pos) => break Some(buf[pos]),
            None => {
                let len = buf.len();
                reader.consume(len);
            }
        }
    };
    let mut collector = FrameCollector::new(person);
    match first {
        None => {}
        Some(b'{') => parse_jsonl(reader, fps, &mut collector)?,
        Some(_) => parse_csv(reader, fps, &mut collector)?,
    }
    Ok(collector.finish())
}

/// Groups consecutive rows sharing a frame index and keeps one detection.
struct FrameCollector {
    person: Option<u32>,
    frames: Vec<RawKeypointFrame>,
    current: Option<RawKeypointFrame>,
}

impl FrameCollector {
    fn new(person: Option<u32>) -> Self {
        Self { person, frames: Vec::new(), current: None }
    }

    fn push(&mut self, line: u64, frame: RawKeypointFrame) -> Result<(), IngestError> {
        let last_index =
            self.current.as_ref().map(|f| f.frame_index).or_else(|| self.frames.last().map(|f| f.frame_index));
        if let Some(previous) = last_index {
            if frame.frame_index < previous {
                return Err(IngestError::NonMonotonicFrames { line, previous, found: frame.frame_index });
            }
        }
        if self.person.is_some_and(|p| p != frame.person_id) {
            return Ok(());
        }
        match self.current.take() {
            Some(cur) if cur.frame_index == frame.frame_index => {
                // Several people in one frame: keep the most confident detection.
                if frame.mean_confidence() > cur.mean_confidence() {
                    self.current = Some(frame);
                } else {
                    self.current = Some(cur);
                }
            }
            Some(cur) => {
                self.frames.push(cur);
                self.current = Some(frame);
            }
            None => self.current = Some(frame),
        }
        Ok(())
    }

    fn finish(mut self) -> Vec<RawKeypointFrame> {
        if let Some(cur) = self.current.take() {
            self.frames.push(cur);
        }
        self.frames
    }
}

fn malformed(line: u64, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedRow { line, reason: reason.into() }
}

fn keypoint_from(line: u64, idx: usize, x: f64, y: f64, c: f64) -> Result<Keypoint, IngestError> {
    if !(x.is_finite() && y.is_finite()) {
        return Err(malformed(line, format!("keypoint {idx} has non-finite coordinates")));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(malformed(line, format!("keypoint {idx} confidence {c} outside [0,1]")));
    }
    Ok(Keypoint { x, y, confidence: c })
}

fn parse_csv<R: Read>(reader: R, fps: f64, collector: &mut FrameCollector) -> Result<(), IngestError> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    if headers.get(0).is_some_and(|h| h.parse::<f64>().is_ok()) {
        return Err(malformed(1, "missing header row"));
    }
    if headers.len() != CSV_COLUMNS {
        return Err(malformed(1, format!("header has {} columns, expected {CSV_COLUMNS}", headers.len())));
    }
    let mut record = csv::StringRecord::new();
    loop {
        let more = csv.read_record(&mut record).map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        if !more {
            break;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != CSV_COLUMNS {
            return Err(malformed(line, format!("{} columns, expected {CSV_COLUMNS}", record.len())));
        }
        let frame_index: u64 =
            record[0].parse().map_err(|_| malformed(line, format!("bad frame_index {:?}", &record[0])))?;
        let person_id: u32 =
            record[1].parse().map_err(|_| malformed(line, format!("bad person_id {:?}", &record[1])))?;
        let mut keypoints = [Keypoint::default(); NUM_KEYPOINTS];
        for (i, kp) in keypoints.iter_mut().enumerate() {
            let mut vals = [0.0; 3];
            for (j, v) in vals.iter_mut().enumerate() {
                let field = &record[2 + 3 * i + j];
                *v = field.parse().map_err(|_| malformed(line, format!("non-numeric field {field:?}")))?;
            }
            *kp = keypoint_from(line, i, vals[0], vals[1], vals[2])?;
        }
        collector.push(
            line,
            RawKeypointFrame { frame_index, person_id, timestamp_s: frame_index as f64 / fps, keypoints },
        )?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct JsonFrame {
    frame: u64,
    #[serde(default)]
    person: u32,
    keypoints: Vec<Vec<f64>>,
}

fn parse_jsonl<R: BufRead>(reader: R, fps: f64, collector: &mut FrameCollector) -> Result<(), IngestError> {
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonFrame = serde_json::from_str(&line).map_err(|e| malformed(line_no, e.to_string()))?;
        if rec.keypoints.len() != NUM_KEYPOINTS {
            return Err(malformed(line_no, format!("{} keypoints, expected {NUM_KEYPOINTS}", rec.keypoints.len())));
        }
        let mut keypoints = [Keypoint::default(); NUM_KEYPOINTS];
        for (k, (slot, triple)) in keypoints.iter_mut().zip(&rec.keypoints).enumerate() {
            if triple.len() != 3 {
                return Err(malformed(line_no, format!("keypoint {k} is not an [x, y, c] triple")));
            }
            *slot = keypoint_from(line_no, k, triple[0], triple[1], triple[2])?;
        }
        collector.push(
            line_no,
            RawKeypointFrame {
                frame_index: rec.frame,
                person_id: rec.person,
                timestamp_s: rec.frame as f64 / fps,
                keypoints,
            },
        )?;
    }
    Ok(())
}

/// Write frames in the keypoint CSV format (header included).
pub fn write_keypoint_csv<W: Write>(frames: &[RawKeypointFrame], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["frame_index".to_string(), "person_id".to_string()];
    for k in 0..NUM_KEYPOINTS {
        header.push(format!("kp{k}_x"));
        header.push(format!("kp{k}_y"));
        header.push(format!("kp{k}_c"));
    }
    w.write_record(&header)?;
    for f in frames {
        let mut row = vec![f.frame_index.to_string(), f.person_id.to_string()];
        for kp in &f.keypoints {
            row.push(kp.x.to_string());
            row.push(kp.y.to_string());
            row.push(kp.confidence.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Normalize the selected keypoints of one frame by the frame size.
///
/// Keypoints with confidence at or below `conf_threshold` are forward-filled
/// from `previous` (or `(0, 0)` without history) and marked as imputed.
pub fn select_and_normalize(
    frame: &RawKeypointFrame,
    frame_w: f64,
    frame_h: f64,
    conf_threshold: f64,
    subset: &[usize],
    previous: Option<&FeatureVector>,
) -> FeatureVector {
    let mut values = Vec::with_capacity(2 * subset.len());
    let mut mask = Vec::with_capacity(subset.len());
    for (slot, &k) in subset.iter().enumerate() {
        let kp = frame.keypoints[k];
        if kp.confidence > conf_threshold {
            values.push(kp.x.clamp(0.0, frame_w) / frame_w);
            values.push(kp.y.clamp(0.0, frame_h) / frame_h);
            mask.push(true);
        } else {
            match previous {
                Some(prev) => {
                    values.push(prev.values[2 * slot]);
                    values.push(prev.values[2 * slot + 1]);
                }
                None => values.extend([0.0, 0.0]),
            }
            mask.push(false);
        }
    }
    FeatureVector { values, mask }
}

/// Build a uniformly spaced series at the source frame rate.
///
/// The series starts at frame 0; frames missing from `frames` (including a
/// leading gap) are forward-filled and fully marked as imputed.
pub fn build_series(
    frames: &[RawKeypointFrame],
    video_id: &str,
    view: CameraView,
    fps: f64,
    norm: &Normalization,
) -> Result<KeypointSeries, IngestError> {
    validate_subset(&norm.subset)?;
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(IngestError::InvalidRate(fps));
    }
    let last = frames.last().ok_or(IngestError::EmptySeries)?.frame_index;
    let total = usize::try_from(last).map_err(|_| IngestError::EmptySeries)? + 1;
    let s = norm.subset.len();
    let mut vectors: Vec<FeatureVector> = Vec::with_capacity(total);
    let mut it = frames.iter().peekable();
    for idx in 0..total as u64 {
        let prev = vectors.last();
        let next = match it.peek() {
            Some(f) if f.frame_index == idx => {
                let f = it.next().expect("peeked");
                select_and_normalize(f, norm.frame_w, norm.frame_h, norm.conf_threshold, &norm.subset, prev)
            }
            _ => match prev {
                Some(p) => FeatureVector { values: p.values.clone(), mask: vec![false; s] },
                None => FeatureVector::zeros(s),
            },
        };
        vectors.push(next);
    }
    Ok(KeypointSeries { video_id: video_id.to_string(), view, sample_hz: fps, vectors })
}

/// Downsample by keeping every `floor(source_hz / target_hz)`-th vector.
///
/// The output rate is `source_hz / step`, which equals `target_hz` whenever
/// the target divides the source rate.
pub fn resample(series: &KeypointSeries, target_hz: f64) -> Result<KeypointSeries, IngestError> {
    if !(target_hz > 0.0 && target_hz.is_finite()) {
        return Err(IngestError::InvalidRate(target_hz));
    }
    let ratio = series.sample_hz / target_hz;
    if ratio < 1.0 - 1e-9 {
        return Err(IngestError::UpsampleRequested { source_hz: series.sample_hz, target_hz });
    }
    let step = ((ratio + 1e-9).floor() as usize).max(1);
    Ok(KeypointSeries {
        video_id: series.video_id.clone(),
        view: series.view,
        sample_hz: series.sample_hz / step as f64,
        vectors: series.vectors.iter().step_by(step).cloned().collect(),
    })
}

/// One analysis window cut from a series.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesWindow {
    pub start_s: f64,
    /// Index of the first observation in the parent series.
    pub start_index: usize,
    pub series: KeypointSeries,
}

/// Cut back-to-back windows of `window_s` seconds starting at 0, plus a second
/// pass starting at `offset_s` when it is non-zero.
///
/// Windows with fewer than `min_len` observations (trailing partial windows)
/// are dropped.
pub fn window(
    series: &KeypointSeries,
    window_s: f64,
    offset_s: f64,
    min_len: usize,
) -> Result<Vec<SeriesWindow>, IngestError> {
    if !(window_s > 0.0 && window_s.is_finite()) {
        return Err(IngestError::InvalidWindow(format!("window length {window_s} must be positive")));
    }
    if !(0.0..window_s).contains(&offset_s) {
        return Err(IngestError::InvalidWindow(format!("offset {offset_s} must lie in [0, {window_s})")));
    }
    if series.is_empty() {
        return Err(IngestError::EmptySeries);
    }
    let n = series.len();
    let win = ((window_s * series.sample_hz).round() as usize).max(1);
    let off = (offset_s * series.sample_hz).round() as usize;
    let mut starts: Vec<usize> = (0..n).step_by(win).collect();
    if off > 0 {
        starts.extend((off..n).step_by(win));
    }
    Ok(starts
        .into_iter()
        .filter_map(|start| {
            let end = (start + win).min(n);
            (end - start >= min_len).then(|| SeriesWindow {
                start_s: series.time_of(start),
                start_index: start,
                series: KeypointSeries {
                    video_id: series.video_id.clone(),
                    view: series.view,
                    sample_hz: series.sample_hz,
                    vectors: series.vectors[start..end].to_vec(),
                },
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_header() -> String {
        let mut h = vec!["frame_index".to_string(), "person_id".to_string()];
        for k in 0..NUM_KEYPOINTS {
            h.extend([format!("kp{k}_x"), format!("kp{k}_y"), format!("kp{k}_c")]);
        }
        h.join(",")
    }

    fn csv_row(frame: u64, person: u32, triples: usize, conf: f64) -> String {
        let mut r = vec![frame.to_string(), person.to_string()];
        for _ in 0..triples {
            r.extend(["960".to_string(), "540".to_string(), conf.to_string()]);
        }
        r.join(",")
    }

    fn frame_with(conf: f64, x: f64, y: f64) -> RawKeypointFrame {
        RawKeypointFrame {
            frame_index: 0,
            person_id: 0,
            timestamp_s: 0.0,
            keypoints: [Keypoint { x, y, confidence: conf }; NUM_KEYPOINTS],
        }
    }

    #[test]
    fn parses_csv_row_fields() {
        let text = format!("{}\n{}\n", csv_header(), csv_row(0, 0, 17, 0.9));
        let frames = parse_keypoints(text.as_bytes(), 30.0).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].frame_index, 0);
        assert_eq!(frames[0].keypoints[0], Keypoint { x: 960.0, y: 540.0, confidence: 0.9 });
    }

    #[test]
    fn short_row_is_malformed() {
        let text = format!("{}\n{}\n{}\n", csv_header(), csv_row(0, 0, 17, 0.9), csv_row(1, 0, 16, 0.9));
        match parse_keypoints(text.as_bytes(), 30.0) {
            Err(IngestError::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected MalformedRow, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_missing_header_rejected() {
        let mut row = csv_row(0, 0, 17, 0.9);
        row = row.replacen("960", "abc", 1);
        let text = format!("{}\n{}\n", csv_header(), row);
        assert!(matches!(parse_keypoints(text.as_bytes(), 30.0), Err(IngestError::MalformedRow { line: 2, .. })));
        let text = format!("{}\n", csv_row(0, 0, 17, 0.9));
        assert!(matches!(parse_keypoints(text.as_bytes(), 30.0), Err(IngestError::MalformedRow { line: 1, .. })));
    }

    #[test]
    fn decreasing_frames_rejected() {
        let text = format!("{}\n{}\n{}\n", csv_header(), csv_row(5, 0, 17, 0.9), csv_row(4, 0, 17, 0.9));
        assert!(matches!(
            parse_keypoints(text.as_bytes(), 30.0),
            Err(IngestError::NonMonotonicFrames { previous: 5, found: 4, .. })
        ));
    }

    #[test]
    fn timestamps_follow_frame_rate() {
        let mut text = csv_header();
        for i in 0..1800 {
            text.push('\n');
            text.push_str(&csv_row(i, 0, 17, 0.9));
        }
        let frames = parse_keypoints(text.as_bytes(), 30.0).unwrap();
        assert_eq!(frames.len(), 1800);
        assert_eq!(frames[0].timestamp_s, 0.0);
        assert!((frames[1799].timestamp_s - 1799.0 / 30.0).abs() < 1e-12);
        assert!((frames[1799].timestamp_s - 59.966).abs() < 1e-3);
    }

    #[test]
    fn keeps_most_confident_person_or_filtered_one() {
        let text = format!(
            "{}\n{}\n{}\n{}\n",
            csv_header(),
            csv_row(0, 0, 17, 0.3),
            csv_row(0, 1, 17, 0.8),
            csv_row(1, 0, 17, 0.6)
        );
        let frames = parse_keypoints(text.as_bytes(), 30.0).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].person_id, 1);
        let frames = parse_keypoints_filtered(text.as_bytes(), 30.0, Some(0)).unwrap();
        assert_eq!(frames.iter().map(|f| f.person_id).collect::<Vec<_>>(), vec![0, 0]);
        assert_eq!(frames[0].keypoints[0].confidence, 0.3);
    }

    #[test]
    fn parses_json_lines() {
        let kps: Vec<[f64; 3]> = (0..17).map(|i| [i as f64, 2.0 * i as f64, 0.75]).collect();
        let line0 = serde_json::json!({"frame": 0, "person": 0, "keypoints": kps}).to_string();
        let line1 = serde_json::json!({"frame": 2, "person": 0, "keypoints": kps}).to_string();
        let text = format!("{line0}\n\n{line1}\n");
        let frames = parse_keypoints(text.as_bytes(), 10.0).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[1].timestamp_s, 0.2);
        assert_eq!(frames[1].keypoints[3], Keypoint { x: 3.0, y: 6.0, confidence: 0.75 });

        let bad = serde_json::json!({"frame": 0, "keypoints": &kps[..16]}).to_string();
        assert!(matches!(parse_keypoints(bad.as_bytes(), 10.0), Err(IngestError::MalformedRow { line: 1, .. })));
    }

    #[test]
    fn csv_writer_roundtrips() {
        let mut f = frame_with(0.9, 100.5, 20.25);
        f.frame_index = 3;
        f.timestamp_s = 0.1;
        let mut buf = Vec::new();
        write_keypoint_csv(std::slice::from_ref(&f), &mut buf).unwrap();
        let back = parse_keypoints(buf.as_slice(), 30.0).unwrap();
        assert_eq!(back, vec![f]);
    }

    #[test]
    fn midpoint_normalizes_to_half() {
        let v = select_and_normalize(&frame_with(0.9, 960.0, 540.0), 1920.0, 1080.0, 0.5, &[0], None);
        assert_eq!(v.values, vec![0.5, 0.5]);
        assert_eq!(v.mask, vec![true]);
    }

    #[test]
    fn low_confidence_is_forward_filled() {
        let prev = FeatureVector { values: vec![0.25, 0.75], mask: vec![true] };
        let v = select_and_normalize(&frame_with(0.49, 960.0, 540.0), 1920.0, 1080.0, 0.5, &[0], Some(&prev));
        assert_eq!(v.values, vec![0.25, 0.75]);
        assert_eq!(v.mask, vec![false]);
        // exactly at the threshold is not "greater than"
        let v = select_and_normalize(&frame_with(0.5, 960.0, 540.0), 1920.0, 1080.0, 0.5, &[0], Some(&prev));
        assert_eq!(v.mask, vec![false]);
    }

    #[test]
    fn first_frame_without_confidence_is_zero() {
        let v = select_and_normalize(&frame_with(0.0, 960.0, 540.0), 1920.0, 1080.0, 0.5, &HEAD_HANDS_SUBSET, None);
        assert_eq!(v.values, vec![0.0; 22]);
        assert!(v.mask.iter().all(|m| !m));
    }

    #[test]
    fn out_of_frame_coordinates_are_clamped() {
        let v = select_and_normalize(&frame_with(0.9, 2500.0, -4.0), 1920.0, 1080.0, 0.5, &[3], None);
        assert_eq!(v.values, vec![1.0, 0.0]);
    }

    #[test]
    fn build_series_fills_gaps() {
        let mut a = frame_with(0.9, 960.0, 540.0);
        a.frame_index = 1;
        let mut b = frame_with(0.9, 480.0, 270.0);
        b.frame_index = 4;
        let s = build_series(
            &[a, b],
            "v",
            CameraView::Dashboard,
            30.0,
            &Normalization { subset: vec![0, 1], ..Default::default() },
        )
        .unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s.vectors[0], FeatureVector::zeros(2));
        assert_eq!(s.vectors[1].values, vec![0.5, 0.5, 0.5, 0.5]);
        assert_eq!(s.vectors[2].values, vec![0.5, 0.5, 0.5, 0.5]);
        assert_eq!(s.vectors[3].mask, vec![false, false]);
        assert_eq!(s.vectors[4].values, vec![0.25, 0.25, 0.25, 0.25]);
        assert!(matches!(
            build_series(&[], "v", CameraView::Dashboard, 30.0, &Normalization::default()),
            Err(IngestError::EmptySeries)
        ));
    }

    fn series_of(n: usize, hz: f64) -> KeypointSeries {
        KeypointSeries {
            video_id: "v".into(),
            view: CameraView::Rearview,
            sample_hz: hz,
            vectors: (0..n)
                .map(|i| FeatureVector { values: vec![i as f64 / n as f64, 0.0], mask: vec![true] })
                .collect(),
        }
    }

    #[test]
    fn resample_keeps_every_third() {
        let s = series_of(1800, 30.0);
        let r = resample(&s, 10.0).unwrap();
        assert_eq!(r.len(), 600);
        assert_eq!(r.sample_hz, 10.0);
        assert_eq!(r.vectors[1], s.vectors[3]);
        assert_eq!(r.view, CameraView::Rearview);
        assert_eq!(resample(&s, 30.0).unwrap(), s);
        assert!(matches!(resample(&s, 60.0), Err(IngestError::UpsampleRequested { .. })));
    }

    #[test]
    fn window_grid_with_offset_pass() {
        let s = series_of(2400, 10.0);
        let w = window(&s, 60.0, 30.0, 20).unwrap();
        let starts: Vec<f64> = w.iter().map(|w| w.start_s).collect();
        assert_eq!(starts, vec![0.0, 60.0, 120.0, 180.0, 30.0, 90.0, 150.0, 210.0]);
        assert_eq!(w[7].series.len(), 300);
        assert_eq!(w[0].series.len(), 600);

        let w = window(&s, 600.0, 0.0, 20).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].series, s);

        let w = window(&s, 60.0, 0.0, 20).unwrap();
        assert_eq!(w.len(), 4);
    }

    #[test]
    fn window_drops_short_tail_and_validates() {
        let s = series_of(610, 10.0);
        let w = window(&s, 60.0, 0.0, 20).unwrap();
        assert_eq!(w.len(), 1);
        assert!(matches!(window(&s, 60.0, 60.0, 20), Err(IngestError::InvalidWindow(_))));
        assert!(matches!(window(&s, 0.0, 0.0, 20), Err(IngestError::InvalidWindow(_))));
        assert!(matches!(window(&series_of(0, 10.0), 60.0, 0.0, 20), Err(IngestError::EmptySeries)));
    }
}
