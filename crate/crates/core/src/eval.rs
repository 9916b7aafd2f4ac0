//! Overlap score, tolerance rule and one-to-one matching against ground truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::classify::ActivityClass;
use crate::keypoints::IngestError;
use crate::pipeline::ActivityInterval;
use crate::Result;

/// Temporal IoU of two intervals given as `(start, end)`.
///
/// The denominator is the hull `max(ends) - min(starts)`, so disjoint
/// intervals score exactly 0.
pub fn overlap_score(g: (f64, f64), p: (f64, f64)) -> f64 {
    let inter = (g.1.min(p.1) - g.0.max(p.0)).max(0.0);
    let hull = g.1.max(p.1) - g.0.min(p.0);
    if hull <= 0.0 {
        return 0.0;
    }
    (inter / hull).clamp(0.0, 1.0)
}

/// Both endpoints of `p` lie within `tol_s` of the matching endpoint of `g`.
pub fn within_tolerance(g: (f64, f64), p: (f64, f64), tol_s: f64) -> bool {
    (p.0 - g.0).abs() <= tol_s && (p.1 - g.1).abs() <= tol_s
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub class_id: u8,
    pub start_s: f64,
    pub end_s: f64,
}

impl Annotation {
    pub fn span(&self) -> (f64, f64) {
        (self.start_s, self.end_s)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub video_id: String,
    pub activities: Vec<Annotation>,
}

/// Parse `video_id,class_id,start_s,end_s` (header required), one
/// [`GroundTruth`] per video in id order.
pub fn read_ground_truth<R: Read>(source: R) -> Result<Vec<GroundTruth>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(source);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_lowercase).collect();
    if header != ["video_id", "class_id", "start_s", "end_s"] {
        return Err(IngestError::MalformedRow {
            line: 1,
            reason: format!("expected header video_id,class_id,start_s,end_s, found {}", header.join(",")),
        }
        .into());
    }
    let mut videos: BTreeMap<String, Vec<Annotation>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let bad = |reason: String| IngestError::MalformedRow { line, reason };
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", rec.len())).into());
        }
        let class_id: u8 = rec[1].parse().map_err(|_| bad(format!("bad class id {:?}", &rec[1])))?;
        ActivityClass::from_id(class_id).map_err(|e| bad(e.to_string()))?;
        let start_s: f64 = rec[2].parse().map_err(|_| bad(format!("bad start {:?}", &rec[2])))?;
        let end_s: f64 = rec[3].parse().map_err(|_| bad(format!("bad end {:?}", &rec[3])))?;
        if !(start_s.is_finite() && end_s.is_finite() && start_s < end_s) {
            return Err(bad(format!("need start < end, got {start_s} and {end_s}")).into());
        }
        videos.entry(rec[0].to_string()).or_default().push(Annotation { class_id, start_s, end_s });
    }
    Ok(videos.into_iter().map(|(video_id, activities)| GroundTruth { video_id, activities }).collect())
}

pub fn write_ground_truth<W: Write>(truths: &[GroundTruth], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["video_id", "class_id", "start_s", "end_s"])?;
    for gt in truths {
        for a in &gt.activities {
            w.write_record([gt.video_id.clone(), a.class_id.to_string(), a.start_s.to_string(), a.end_s.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Intervals only; classes are ignored.
    Proposal,
    /// A prediction must also carry the ground truth's class.
    Classified,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTally {
    pub matched: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mode: EvalMode,
    pub matched: usize,
    pub total: usize,
    pub accuracy: f64,
    pub per_class: BTreeMap<u8, ClassTally>,
    /// Mean overlap score over matched pairs; 0 when nothing matched.
    pub mean_overlap: f64,
}

impl EvaluationReport {
    pub fn empty(mode: EvalMode) -> Self {
        Self { mode, matched: 0, total: 0, accuracy: 0.0, per_class: BTreeMap::new(), mean_overlap: 0.0 }
    }

    /// Combine per-video reports of the same mode.
    pub fn merge(reports: &[EvaluationReport], mode: EvalMode) -> Self {
        let mut out = Self::empty(mode);
        let mut overlap_sum = 0.0;
        for r in reports {
            out.matched += r.matched;
            out.total += r.total;
            overlap_sum += r.mean_overlap * r.matched as f64;
            for (&c, t) in &r.per_class {
                let e = out.per_class.entry(c).or_default();
                e.matched += t.matched;
                e.total += t.total;
            }
        }
        out.accuracy = ratio(out.matched, out.total);
        out.mean_overlap = if out.matched > 0 { overlap_sum / out.matched as f64 } else { 0.0 };
        out
    }

    /// Aligned text table: one row per class, then the total.
    pub fn to_table(&self) -> String {
        let mode = match self.mode {
            EvalMode::Proposal => "proposal",
            EvalMode::Classified => "classified",
        };
        let mut s = String::new();
        let _ = writeln!(s, "mode: {mode}");
        let _ = writeln!(s, "{:<34} {:>9} {:>7} {:>10}", "class", "accurate", "total", "accuracy%");
        for (&c, t) in &self.per_class {
            let name = ActivityClass::from_id(c).map_or("?", ActivityClass::name);
            let label = format!("{c:>2} {name}");
            let _ = writeln!(
                s,
                "{:<34} {:>9} {:>7} {:>10.1}",
                label,
                t.matched,
                t.total,
                100.0 * ratio(t.matched, t.total)
            );
        }
        let _ = writeln!(s, "{:<34} {:>9} {:>7} {:>10.1}", "all", self.matched, self.total, 100.0 * self.accuracy);
        let _ = writeln!(s, "mean overlap of matches: {:.4}", self.mean_overlap);
        s
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Match predictions to ground-truth activities one to one.
///
/// A prediction is a candidate for an activity when it belongs to the same
/// video, passes [`within_tolerance`], and in classified mode has the same
/// class. Pairs are taken greedily by descending overlap score (ties by
/// ground-truth order, then prediction order), so every activity ends up
/// with its best still-available candidate.
pub fn match_and_score(gt: &GroundTruth, preds: &[ActivityInterval], mode: EvalMode, tol_s: f64) -> EvaluationReport {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (gi, g) in gt.activities.iter().enumerate() {
        for (pi, p) in preds.iter().enumerate() {
            if p.video_id != gt.video_id {
                continue;
            }
            if mode == EvalMode::Classified && p.class_id != Some(g.class_id) {
                continue;
            }
            let span = (p.start_s, p.end_s);
            if within_tolerance(g.span(), span, tol_s) {
                pairs.push((overlap_score(g.span(), span), gi, pi));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut gt_used = vec![false; gt.activities.len()];
    let mut pred_used = vec![false; preds.len()];
    let mut overlap_sum = 0.0;
    let mut matched = 0;
    for (os, gi, pi) in pairs {
        if gt_used[gi] || pred_used[pi] {
            continue;
        }
        gt_used[gi] = true;
        pred_used[pi] = true;
        overlap_sum += os;
        matched += 1;
    }

    let mut per_class: BTreeMap<u8, ClassTally> = BTreeMap::new();
    for (g, used) in gt.activities.iter().zip(&gt_used) {
        let t = per_class.entry(g.class_id).or_default();
        t.total += 1;
        t.matched += usize::from(*used);
    }
    let total = gt.activities.len();
    EvaluationReport {
        mode,
        matched,
        total,
        accuracy: ratio(matched, total),
        per_class,
        mean_overlap: if matched > 0 { overlap_sum / matched as f64 } else { 0.0 },
    }
}

/// Score several videos and merge the reports.
pub fn evaluate_all(
    truths: &[GroundTruth],
    preds: &[ActivityInterval],
    mode: EvalMode,
    tol_s: f64,
) -> EvaluationReport {
    let reports: Vec<_> = truths.iter().map(|gt| match_and_score(gt, preds, mode, tol_s)).collect();
    EvaluationReport::merge(&reports, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::ViewTag;

    fn pred(s: f64, e: f64, class: Option<u8>) -> ActivityInterval {
        ActivityInterval {
            video_id: "v".into(),
            view: ViewTag::Fused,
            start_s: s,
            end_s: e,
            stat_value: 0.0,
            p_value: None,
            class_id: class,
            label: None,
        }
    }

    fn truth(items: &[(u8, f64, f64)]) -> GroundTruth {
        GroundTruth {
            video_id: "v".into(),
            activities: items
                .iter()
                .map(|&(class_id, start_s, end_s)| Annotation { class_id, start_s, end_s })
                .collect(),
        }
    }

    #[test]
    fn overlap_basics() {
        assert_eq!(overlap_score((1.0, 2.0), (1.0, 2.0)), 1.0);
        assert_eq!(overlap_score((1.0, 2.0), (3.0, 4.0)), 0.0);
        assert_eq!(overlap_score((1.0, 2.0), (2.0, 4.0)), 0.0);
        assert!((overlap_score((0.0, 4.0), (2.0, 6.0)) - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn tolerance_boundary() {
        let g = (236.0, 241.0);
        assert!(within_tolerance(g, g, 10.0));
        assert!(within_tolerance(g, (226.0, 241.0), 10.0));
        assert!(!within_tolerance(g, (225.0, 241.0), 10.0));
        assert!(!within_tolerance(g, (236.0, 251.5), 10.0));
    }

    #[test]
    fn perfect_predictions() {
        let gt = truth(&[(2, 10.0, 20.0), (5, 40.0, 55.0)]);
        let preds: Vec<_> = gt.activities.iter().map(|a| pred(a.start_s, a.end_s, Some(a.class_id))).collect();
        for mode in [EvalMode::Proposal, EvalMode::Classified] {
            let r = match_and_score(&gt, &preds, mode, 10.0);
            assert_eq!((r.matched, r.total), (2, 2));
            assert_eq!(r.accuracy, 1.0);
            assert_eq!(r.mean_overlap, 1.0);
        }
    }

    #[test]
    fn class_mismatch_only_counts_in_proposal_mode() {
        let gt = truth(&[(2, 10.0, 20.0)]);
        let preds = [pred(11.0, 19.0, Some(3))];
        assert_eq!(match_and_score(&gt, &preds, EvalMode::Proposal, 10.0).matched, 1);
        assert_eq!(match_and_score(&gt, &preds, EvalMode::Classified, 10.0).matched, 0);
    }

    #[test]
    fn one_prediction_serves_one_truth() {
        let gt = truth(&[(2, 10.0, 20.0), (3, 12.0, 22.0)]);
        let preds = [pred(11.0, 21.0, None)];
        let r = match_and_score(&gt, &preds, EvalMode::Proposal, 10.0);
        assert_eq!(r.matched, 1);
        assert_eq!(r.per_class[&2].matched + r.per_class[&3].matched, 1);
    }

    #[test]
    fn greedy_prefers_highest_overlap_pair() {
        // p0 fits g1 better than g0; g0 then takes p1.
        let gt = truth(&[(1, 10.0, 20.0), (1, 12.0, 22.0)]);
        let preds = [pred(12.0, 22.0, None), pred(9.0, 19.0, None)];
        let r = match_and_score(&gt, &preds, EvalMode::Proposal, 10.0);
        assert_eq!(r.matched, 2);
        let expected = (1.0 + 9.0 / 11.0) / 2.0;
        assert!((r.mean_overlap - expected).abs() < 1e-12);
    }

    #[test]
    fn other_videos_ignored() {
        let gt = truth(&[(2, 10.0, 20.0)]);
        let mut p = pred(10.0, 20.0, Some(2));
        p.video_id = "w".into();
        assert_eq!(match_and_score(&gt, &[p], EvalMode::Proposal, 10.0).matched, 0);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let truths = vec![
            GroundTruth {
                video_id: "a".into(),
                activities: vec![Annotation { class_id: 1, start_s: 0.1 + 0.2, end_s: 1.0 / 3.0 }],
            },
            GroundTruth {
                video_id: "b".into(),
                activities: vec![Annotation { class_id: 16, start_s: 236.0, end_s: 241.000000001 }],
            },
        ];
        let mut buf = Vec::new();
        write_ground_truth(&truths, &mut buf).unwrap();
        let back = read_ground_truth(buf.as_slice()).unwrap();
        assert_eq!(back, truths);
    }

    #[test]
    fn csv_rejects_bad_rows() {
        assert!(read_ground_truth("video_id,class_id,start_s,end_s\nv,17,1,2\n".as_bytes()).is_err());
        assert!(read_ground_truth("video_id,class_id,start_s,end_s\nv,1,3,2\n".as_bytes()).is_err());
        assert!(read_ground_truth("v,1,1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn merged_report_and_table() {
        let gt = truth(&[(2, 10.0, 20.0), (5, 40.0, 55.0)]);
        let a = match_and_score(&gt, &[pred(10.0, 20.0, None)], EvalMode::Proposal, 10.0);
        let m = EvaluationReport::merge(&[a.clone(), a], EvalMode::Proposal);
        assert_eq!((m.matched, m.total), (2, 4));
        assert_eq!(m.accuracy, 0.5);
        let table = m.to_table();
        assert!(table.contains(" 2 Drinking"));
        assert!(table.contains("50.0"));
    }
}
