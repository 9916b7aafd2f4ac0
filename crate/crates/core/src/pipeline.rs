//! Window sweeps, proposal de-duplication and multi-view fusion.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{detect, DetectionConfig};
use crate::eval::overlap_score;
use crate::keypoints::{window, CameraView, IngestError, KeypointSeries};
use crate::Result;

/// Camera view of a proposal, or `Fused` for the multi-view consensus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewTag {
    Dashboard,
    Rearview,
    RightWindow,
    Fused,
}

impl ViewTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ViewTag::Dashboard => "dashboard",
            ViewTag::Rearview => "rearview",
            ViewTag::RightWindow => "right_window",
            ViewTag::Fused => "fused",
        }
    }
}

impl From<CameraView> for ViewTag {
    fn from(v: CameraView) -> Self {
        match v {
            CameraView::Dashboard => ViewTag::Dashboard,
            CameraView::Rearview => ViewTag::Rearview,
            CameraView::RightWindow => ViewTag::RightWindow,
        }
    }
}

/// A detected (and possibly classified) activity interval in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityInterval {
    pub video_id: String,
    pub view: ViewTag,
    pub start_s: f64,
    pub end_s: f64,
    pub stat_value: f64,
    pub p_value: Option<f64>,
    pub class_id: Option<u8>,
    pub label: Option<String>,
}

impl ActivityInterval {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn iou(&self, other: &ActivityInterval) -> f64 {
        overlap_score((self.start_s, self.end_s), (other.start_s, other.end_s))
    }
}

/// Detect in every window of both passes (offset 0 and `offset_secs`).
///
/// Windows run in parallel; the output keeps window order (first pass, then
/// the offset pass).
pub fn sweep(series: &KeypointSeries, cfg: &DetectionConfig) -> Result<Vec<ActivityInterval>> {
    let windows = window(series, cfg.window_secs, cfg.offset_secs, cfg.min_window_len())?;
    let found = windows
        .par_iter()
        .filter(|w| {
            let n = w.series.len();
            let (l0, l1) = cfg.length_bounds(n);
            n >= cfg.required_obs(n) && l0 <= l1
        })
        .map(|w| detect(w, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(found.into_iter().flatten().collect())
}

fn p_or_one(p: Option<f64>) -> f64 {
    p.unwrap_or(f64::INFINITY)
}

/// Representative order: smallest p-value, then larger statistic, then
/// earlier start (and earlier end).
fn better_representative(a: &ActivityInterval, b: &ActivityInterval) -> std::cmp::Ordering {
    p_or_one(a.p_value)
        .total_cmp(&p_or_one(b.p_value))
        .then(b.stat_value.total_cmp(&a.stat_value))
        .then(a.start_s.total_cmp(&b.start_s))
        .then(a.end_s.total_cmp(&b.end_s))
}

/// Collapse proposals of the same video whose temporal IoU reaches
/// `iou_min`.
///
/// Clusters are single-link: chains of overlapping proposals merge into one.
/// Each cluster keeps its best member; output is sorted by start time and
/// any two outputs of one video have IoU below `iou_min`.
pub fn merge_proposals(proposals: &[ActivityInterval], iou_min: f64) -> Vec<ActivityInterval> {
    let n = proposals.len();
    let mut cluster: Vec<usize> = (0..n).collect();
    fn root(c: &mut [usize], mut x: usize) -> usize {
        while c[x] != x {
            c[x] = c[c[x]];
            x = c[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if proposals[i].video_id == proposals[j].video_id && proposals[i].iou(&proposals[j]) >= iou_min {
                let (a, b) = (root(&mut cluster, i), root(&mut cluster, j));
                if a != b {
                    cluster[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..n {
        let r = root(&mut cluster, i);
        best.entry(r)
            .and_modify(|cur| {
                if better_representative(&proposals[i], &proposals[*cur]).is_lt() {
                    *cur = i;
                }
            })
            .or_insert(i);
    }
    let mut out: Vec<ActivityInterval> = best.values().map(|&i| proposals[i].clone()).collect();
    out.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.end_s.total_cmp(&b.end_s)));
    out
}

/// Keep intervals that at least `min_views` camera views agree on.
///
/// Proposals are visited in time order as anchors. For each unused anchor,
/// every other view contributes its closest unused proposal from the same
/// video whose start and end lie within the tolerances of the anchor's. A group spanning at least
/// `min_views` views is consumed and emitted with averaged endpoints.
pub fn fuse_views(
    per_view: &BTreeMap<CameraView, Vec<ActivityInterval>>,
    start_tol_s: f64,
    end_tol_s: f64,
    min_views: usize,
) -> Vec<ActivityInterval> {
    let all: Vec<(CameraView, &ActivityInterval)> =
        per_view.iter().flat_map(|(&v, list)| list.iter().map(move |p| (v, p))).collect();
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (all[i].1, all[j].1);
        a.start_s
            .total_cmp(&b.start_s)
            .then(a.end_s.total_cmp(&b.end_s))
            .then(better_representative(a, b))
            .then(all[i].0.cmp(&all[j].0))
    });

    let mut used = vec![false; all.len()];
    let mut fused = Vec::new();
    for &anchor in &order {
        if used[anchor] {
            continue;
        }
        let (anchor_view, a) = all[anchor];
        let mut group = vec![anchor];
        for &view in per_view.keys().filter(|&&v| v != anchor_view) {
            let pick = (0..all.len())
                .filter(|&i| !used[i] && all[i].0 == view && all[i].1.video_id == a.video_id)
                .filter(|&i| {
                    let p = all[i].1;
                    (p.start_s - a.start_s).abs() <= start_tol_s && (p.end_s - a.end_s).abs() <= end_tol_s
                })
                .min_by(|&i, &j| {
                    let gap = |p: &ActivityInterval| (p.start_s - a.start_s).abs() + (p.end_s - a.end_s).abs();
                    let (p, q) = (all[i].1, all[j].1);
                    gap(p)
                        .total_cmp(&gap(q))
                        .then(p.start_s.total_cmp(&q.start_s))
                        .then(p.end_s.total_cmp(&q.end_s))
                        .then(better_representative(p, q))
                });
            if let Some(i) = pick {
                group.push(i);
            }
        }
        if group.len() < min_views {
            continue;
        }
        for &i in &group {
            used[i] = true;
        }
        let members: Vec<&ActivityInterval> = group.iter().map(|&i| all[i].1).collect();
        let k = members.len() as f64;
        let mean = |f: fn(&ActivityInterval) -> f64| {
            // Sorted offsets from the minimum: independent of which view was
            // the anchor, and exact when all members agree.
            let mut xs: Vec<f64> = members.iter().map(|p| f(p)).collect();
            xs.sort_by(f64::total_cmp);
            xs[0] + xs.iter().map(|x| x - xs[0]).sum::<f64>() / k
        };
        fused.push(ActivityInterval {
            video_id: a.video_id.clone(),
            view: ViewTag::Fused,
            start_s: mean(|p| p.start_s),
            end_s: mean(|p| p.end_s),
            stat_value: mean(|p| p.stat_value),
            p_value: members.iter().filter_map(|p| p.p_value).reduce(f64::max),
            class_id: None,
            label: None,
        });
    }
    fused.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.end_s.total_cmp(&b.end_s)));
    fused
}

/// Proposal file: the resolved configuration next to the intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalFile {
    pub config: serde_json::Value,
    pub intervals: Vec<ActivityInterval>,
}

/// Read intervals from either an [`IntervalFile`] or a bare JSON array.
pub fn read_intervals_json(text: &str) -> Result<Vec<ActivityInterval>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Either {
        File(IntervalFile),
        Bare(Vec<ActivityInterval>),
    }
    Ok(match serde_json::from_str(text)? {
        Either::File(f) => f.intervals,
        Either::Bare(v) => v,
    })
}

/// CSV form: `video_id,view,start_s,end_s,stat,p,class_id`.
pub fn write_intervals_csv<W: Write>(intervals: &[ActivityInterval], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["video_id", "view", "start_s", "end_s", "stat", "p", "class_id"])?;
    for iv in intervals {
        w.write_record([
            iv.video_id.clone(),
            iv.view.as_str().to_string(),
            iv.start_s.to_string(),
            iv.end_s.to_string(),
            iv.stat_value.to_string(),
            iv.p_value.map(|p| p.to_string()).unwrap_or_default(),
            iv.class_id.map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Read the CSV form written by [`write_intervals_csv`]; `#` lines are
/// skipped.
pub fn read_intervals_csv<R: Read>(source: R) -> Result<Vec<ActivityInterval>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(source);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let bad = |reason: String| IngestError::MalformedRow { line, reason };
        if rec.len() != 7 {
            return Err(bad(format!("expected 7 fields, found {}", rec.len())).into());
        }
        let num = |j: usize| rec[j].parse::<f64>().map_err(|_| bad(format!("bad number {:?}", &rec[j])));
        let view: ViewTag = serde_json::from_value(serde_json::Value::String(rec[1].to_string()))
            .map_err(|_| bad(format!("unknown view {:?}", &rec[1])))?;
        let p_value = if rec[5].is_empty() { None } else { Some(num(5)?) };
        let class_id = if rec[6].is_empty() {
            None
        } else {
            Some(rec[6].parse::<u8>().map_err(|_| bad(format!("bad class id {:?}", &rec[6])))?)
        };
        out.push(ActivityInterval {
            video_id: rec[0].to_string(),
            view,
            start_s: num(2)?,
            end_s: num(3)?,
            stat_value: num(4)?,
            p_value,
            class_id,
            label: None,
        });
    }
    Ok(out)
}
