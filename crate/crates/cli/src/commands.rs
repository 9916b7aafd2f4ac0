use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::json;

use cptal_core::classify::{classify_intervals, PromptTemplate};
use cptal_core::config::{ClassifierKind, ConfigError, RunConfig};
use cptal_core::detect::{scan_window, window_graph, window_seed, DetectionConfig};
use cptal_core::error::{open_file, read_text};
use cptal_core::eval::{evaluate_all, overlap_score, read_ground_truth, write_ground_truth, EvalMode, GroundTruth};
use cptal_core::keypoints::{window, write_keypoint_csv, CameraView, KeypointSeries, SeriesWindow};
use cptal_core::pipeline::{
    read_intervals_csv, read_intervals_json, write_intervals_csv, ActivityInterval, IntervalFile, ViewTag,
};
use cptal_core::run::{build_classifier, detect_view, detection_series, fuse, ingest_file, run_pipeline};
use cptal_core::synth::{gen_scenario, series_to_frames, ScenarioSpec};
use cptal_core::Result;

use crate::args::{base_config, parse_view_arg, ClassifierArgs, DetectionArgs, EvalArgs, FusionArgs, IngestArgs};

pub struct Globals {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Globals {
    /// Defaults, then `--config`, then command-line flags; validated.
    fn resolve(&self, overrides: impl FnOnce(&mut RunConfig)) -> Result<RunConfig> {
        let mut cfg = base_config(self.config.as_deref())?;
        overrides(&mut cfg);
        if let Some(seed) = self.seed {
            cfg.detection.seed = seed;
            cfg.classifier.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn invalid(field: &'static str, msg: impl Into<String>) -> cptal_core::Error {
    ConfigError::Invalid { field, msg: msg.into() }.into()
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn config_comment(cfg: &RunConfig) -> Result<String> {
    Ok(format!("# config: {}\n", serde_json::to_string(cfg)?))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Intervals as JSON (`{config, intervals}`), or CSV with a config comment
/// line when the path ends in `.csv`.
fn write_intervals(path: &Path, cfg: &RunConfig, intervals: &[ActivityInterval]) -> Result<()> {
    if is_csv(path) {
        create_parent(path)?;
        let mut buf = config_comment(cfg)?.into_bytes();
        write_intervals_csv(intervals, &mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    } else {
        let file = IntervalFile { config: serde_json::to_value(cfg)?, intervals: intervals.to_vec() };
        write_json(path, &file)
    }
}

fn read_intervals(path: &Path) -> Result<Vec<ActivityInterval>> {
    let text = read_text(path)?;
    let first = text.trim_start().chars().next();
    if matches!(first, Some('[' | '{')) {
        read_intervals_json(&text)
    } else {
        read_intervals_csv(text.as_bytes())
    }
}

fn read_truths(path: Option<&Path>) -> Result<Option<Vec<GroundTruth>>> {
    path.map(|p| read_ground_truth(open_file(p)?)).transpose()
}

/// `--video-id`, else the only video in the ground truth, else `"video"`.
fn resolve_video_id(arg: Option<&str>, truths: Option<&[GroundTruth]>) -> String {
    if let Some(id) = arg {
        return id.to_string();
    }
    match truths {
        Some([only]) => only.video_id.clone(),
        _ => "video".to_string(),
    }
}

fn load_views(args: &[String], video_id: &str, cfg: &RunConfig) -> Result<Vec<KeypointSeries>> {
    let mut seen = BTreeMap::new();
    for (i, arg) in args.iter().enumerate() {
        let (view, path) = parse_view_arg(arg, i);
        if seen.insert(view, path.clone()).is_some() {
            return Err(invalid("views", format!("view {view} given twice")));
        }
    }
    seen.into_iter().map(|(view, path)| ingest_file(&path, video_id, view, &cfg.ingest)).collect()
}

#[derive(Args, Debug)]
pub struct SynthCmd {
    /// Scenario description (JSON); a random one is generated otherwise.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Activities in the random scenario.
    #[arg(long, default_value_t = 10)]
    activities: usize,
    #[arg(long, default_value = "synthetic")]
    video_id: String,
    /// Directory for the three keypoint CSVs, ground truth and scenario.
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    ingest: IngestArgs,
}

impl SynthCmd {
    pub fn run(self, g: &Globals) -> Result<()> {
        let cfg = g.resolve(|c| self.ingest.apply(c))?;
        let spec = match &self.spec {
            Some(p) => {
                let mut spec: ScenarioSpec = serde_json::from_str(&read_text(p)?)?;
                if let Some(seed) = g.seed {
                    spec.seed = seed;
                }
                spec
            }
            None => ScenarioSpec::random(&self.video_id, self.activities, g.seed.unwrap_or(0)),
        };
        let sc = gen_scenario(&spec)?;
        fs::create_dir_all(&self.out_dir)?;
        for series in &sc.views {
            let frames = series_to_frames(series, cfg.ingest.frame_w, cfg.ingest.frame_h);
            let file = fs::File::create(self.out_dir.join(format!("{}.csv", series.view)))?;
            write_keypoint_csv(&frames, std::io::BufWriter::new(file))?;
        }
        let mut gt = config_comment(&cfg)?.into_bytes();
        write_ground_truth(std::slice::from_ref(&sc.ground_truth), &mut gt)?;
        fs::write(self.out_dir.join("ground_truth.csv"), gt)?;
        write_json(&self.out_dir.join("scenario.json"), &json!({ "config": cfg, "scenario": spec }))?;
        println!(
            "wrote {} views, {} activities, fps {} to {}",
            sc.views.len(),
            sc.ground_truth.activities.len(),
            spec.sample_hz,
            self.out_dir.display()
        );
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct DetectCmd {
    /// Keypoint file (CSV or JSON lines).
    #[arg(long)]
    keypoints: PathBuf,
    /// Camera view; guessed from the file name when omitted.
    #[arg(long)]
    view: Option<String>,
    #[arg(long, default_value = "video")]
    video_id: String,
    /// Output file; `.csv` selects CSV, anything else JSON.
    #[arg(long)]
    out: PathBuf,
    /// Write each window's similarity-graph edges into this directory.
    #[arg(long)]
    dump_edges: Option<PathBuf>,
    #[command(flatten)]
    ingest: IngestArgs,
    #[command(flatten)]
    detection: DetectionArgs,
    #[command(flatten)]
    fusion: FusionArgs,
}

impl DetectCmd {
    pub fn run(self, g: &Globals) -> Result<()> {
        let cfg = g.resolve(|c| {
            self.ingest.apply(c);
            self.detection.apply(c);
            self.fusion.apply(c);
        })?;
        let view = match &self.view {
            Some(v) => CameraView::parse(v).ok_or_else(|| invalid("view", format!("unknown view {v:?}")))?,
            None => parse_view_arg(&self.keypoints.to_string_lossy(), 0).0,
        };
        let series = ingest_file(&self.keypoints, &self.video_id, view, &cfg.ingest)?;
        let proposals = detect_view(&series, &cfg)?;
        if let Some(dir) = &self.dump_edges {
            dump_edges(dir, &detection_series(&series, &cfg)?, &cfg.detection)?;
        }
        write_intervals(&self.out, &cfg, &proposals)?;
        println!("{}: {} proposals", view, proposals.len());
        Ok(())
    }
}

fn dump_edges(dir: &Path, series: &KeypointSeries, det: &DetectionConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    for w in window(series, det.window_secs, det.offset_secs, det.min_window_len())? {
        let g = window_graph(&w.series.vectors, det.k)?;
        let path = dir.join(format!("{}_{:06}.csv", series.view, w.start_index));
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        g.write_edge_csv(&mut out)?;
        out.flush()?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SweepParam {
    K,
    Window,
}

#[derive(Args, Debug)]
pub struct SweepCmd {
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Comma-separated grid values.
    #[arg(long, allow_hyphen_values = true)]
    values: String,
    /// Keypoint files; `VIEW=PATH` or names containing dash/rear/right.
    /// The k sweep uses the first one.
    #[arg(long, num_args = 1.., required = true, alias = "keypoints")]
    views: Vec<String>,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    video_id: Option<String>,
    /// k sweep: start of the analysed window in seconds.
    #[arg(long, default_value_t = 0.0)]
    window_start: f64,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    ingest: IngestArgs,
    #[command(flatten)]
    detection: DetectionArgs,
    #[command(flatten)]
    fusion: FusionArgs,
}

fn parse_values(raw: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| invalid("values", format!("{s:?} is not a number"))))
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(invalid("values", "empty value list"));
    }
    Ok(values)
}

impl SweepCmd {
    pub fn run(self, g: &Globals) -> Result<()> {
        let cfg = g.resolve(|c| {
            self.ingest.apply(c);
            self.detection.apply(c);
            self.fusion.apply(c);
        })?;
        let values = parse_values(&self.values)?;
        let truths = read_truths(self.ground_truth.as_deref())?;
        let video_id = resolve_video_id(self.video_id.as_deref(), truths.as_deref());
        let mut text = config_comment(&cfg)?;
        match self.param {
            SweepParam::K => self.sweep_k(&cfg, &values, truths.as_deref(), &video_id, &mut text)?,
            SweepParam::Window => self.sweep_window(&cfg, &values, truths.as_deref(), &video_id, &mut text)?,
        }
        match &self.out {
            Some(p) => {
                create_parent(p)?;
                fs::write(p, text)?;
            }
            None => print!("{text}"),
        }
        Ok(())
    }

    fn sweep_k(
        &self,
        cfg: &RunConfig,
        values: &[f64],
        truths: Option<&[GroundTruth]>,
        video_id: &str,
        out: &mut String,
    ) -> Result<()> {
        let ks: Vec<usize> = values
            .iter()
            .map(|&v| {
                if v >= 1.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(invalid("values", format!("k must be a positive integer, got {v}")))
                }
            })
            .collect::<Result<_>>()?;
        let views = load_views(&self.views[..1], video_id, cfg)?;
        let series = detection_series(&views[0], cfg)?;
        let hz = series.sample_hz;
        let first = (self.window_start * hz).round() as usize;
        let len = (cfg.detection.window_secs * hz).round() as usize;
        if first >= series.len() {
            return Err(invalid("window_start", format!("{} s is past the end of the series", self.window_start)));
        }
        let last = (first + len).min(series.len());
        let win = SeriesWindow {
            start_s: series.time_of(first),
            start_index: first,
            series: KeypointSeries { vectors: series.vectors[first..last].to_vec(), ..series.clone() },
        };
        let truth = truths.and_then(|t| t.iter().find(|t| t.video_id == video_id));
        if truth.is_some() {
            out.push_str("k,actual_start,actual_end,p_start,p_end,p_value\n");
        } else {
            out.push_str("k,p_start,p_end,p_value\n");
        }
        for k in ks {
            let det = DetectionConfig { k, ..cfg.detection.clone() };
            let found = scan_window(&win.series.vectors, win.start_s, hz, &det, window_seed(&det, &win))?;
            let mut row = format!("{k}");
            if let Some(t) = truth {
                // The annotation the prediction overlaps most (or the window, if
                // nothing was found).
                let probe = found.map_or((win.start_s, win.start_s + len as f64 / hz), |d| (d.start_s, d.end_s));
                let actual = t
                    .activities
                    .iter()
                    .map(|a| (overlap_score(a.span(), probe), a))
                    .filter(|(os, _)| *os > 0.0)
                    .max_by(|a, b| a.0.total_cmp(&b.0));
                match actual {
                    Some((_, a)) => {
                        let _ = write!(row, ",{},{}", a.start_s, a.end_s);
                    }
                    None => row.push_str(",,"),
                }
            }
            match found {
                Some(d) => {
                    let _ = write!(row, ",{},{},{}", round3(d.start_s), round3(d.end_s), d.p_value);
                }
                None => row.push_str(",,,"),
            }
            out.push_str(&row);
            out.push('\n');
        }
        Ok(())
    }

    fn sweep_window(
        &self,
        cfg: &RunConfig,
        values: &[f64],
        truths: Option<&[GroundTruth]>,
        video_id: &str,
        out: &mut String,
    ) -> Result<()> {
        let truths = truths.ok_or_else(|| invalid("ground_truth", "the window sweep needs --ground-truth"))?;
        let relevant: Vec<GroundTruth> = truths.iter().filter(|t| t.video_id == video_id).cloned().collect();
        let views = load_views(&self.views, video_id, cfg)?;
        out.push_str("window_secs,accurate_predictions,total,accuracy_pct,l0_frac,l1_frac\n");
        for &w in values {
            let mut c = cfg.clone();
            c.detection.window_secs = w;
            c.detection.offset_secs = w / 2.0;
            c.validate()?;
            let mut per_view = BTreeMap::new();
            for s in &views {
                per_view.insert(s.view, detect_view(s, &c)?);
            }
            let fused = fuse(&per_view, &c);
            let r = evaluate_all(&relevant, &fused, EvalMode::Proposal, c.evaluation.tol_s);
            let _ = writeln!(
                out,
                "{w},{},{},{:.1},{},{}",
                r.matched,
                r.total,
                100.0 * r.accuracy,
                c.detection.l0_frac,
                c.detection.l1_frac
            );
        }
        Ok(())
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[derive(Args, Debug)]
pub struct FuseCmd {
    /// Proposal files from `detect`, one or more per view.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    fusion: FusionArgs,
}

impl FuseCmd {
    pub fn run(self, g: &Globals) -> Result<()> {
        let cfg = g.resolve(|c| self.fusion.apply(c))?;
        let mut per_view: BTreeMap<CameraView, Vec<ActivityInterval>> = BTreeMap::new();
        for path in &self.inputs {
            for iv in read_intervals(path)? {
                let view = match iv.view {
                    ViewTag::Dashboard => CameraView::Dashboard,
                    ViewTag::Rearview => CameraView::Rearview,
                    ViewTag::RightWindow => CameraView::RightWindow,
                    ViewTag::Fused => {
                        return Err(invalid("inputs", format!("{} already holds fused intervals", path.display())))
                    }
                };
                per_view.entry(view).or_default().push(iv);
            }
        }
        let fused = fuse(&per_view, &cfg);
        write_intervals(&self.out, &cfg, &fused)?;
        println!("{} fused intervals from {} views", fused.len(), per_view.len());
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct ClassifyCmd {
    /// Interval file (JSON or CSV).
    #[arg(long)]
    intervals: PathBuf,
    /// Ground truth; required by the mock classifier.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    classifier: ClassifierArgs,
}

impl ClassifyCmd {
    pub fn run(self, g: &Globals) -> Result<()> {
        let cfg = g.resolve(|c| self.classifier.apply(c))?;
        let truths = read_truths(self.ground_truth.as_deref())?;
        if cfg.classifier.kind == ClassifierKind::Mock && truths.is_none() {
            return Err(invalid("ground_truth", "the mock classifier needs --ground-truth"));
        }
        let intervals = read_intervals(&self.intervals)?;
        let template = PromptTemplate::from_id(cfg.classifier.template)?;
        let mut by_video: BTreeMap<&str, Vec<ActivityInterval>> = BTreeMap::new();
        for iv in &intervals {
            by_video.entry(iv.video_id.as_str()).or_default().push(iv.clone());
        }
        let mut out = Vec::with_capacity(intervals.len());
        for (video, ivs) in by_video {
            let truth = truths.as_deref().and_then(|t| t.iter().find(|t| t.video_id == video));
            let classifier = build_classifier(&cfg.classifier, truth);
            out.extend(classify_intervals(&ivs, classifier.as_ref(), cfg.classifier.clip.as_deref(), template));
        }
        write_intervals(&self.out, &cfg, &out)?;
        println!("classified {} intervals", out.len());
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Proposal,
    Classified,
}

#[derive(Args, Debug)]
pub struct EvaluateCmd {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    ground_truth: PathBuf,
    #[arg(long, value_enum, default_value = "proposal")]
    mode: ModeArg,
    /// JSON report; the table always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    eval: EvalArgs,
}

impl EvaluateCmd {
    pub fn run(self, g: &Globals) -> Result<()> {
        let cfg = g.resolve(|c| self.eval.apply(c))?;
        let truths = read_ground_truth(open_file(&self.ground_truth)?)?;
        let preds = read_intervals(&self.predictions)?;
        let mode = match self.mode {
            ModeArg::Proposal => EvalMode::Proposal,
            ModeArg::Classified => EvalMode::Classified,
        };
        let report = evaluate_all(&truths, &preds, mode, cfg.evaluation.tol_s);
        if let Some(p) = &self.out {
            write_json(p, &json!({ "config": cfg, "report": report }))?;
        }
        print!("{}", report.to_table());
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct RunCmd {
    /// Keypoint files; `VIEW=PATH` or names containing dash/rear/right.
    #[arg(long, num_args = 1.., required = true)]
    views: Vec<String>,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    video_id: Option<String>,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    ingest: IngestArgs,
    #[command(flatten)]
    detection: DetectionArgs,
    #[command(flatten)]
    fusion: FusionArgs,
    #[command(flatten)]
    classifier: ClassifierArgs,
    #[command(flatten)]
    eval: EvalArgs,
}

impl RunCmd {
    pub fn run(self, g: &Globals) -> Result<()> {
        let cfg = g.resolve(|c| {
            self.ingest.apply(c);
            self.detection.apply(c);
            self.fusion.apply(c);
            self.classifier.apply(c);
            self.eval.apply(c);
        })?;
        let truths = read_truths(self.ground_truth.as_deref())?;
        let video_id = resolve_video_id(self.video_id.as_deref(), truths.as_deref());
        let views = load_views(&self.views, &video_id, &cfg)?;
        let truth = truths.as_deref().and_then(|t| t.iter().find(|t| t.video_id == video_id));
        let classifier = build_classifier(&cfg.classifier, truth);
        let out = run_pipeline(&views, truths.as_deref(), &cfg, classifier.as_ref())?;

        let dir = &self.out_dir;
        fs::create_dir_all(dir)?;
        write_json(&dir.join("proposals.json"), &json!({ "config": cfg, "proposals": out.proposals }))?;
        write_intervals(&dir.join("fused.json"), &cfg, &out.fused)?;
        write_intervals(&dir.join("classified.json"), &cfg, &out.classified)?;
        if let (Some(p), Some(c)) = (&out.proposal_report, &out.classified_report) {
            write_json(&dir.join("report.json"), &json!({ "config": cfg, "proposal": p, "classified": c }))?;
            let table = format!("{}\n{}", p.to_table(), c.to_table());
            fs::write(dir.join("report.txt"), &table)?;
            print!("{table}");
        } else {
            println!("{} fused intervals; no ground truth given, nothing scored", out.fused.len());
        }
        Ok(())
    }
}
