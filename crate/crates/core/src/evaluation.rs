//! Box-level scoring of tracker output against ground truth.
//!
//! Each evaluation frame pairs the predictions stamped at that time with the
//! ground truth interpolated to it, and matches them greedily one-to-one in
//! descending IoU order. Precision and recall are accumulated over frames
//! for each IoU threshold; detection probability counts objects that were
//! matched at least once.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::eot::{interpolate, Timed, TrackSnapshot, TrackState};
use crate::error::{Error, Result};
use crate::event_io::fmt4;
use crate::geometry::{iou, BoxF};

pub const GT_CSV_HEADER: &str = "object_id,t_us,x,y,w,h,class";
pub const REPORT_CSV_HEADER: &str = "theta,precision,recall,f1,detection_prob";
pub const MATCHING_RULE: &str = "greedy one-to-one matching in descending IoU order";

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthRecord {
    pub object_id: u64,
    pub t: u64,
    pub bbox: BoxF,
    pub class_label: Option<String>,
}

impl Timed for GroundTruthRecord {
    fn time(&self) -> u64 {
        self.t
    }
    fn bbox(&self) -> BoxF {
        self.bbox
    }
}

/// `0.05, 0.10, ..., 0.95`.
pub fn default_thresholds() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    /// Count `tracking` snapshots as predictions, not only `locked` ones.
    pub include_tracking: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            thresholds: default_thresholds(),
            include_tracking: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        check_thresholds(&self.thresholds)
    }
}

fn check_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::InvalidConfig("threshold sweep is empty".into()));
    }
    if thresholds.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::InvalidConfig("thresholds must lie in (0, 1)".into()));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("thresholds must be strictly increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameMatch {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// `(prediction index, ground-truth index, IoU)`
    pub pairs: Vec<(usize, usize, f64)>,
}

/// All prediction/ground-truth pairs with positive IoU in greedy order:
/// descending IoU, ties by prediction then ground-truth index, each box used
/// at most once.
fn greedy_pairs(pred: &[BoxF], gt: &[BoxF]) -> Vec<(usize, usize, f64)> {
    let mut all: Vec<(usize, usize, f64)> = pred
        .iter()
        .enumerate()
        .flat_map(|(i, p)| gt.iter().enumerate().map(move |(j, g)| (i, j, iou(p, g))))
        .filter(|&(_, _, v)| v > 0.0)
        .collect();
    all.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_p = vec![false; pred.len()];
    let mut used_g = vec![false; gt.len()];
    let mut out = Vec::new();
    for (i, j, v) in all {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            out.push((i, j, v));
        }
    }
    out
}

/// Matches one frame at IoU threshold `theta`.
pub fn match_frame(pred: &[BoxF], gt: &[BoxF], theta: f64) -> FrameMatch {
    let pairs: Vec<_> = greedy_pairs(pred, gt).into_iter().take_while(|p| p.2 >= theta).collect();
    FrameMatch {
        tp: pairs.len(),
        fp: pred.len() - pairs.len(),
        fn_: gt.len() - pairs.len(),
        pairs,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdScore {
    pub theta: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub detection_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub frames: usize,
    pub objects: usize,
    pub scores: Vec<ThresholdScore>,
    /// Per threshold (same order as `scores`), ids of objects matched at
    /// least once.
    pub detected: Vec<BTreeSet<u64>>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// A frame: predictions stamped at `t` and ground truth interpolated to it.
struct Frame {
    pred: Vec<BoxF>,
    gt: Vec<BoxF>,
    gt_ids: Vec<u64>,
}

fn build_frames(
    pred: &[TrackSnapshot],
    gt: &[GroundTruthRecord],
    include_tracking: bool,
    frame_times: Option<&[u64]>,
) -> Result<(Vec<Frame>, usize)> {
    if gt.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let mut histories: BTreeMap<u64, Vec<&GroundTruthRecord>> = BTreeMap::new();
    for r in gt {
        histories.entry(r.object_id).or_default().push(r);
    }
    for h in histories.values_mut() {
        h.sort_by_key(|r| r.t);
    }

    let mut by_time: BTreeMap<u64, Vec<BoxF>> = BTreeMap::new();
    for s in pred {
        if s.state == TrackState::Locked || (include_tracking && s.state == TrackState::Tracking) {
            by_time.entry(s.t).or_default().push(s.bbox);
        }
    }
    let times: Vec<u64> = match frame_times {
        Some(ts) => ts.to_vec(),
        None if !by_time.is_empty() => by_time.keys().copied().collect(),
        None => gt.iter().map(|r| r.t).collect::<BTreeSet<_>>().into_iter().collect(),
    };

    let mut frames = Vec::with_capacity(times.len());
    for t in times {
        let mut frame = Frame {
            pred: by_time.get(&t).cloned().unwrap_or_default(),
            gt: Vec::new(),
            gt_ids: Vec::new(),
        };
        for (&id, history) in &histories {
            if let Ok(b) = interpolate(history, t) {
                frame.gt.push(b);
                frame.gt_ids.push(id);
            }
        }
        frames.push(frame);
    }
    Ok((frames, histories.len()))
}

/// Precision, recall, F1, and detection probability for every threshold.
///
/// Frames are `frame_times` when given, else the distinct prediction times,
/// else (no predictions) the ground-truth times.
pub fn pr_sweep(
    pred: &[TrackSnapshot],
    gt: &[GroundTruthRecord],
    thresholds: &[f64],
    include_tracking: bool,
    frame_times: Option<&[u64]>,
) -> Result<EvalReport> {
    check_thresholds(thresholds)?;
    let (frames, objects) = build_frames(pred, gt, include_tracking, frame_times)?;
    let greedy: Vec<Vec<(usize, usize, f64)>> = frames.iter().map(|f| greedy_pairs(&f.pred, &f.gt)).collect();
    let n_pred: usize = frames.iter().map(|f| f.pred.len()).sum();
    let n_gt: usize = frames.iter().map(|f| f.gt.len()).sum();

    let mut scores = Vec::with_capacity(thresholds.len());
    let mut detected = Vec::with_capacity(thresholds.len());
    for &theta in thresholds {
        let mut tp = 0;
        let mut hit = BTreeSet::new();
        for (frame, pairs) in frames.iter().zip(&greedy) {
            for &(_, j, _) in pairs.iter().take_while(|p| p.2 >= theta) {
                tp += 1;
                hit.insert(frame.gt_ids[j]);
            }
        }
        let precision = ratio(tp, n_pred);
        let recall = ratio(tp, n_gt);
        scores.push(ThresholdScore {
            theta,
            tp,
            fp: n_pred - tp,
            fn_: n_gt - tp,
            precision,
            recall,
            f1: f1(precision, recall),
            detection_prob: ratio(hit.len(), objects),
        });
        detected.push(hit);
    }
    Ok(EvalReport {
        frames: frames.len(),
        objects,
        scores,
        detected,
    })
}

/// Fraction of ground-truth objects with at least one true-positive match.
pub fn detection_probability(
    pred: &[TrackSnapshot],
    gt: &[GroundTruthRecord],
    theta: f64,
    include_tracking: bool,
) -> Result<f64> {
    let report = pr_sweep(pred, gt, &[theta], include_tracking, None)?;
    Ok(report.scores[0].detection_prob)
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{REPORT_CSV_HEADER}\n");
        for s in &self.scores {
            writeln!(
                out,
                "{:.2},{:.6},{:.6},{:.6},{:.6}",
                s.theta, s.precision, s.recall, s.f1, s.detection_prob
            )
            .unwrap();
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "matching: {MATCHING_RULE}\nframes: {}  objects: {}\n",
            self.frames, self.objects
        );
        writeln!(out, "{:>6} {:>9} {:>9} {:>9} {:>9}", "theta", "precision", "recall", "f1", "det_prob").unwrap();
        for s in &self.scores {
            writeln!(
                out,
                "{:>6.2} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                s.theta, s.precision, s.recall, s.f1, s.detection_prob
            )
            .unwrap();
        }
        out
    }

    pub fn score_at(&self, theta: f64) -> Option<&ThresholdScore> {
        self.scores.iter().find(|s| (s.theta - theta).abs() < 1e-9)
    }
}

pub fn write_ground_truth<W: Write>(records: &[GroundTruthRecord], sink: W) -> Result<()> {
    let mut sink = std::io::BufWriter::new(sink);
    writeln!(sink, "{GT_CSV_HEADER}")?;
    for r in records {
        let class = r.class_label.as_deref().unwrap_or("");
        if class.contains([',', '"', '\n']) {
            return Err(Error::InvalidSpec(format!("class label {class:?} cannot be written to CSV")));
        }
        writeln!(
            sink,
            "{},{},{},{},{},{},{}",
            r.object_id,
            r.t,
            fmt4(r.bbox.x),
            fmt4(r.bbox.y),
            fmt4(r.bbox.w),
            fmt4(r.bbox.h),
            class
        )?;
    }
    sink.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct GtRow {
    object_id: u64,
    t_us: u64,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    class: Option<String>,
}

pub fn read_ground_truth<R: Read>(source: R) -> Result<Vec<GroundTruthRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != GT_CSV_HEADER {
        return Err(Error::MalformedRow {
            line: 1,
            reason: format!("ground-truth CSV header must be '{GT_CSV_HEADER}'"),
        });
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<GtRow>() {
        let row = row?;
        out.push(GroundTruthRecord {
            object_id: row.object_id,
            t: row.t_us,
            bbox: BoxF::new(row.x, row.y, row.w, row.h),
            class_label: row.class.filter(|c| !c.is_empty()),
        });
    }
    Ok(out)
}

/// Ground truth replayed as locked tracker output.
pub fn ground_truth_as_tracks(gt: &[GroundTruthRecord]) -> Vec<TrackSnapshot> {
    gt.iter()
        .map(|r| TrackSnapshot {
            id: r.object_id,
            t: r.t,
            bbox: r.bbox,
            state: TrackState::Locked,
            vx: 0.0,
            vy: 0.0,
        })
        .collect()
}
