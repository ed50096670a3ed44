//! Temporal and spatio-temporal evaluation of response tracks.
//!
//! * `tAP`: average precision over temporal-IoU thresholds.
//! * `stAP`: the same over spatio-temporal IoU thresholds.
//! * `success`: fraction of queries with spatio-temporal IoU at or above a small floor.
//! * `recovery`: mean fraction of ground-truth frames matched by a box with IoU ≥ 0.5.
//!
//! Every annotated query counts as a positive. Queries with no prediction,
//! or with a prediction that has no track, simply never reach their recall.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::localization::ResponseTrack;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtEntry {
    pub frame_idx: u64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipAnnotation {
    pub clip_id: String,
    pub query_id: String,
    pub gt_track: Vec<GtEntry>,
}

impl ClipAnnotation {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::Record {
            clip_id: self.clip_id.clone(),
            query_id: self.query_id.clone(),
            reason,
        };
        if self.clip_id.is_empty() || self.query_id.is_empty() {
            return Err(fail("empty clip_id or query_id".into()));
        }
        if self.gt_track.is_empty() {
            return Err(fail("gt_track is empty".into()));
        }
        for pair in self.gt_track.windows(2) {
            if pair[1].frame_idx <= pair[0].frame_idx {
                return Err(fail(format!(
                    "gt_track frame {} is not after frame {}",
                    pair[1].frame_idx, pair[0].frame_idx
                )));
            }
        }
        Ok(())
    }
}

/// Answer for one (clip, query); `track` is `None` when localization found no peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub clip_id: String,
    pub query_id: String,
    pub track: Option<ResponseTrack>,
}

impl Prediction {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::Record {
            clip_id: self.clip_id.clone(),
            query_id: self.query_id.clone(),
            reason,
        };
        if self.clip_id.is_empty() || self.query_id.is_empty() {
            return Err(fail("empty clip_id or query_id".into()));
        }
        if let Some(track) = &self.track {
            if track.entries.is_empty() {
                return Err(fail("track has no entries".into()));
            }
            for pair in track.entries.windows(2) {
                if pair[1].frame_idx <= pair[0].frame_idx {
                    return Err(fail("track frames are not strictly increasing".into()));
                }
            }
            if !track
                .entries
                .iter()
                .any(|e| e.frame_idx == track.peak_frame)
            {
                return Err(fail(format!(
                    "peak frame {} is not in the track",
                    track.peak_frame
                )));
            }
        }
        Ok(())
    }
}

/// Inclusive range of frame indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameRange {
    pub start: u64,
    pub end: u64,
}

impl FrameRange {
    pub fn new(start: u64, end: u64) -> Result<Self> {
        if start > end {
            return Err(Error::invalid("frame range", format!("{start} > {end}")));
        }
        Ok(Self { start, end })
    }

    fn len(&self) -> u64 {
        self.end - self.start + 1
    }
}

/// Overlap of two inclusive frame ranges, counted in frames.
pub fn temporal_iou(pred: FrameRange, gt: FrameRange) -> f64 {
    let lo = pred.start.max(gt.start);
    let hi = pred.end.min(gt.end);
    let inter = if lo <= hi { hi - lo + 1 } else { 0 };
    let union = pred.len() + gt.len() - inter;
    inter as f64 / union as f64
}

/// Summed per-frame box intersection over summed per-frame union.
///
/// Both inputs must be sorted by frame. A frame present in only one track
/// adds its box area to the union.
pub fn spatiotemporal_iou(pred: &[(u64, BoundingBox)], gt: &[(u64, BoundingBox)]) -> f64 {
    let (mut inter, mut union) = (0.0, 0.0);
    let (mut i, mut j) = (0, 0);
    while i < pred.len() || j < gt.len() {
        match (pred.get(i), gt.get(j)) {
            (Some(p), Some(g)) if p.0 == g.0 => {
                inter += p.1.intersection_area(&g.1);
                union += p.1.union_area(&g.1);
                i += 1;
                j += 1;
            }
            (Some(p), Some(g)) if p.0 < g.0 => {
                union += p.1.area();
                i += 1;
            }
            (Some(p), None) => {
                union += p.1.area();
                i += 1;
            }
            (_, Some(g)) => {
                union += g.1.area();
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    if union == 0.0 {
        0.0
    } else {
        (inter / union).min(1.0)
    }
}

/// All-point interpolated average precision.
///
/// `matches` lists the ranked predictions (highest confidence first), `true`
/// for a true positive. `n_positives` is the number of ground-truth queries.
pub fn average_precision(matches: &[bool], n_positives: usize) -> f64 {
    if n_positives == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(matches.len());
    let mut tp = 0usize;
    for (rank, &hit) in matches.iter().enumerate() {
        if hit {
            tp += 1;
        }
        precision.push(tp as f64 / (rank + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let step = 1.0 / n_positives as f64;
    matches
        .iter()
        .zip(&precision)
        .filter(|(hit, _)| **hit)
        .map(|(_, p)| step * p)
        .sum::<f64>()
        .min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub temporal_thresholds: Vec<f64>,
    pub spatiotemporal_thresholds: Vec<f64>,
    pub success_threshold: f64,
    pub recovery_iou: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            temporal_thresholds: vec![0.25, 0.5, 0.75, 0.95],
            spatiotemporal_thresholds: vec![0.25, 0.5, 0.75, 0.95],
            success_threshold: 0.05,
            recovery_iou: 0.5,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, set) in [
            ("temporal_thresholds", &self.temporal_thresholds),
            ("spatiotemporal_thresholds", &self.spatiotemporal_thresholds),
        ] {
            if set.is_empty() {
                return Err(Error::invalid(field, "empty threshold set"));
            }
            if let Some(t) = set.iter().find(|t| !(0.0..=1.0).contains(*t)) {
                return Err(Error::invalid(field, format!("{t} is outside [0, 1]")));
            }
        }
        for (field, t) in [
            ("success_threshold", self.success_threshold),
            ("recovery_iou", self.recovery_iou),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::invalid(field, format!("{t} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Per-query row of a [`MetricReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub clip_id: String,
    pub query_id: String,
    pub confidence: Option<f64>,
    pub temporal_iou: f64,
    pub spatiotemporal_iou: f64,
    pub recovery: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(rename = "tAP")]
    pub t_ap: f64,
    #[serde(rename = "stAP")]
    pub st_ap: f64,
    pub success: f64,
    pub recovery: f64,
    pub per_query: Vec<QueryMetrics>,
}

impl MetricReport {
    /// Fixed-width summary table, values in percent.
    pub fn table(&self, method: &str) -> String {
        let width = method.len().max("Method".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "| {:<width$} | {:>7} | {:>7} | {:>7} | {:>8} |",
            "Method", "tAP", "stAP", "success", "recovery"
        );
        let _ = writeln!(
            out,
            "|-{}-|---------|---------|---------|----------|",
            "-".repeat(width)
        );
        let pct = |v: f64| format!("{:.2}%", 100.0 * v);
        let _ = writeln!(
            out,
            "| {:<width$} | {:>7} | {:>7} | {:>7} | {:>8} |",
            method,
            pct(self.t_ap),
            pct(self.st_ap),
            pct(self.success),
            pct(self.recovery)
        );
        out
    }
}

type Key = (String, String);

fn track_boxes(track: &ResponseTrack) -> Vec<(u64, BoundingBox)> {
    track
        .entries
        .iter()
        .map(|e| (e.frame_idx, e.bbox))
        .collect()
}

fn gt_boxes(ann: &ClipAnnotation) -> Vec<(u64, BoundingBox)> {
    ann.gt_track.iter().map(|e| (e.frame_idx, e.bbox)).collect()
}

fn recovered_fraction(pred: &[(u64, BoundingBox)], gt: &[(u64, BoundingBox)], iou_min: f64) -> f64 {
    let by_frame: BTreeMap<u64, &BoundingBox> = pred.iter().map(|(f, b)| (*f, b)).collect();
    let hits = gt
        .iter()
        .filter(|(f, g)| by_frame.get(f).is_some_and(|p| p.iou(g) >= iou_min))
        .count();
    hits as f64 / gt.len() as f64
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn evaluate(
    predictions: &[Prediction],
    annotations: &[ClipAnnotation],
    cfg: &MetricConfig,
) -> Result<MetricReport> {
    cfg.validate()?;
    let mut gt: BTreeMap<Key, &ClipAnnotation> = BTreeMap::new();
    for ann in annotations {
        ann.validate()?;
        let key = (ann.clip_id.clone(), ann.query_id.clone());
        if gt.insert(key, ann).is_some() {
            return Err(Error::DuplicateKey(
                ann.clip_id.clone(),
                ann.query_id.clone(),
            ));
        }
    }
    let mut preds: BTreeMap<Key, &Prediction> = BTreeMap::new();
    for p in predictions {
        p.validate()?;
        let key = (p.clip_id.clone(), p.query_id.clone());
        if !gt.contains_key(&key) {
            return Err(Error::UnmatchedPrediction(key.0, key.1));
        }
        if preds.insert(key, p).is_some() {
            return Err(Error::DuplicateKey(p.clip_id.clone(), p.query_id.clone()));
        }
    }

    let per_query: Vec<QueryMetrics> = gt
        .iter()
        .map(|((clip_id, query_id), ann)| {
            let gt_track = gt_boxes(ann);
            let track = preds
                .get(&(clip_id.clone(), query_id.clone()))
                .and_then(|p| p.track.as_ref());
            let (confidence, tiou, stiou, rec) = match track {
                None => (None, 0.0, 0.0, 0.0),
                Some(t) => {
                    let boxes = track_boxes(t);
                    let gt_range = FrameRange {
                        start: gt_track[0].0,
                        end: gt_track[gt_track.len() - 1].0,
                    };
                    let pred_range = FrameRange {
                        start: t.first_frame(),
                        end: t.last_frame(),
                    };
                    (
                        Some(t.confidence),
                        temporal_iou(pred_range, gt_range),
                        spatiotemporal_iou(&boxes, &gt_track),
                        recovered_fraction(&boxes, &gt_track, cfg.recovery_iou),
                    )
                }
            };
            QueryMetrics {
                clip_id: clip_id.clone(),
                query_id: query_id.clone(),
                confidence,
                temporal_iou: tiou,
                spatiotemporal_iou: stiou,
                recovery: rec,
            }
        })
        .collect();

    // per_query is in key order, so a stable sort breaks confidence ties by key
    let mut ranked: Vec<&QueryMetrics> = per_query
        .iter()
        .filter(|q| q.confidence.is_some())
        .collect();
    ranked.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let n = per_query.len();
    let mean_ap = |thresholds: &[f64], iou: fn(&QueryMetrics) -> f64| {
        mean(thresholds.iter().map(|&tau| {
            let matches: Vec<bool> = ranked.iter().map(|q| iou(q) >= tau).collect();
            average_precision(&matches, n)
        }))
    };
    let t_ap = mean_ap(&cfg.temporal_thresholds, |q| q.temporal_iou);
    let st_ap = mean_ap(&cfg.spatiotemporal_thresholds, |q| q.spatiotemporal_iou);
    let success = if n == 0 {
        0.0
    } else {
        per_query
            .iter()
            .filter(|q| q.confidence.is_some() && q.spatiotemporal_iou >= cfg.success_threshold)
            .count() as f64
            / n as f64
    };
    let recovery = mean(per_query.iter().map(|q| q.recovery));

    Ok(MetricReport {
        t_ap,
        st_ap,
        success,
        recovery,
        per_query,
    })
}
