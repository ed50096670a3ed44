//! Per-frame similarity signal, peak picking and response-track assembly.

use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, ScoringMode};
use crate::error::{Error, Result};
use crate::fusion::{score_frame_proposals, PriorBelief};
use crate::geometry::BoundingBox;

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub bbox: BoundingBox,
    pub prior: PriorBelief,
    pub measurement_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameProposals {
    pub frame_idx: u64,
    pub proposals: Vec<Proposal>,
}

/// All proposals of one (clip, query) pair, frames sorted by index.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipData {
    pub clip_id: String,
    pub query_id: String,
    pub frames: Vec<FrameProposals>,
}

/// Best score per retained frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySignal {
    pub frame_idxs: Vec<u64>,
    pub values: Vec<f64>,
}

impl SimilaritySignal {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredCandidate {
    pub bbox: BoundingBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredFrame {
    pub frame_idx: u64,
    pub candidates: Vec<ScoredCandidate>,
    /// Index of the highest-scoring candidate, if its score is positive.
    pub best: Option<usize>,
}

impl ScoredFrame {
    pub fn best_candidate(&self) -> Option<&ScoredCandidate> {
        self.best.map(|i| &self.candidates[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredClip {
    pub signal: SimilaritySignal,
    pub frames: Vec<ScoredFrame>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackEntry {
    pub frame_idx: u64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseTrack {
    pub entries: Vec<TrackEntry>,
    pub peak_frame: u64,
    /// Score of the peak frame's best proposal.
    pub confidence: f64,
}

impl ResponseTrack {
    pub fn first_frame(&self) -> u64 {
        self.entries[0].frame_idx
    }

    pub fn last_frame(&self) -> u64 {
        self.entries[self.entries.len() - 1].frame_idx
    }
}

/// Decides how a track continues into a neighbouring frame.
pub trait TrackerPolicy {
    /// Returns the continuation box and its score, or `None` to stop.
    fn step(&self, prev: &BoundingBox, frame: &ScoredFrame) -> Option<(BoundingBox, f64)>;
}

/// Greedy IoU follower.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceTracker {
    pub iou_min: f64,
    pub track_score_min: f64,
}

impl Default for ReferenceTracker {
    fn default() -> Self {
        Self {
            iou_min: 0.3,
            track_score_min: 0.3,
        }
    }
}

impl TrackerPolicy for ReferenceTracker {
    fn step(&self, prev: &BoundingBox, frame: &ScoredFrame) -> Option<(BoundingBox, f64)> {
        let mut chosen: Option<(f64, &ScoredCandidate)> = None;
        for c in &frame.candidates {
            if c.score < self.track_score_min {
                continue;
            }
            let iou = prev.iou(&c.bbox);
            if iou < self.iou_min {
                continue;
            }
            let better = match chosen {
                None => true,
                Some((best_iou, best)) => {
                    iou > best_iou || (iou == best_iou && c.score > best.score)
                }
            };
            if better {
                chosen = Some((iou, c));
            }
        }
        chosen.map(|(_, c)| (c.bbox, c.score))
    }
}

/// Stride between retained frames for a sampling rate in `(0, 1]`.
pub fn frame_stride(sample_rate: f64) -> Result<usize> {
    if !(sample_rate > 0.0 && sample_rate <= 1.0) {
        return Err(Error::invalid(
            "sample_rate",
            format!("{sample_rate} is outside (0, 1]"),
        ));
    }
    Ok(((1.0 / sample_rate).round() as usize).max(1))
}

fn score_frame(frame: &FrameProposals, cfg: &PipelineConfig) -> Result<ScoredFrame> {
    let scores: Vec<f64> = if frame.proposals.is_empty() {
        Vec::new()
    } else {
        match cfg.mode {
            ScoringMode::Fused => {
                let pairs: Vec<_> = frame
                    .proposals
                    .iter()
                    .map(|p| (p.prior, p.measurement_s))
                    .collect();
                score_frame_proposals(&pairs, &cfg.fusion())?
                    .into_iter()
                    .map(|f| f.value)
                    .collect()
            }
            ScoringMode::MeasurementOnly => {
                frame.proposals.iter().map(|p| p.measurement_s).collect()
            }
        }
    };

    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s > 0.0 && best.is_none_or(|j| s > scores[j]) {
            best = Some(i);
        }
    }
    let candidates = frame
        .proposals
        .iter()
        .zip(scores)
        .map(|(p, score)| ScoredCandidate {
            bbox: p.bbox,
            score,
        })
        .collect();
    Ok(ScoredFrame {
        frame_idx: frame.frame_idx,
        candidates,
        best,
    })
}

/// Scores the retained frames of a clip and records each frame's best score.
///
/// Frames are kept at positions `0, stride, 2·stride, …` of the sorted frame
/// list. Frames without a positive score contribute 0.
pub fn build_signal(frames: &[FrameProposals], cfg: &PipelineConfig) -> Result<ScoredClip> {
    if frames.is_empty() {
        return Err(Error::EmptyClip);
    }
    for pair in frames.windows(2) {
        if pair[1].frame_idx <= pair[0].frame_idx {
            return Err(Error::UnsortedFrames(pair[1].frame_idx));
        }
    }
    let stride = frame_stride(cfg.sample_rate)?;

    let scored = frames
        .iter()
        .step_by(stride)
        .map(|f| score_frame(f, cfg))
        .collect::<Result<Vec<_>>>()?;
    let signal = SimilaritySignal {
        frame_idxs: scored.iter().map(|f| f.frame_idx).collect(),
        values: scored
            .iter()
            .map(|f| f.best_candidate().map_or(0.0, |c| c.score))
            .collect(),
    };
    Ok(ScoredClip {
        signal,
        frames: scored,
    })
}

/// Centered moving average; the window is truncated at the edges.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 {
        return values.to_vec();
    }
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(values.len() - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Local maxima of the (optionally smoothed) signal, ascending.
///
/// A run of equal values is a peak when it is strictly above every neighbour
/// it has; the run reports its last index. Runs touching an end of the signal
/// only need to beat their one neighbour, but a run spanning the whole signal
/// has no neighbour and is not a peak, except for a single-sample signal.
pub fn find_peaks(values: &[f64], smoothing_window: usize, min_height: f64) -> Result<Vec<usize>> {
    if values.is_empty() {
        return Err(Error::EmptySignal);
    }
    if smoothing_window == 0 || smoothing_window.is_multiple_of(2) {
        return Err(Error::invalid(
            "smoothing_window",
            format!("{smoothing_window} is not an odd positive integer"),
        ));
    }
    let v = smooth(values, smoothing_window);
    let n = v.len();
    if n == 1 {
        return Ok(if v[0] >= min_height { vec![0] } else { vec![] });
    }

    let mut peaks = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && v[end + 1] == v[start] {
            end += 1;
        }
        let above_left = start == 0 || v[start] > v[start - 1];
        let above_right = end + 1 == n || v[end] > v[end + 1];
        let has_neighbour = start > 0 || end + 1 < n;
        if has_neighbour && above_left && above_right && v[end] >= min_height {
            peaks.push(end);
        }
        start = end + 1;
    }
    Ok(peaks)
}

pub fn most_recent_peak(peaks: &[usize]) -> Result<usize> {
    peaks.iter().copied().max().ok_or(Error::NoPeak)
}

/// Grows a track outward from the best proposal of signal position `peak`.
pub fn assemble_track<T: TrackerPolicy + ?Sized>(
    clip: &ScoredClip,
    peak: usize,
    tracker: &T,
) -> Result<ResponseTrack> {
    let peak_frame = clip
        .frames
        .get(peak)
        .ok_or_else(|| Error::invalid("peak", format!("index {peak} is out of range")))?;
    let seed = peak_frame
        .best_candidate()
        .ok_or(Error::PeakWithoutProposal(peak_frame.frame_idx))?;
    let seed_entry = TrackEntry {
        frame_idx: peak_frame.frame_idx,
        bbox: seed.bbox,
        score: seed.score,
    };

    let follow = |frames: &mut dyn Iterator<Item = &ScoredFrame>| {
        let mut out = Vec::new();
        let mut prev = seed.bbox;
        for frame in frames {
            match tracker.step(&prev, frame) {
                Some((bbox, score)) => {
                    out.push(TrackEntry {
                        frame_idx: frame.frame_idx,
                        bbox,
                        score,
                    });
                    prev = bbox;
                }
                None => break,
            }
        }
        out
    };

    let mut backward = follow(&mut clip.frames[..peak].iter().rev());
    let forward = follow(&mut clip.frames[peak + 1..].iter());
    backward.reverse();
    backward.push(seed_entry);
    backward.extend(forward);

    Ok(ResponseTrack {
        entries: backward,
        peak_frame: peak_frame.frame_idx,
        confidence: seed.score,
    })
}

/// Result of localizing one query; `track` is `None` when no peak could seed a track.
#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub signal: SimilaritySignal,
    pub track: Option<ResponseTrack>,
}

pub fn localize_with<T: TrackerPolicy + ?Sized>(
    clip: &ClipData,
    cfg: &PipelineConfig,
    tracker: &T,
) -> Result<Localization> {
    cfg.validate()?;
    let scored = build_signal(&clip.frames, cfg)?;
    let peaks = find_peaks(
        &scored.signal.values,
        cfg.smoothing_window,
        cfg.min_peak_height,
    )?;
    let track = match most_recent_peak(&peaks) {
        Ok(peak) => match assemble_track(&scored, peak, tracker) {
            Ok(track) => Some(track),
            Err(Error::PeakWithoutProposal(_)) => None,
            Err(e) => return Err(e),
        },
        Err(Error::NoPeak) => None,
        Err(e) => return Err(e),
    };
    Ok(Localization {
        signal: scored.signal,
        track,
    })
}

/// Localizes with the configured [`ReferenceTracker`].
pub fn localize(clip: &ClipData, cfg: &PipelineConfig) -> Result<Localization> {
    localize_with(clip, cfg, &cfg.tracker())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    fn prop(bbox: BoundingBox, prior: f64, s: f64) -> Proposal {
        Proposal {
            bbox,
            prior: PriorBelief::new(prior).unwrap(),
            measurement_s: s,
        }
    }

    fn frame(idx: u64, proposals: Vec<Proposal>) -> FrameProposals {
        FrameProposals {
            frame_idx: idx,
            proposals,
        }
    }

    fn scored(idx: u64, cands: &[(BoundingBox, f64)]) -> ScoredFrame {
        ScoredFrame {
            frame_idx: idx,
            candidates: cands
                .iter()
                .map(|&(bbox, score)| ScoredCandidate { bbox, score })
                .collect(),
            best: None,
        }
    }

    #[test]
    fn signal_single_frame() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        let b = bb(20.0, 20.0, 30.0, 30.0);
        let clip = vec![frame(0, vec![prop(a, 0.8, 0.7), prop(b, 0.5, 0.9)])];
        let out = build_signal(&clip, &PipelineConfig::default()).unwrap();
        assert_eq!(out.signal.values.len(), 1);
        assert_relative_eq!(out.signal.values[0], 22.9 / 29.25, epsilon = 1e-14);
        assert_eq!(out.frames[0].best, Some(0));
    }

    #[test]
    fn signal_all_gated_out() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        let clip = vec![frame(0, vec![prop(a, 0.6, 0.9), prop(a, 0.9, 0.2)])];
        let out = build_signal(&clip, &PipelineConfig::default()).unwrap();
        assert_eq!(out.signal.values, vec![0.0]);
        assert_eq!(out.frames[0].best, None);
    }

    #[test]
    fn signal_sampling_and_empty_frames() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        let clip: Vec<_> = (0..4).map(|i| frame(i, vec![prop(a, 0.8, 0.7)])).collect();
        let cfg = PipelineConfig {
            sample_rate: 0.5,
            ..Default::default()
        };
        let out = build_signal(&clip, &cfg).unwrap();
        assert_eq!(out.signal.frame_idxs, vec![0, 2]);

        let clip = vec![frame(3, vec![])];
        let out = build_signal(&clip, &PipelineConfig::default()).unwrap();
        assert_eq!(out.signal.values, vec![0.0]);
    }

    #[test]
    fn signal_errors() {
        let cfg = PipelineConfig::default();
        assert!(matches!(build_signal(&[], &cfg), Err(Error::EmptyClip)));
        let clip = vec![frame(2, vec![]), frame(1, vec![])];
        assert!(matches!(
            build_signal(&clip, &cfg),
            Err(Error::UnsortedFrames(1))
        ));
        let clip = vec![frame(1, vec![]), frame(1, vec![])];
        assert!(build_signal(&clip, &cfg).is_err());
    }

    #[test]
    fn measurement_only_uses_raw_scores() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        let clip = vec![frame(0, vec![prop(a, 0.1, 0.4), prop(a, 0.9, 0.3)])];
        let cfg = PipelineConfig {
            mode: ScoringMode::MeasurementOnly,
            ..Default::default()
        };
        let out = build_signal(&clip, &cfg).unwrap();
        assert_eq!(out.signal.values, vec![0.4]);
        assert_eq!(out.frames[0].best, Some(0));
    }

    #[test]
    fn stride_rounding() {
        assert_eq!(frame_stride(1.0).unwrap(), 1);
        assert_eq!(frame_stride(0.5).unwrap(), 2);
        assert_eq!(frame_stride(0.3).unwrap(), 3);
        assert_eq!(frame_stride(0.4).unwrap(), 3);
        assert!(frame_stride(0.0).is_err());
        assert!(frame_stride(1.1).is_err());
    }

    #[test]
    fn peak_examples() {
        assert_eq!(
            find_peaks(&[0.1, 0.5, 0.3, 0.7, 0.2], 1, 0.0).unwrap(),
            vec![1, 3]
        );
        assert_eq!(find_peaks(&[0.1, 0.2, 0.3], 1, 0.0).unwrap(), vec![2]);
        assert!(find_peaks(&[0.5, 0.5, 0.5], 1, 0.0).unwrap().is_empty());
    }

    #[test]
    fn peak_plateaus_and_edges() {
        assert_eq!(
            find_peaks(&[0.0, 0.4, 0.4, 0.4, 0.1], 1, 0.0).unwrap(),
            vec![3]
        );
        assert_eq!(find_peaks(&[0.4, 0.4, 0.1], 1, 0.0).unwrap(), vec![1]);
        assert_eq!(find_peaks(&[0.1, 0.4, 0.4], 1, 0.0).unwrap(), vec![2]);
        assert_eq!(find_peaks(&[0.4, 0.4, 0.5, 0.5], 1, 0.0).unwrap(), vec![3]);
        assert_eq!(find_peaks(&[0.3], 1, 0.0).unwrap(), vec![0]);
        assert!(find_peaks(&[0.3], 1, 0.5).unwrap().is_empty());
        assert!(matches!(find_peaks(&[], 1, 0.0), Err(Error::EmptySignal)));
        assert!(find_peaks(&[0.1, 0.2], 2, 0.0).is_err());
    }

    #[test]
    fn peak_min_height_and_smoothing() {
        assert_eq!(
            find_peaks(&[0.1, 0.5, 0.3, 0.7, 0.2], 1, 0.6).unwrap(),
            vec![3]
        );
        // smoothing with window 3 merges the twin spikes into one bump
        let v = [0.0, 1.0, 0.0, 1.0, 0.0];
        assert_eq!(
            smooth(&v, 3),
            vec![0.5, 1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0, 0.5]
        );
        assert_eq!(find_peaks(&v, 3, 0.0).unwrap(), vec![0, 2, 4]);
    }

    #[test]
    fn most_recent() {
        assert_eq!(most_recent_peak(&[1, 3]).unwrap(), 3);
        assert_eq!(most_recent_peak(&[7]).unwrap(), 7);
        assert!(matches!(most_recent_peak(&[]), Err(Error::NoPeak)));
    }

    #[test]
    fn tracker_step_cases() {
        let t = ReferenceTracker::default();
        let prev = bb(0.0, 0.0, 10.0, 10.0);
        let f = scored(1, &[(bb(50.0, 50.0, 60.0, 60.0), 0.9), (prev, 0.5)]);
        assert_eq!(t.step(&prev, &f), Some((prev, 0.5)));

        // IoU 0.5 vs 0.4
        let half = bb(0.0, 0.0, 10.0, 5.0);
        let fortyish = bb(0.0, 0.0, 10.0, 4.0);
        let f = scored(1, &[(fortyish, 0.9), (half, 0.8)]);
        assert_eq!(t.step(&prev, &f), Some((half, 0.8)));

        let f = scored(1, &[(bb(0.0, 0.0, 10.0, 2.0), 0.9)]);
        assert_eq!(t.step(&prev, &f), None);

        // score below floor
        let f = scored(1, &[(prev, 0.2)]);
        assert_eq!(t.step(&prev, &f), None);
    }

    #[test]
    fn tracker_tie_breaks() {
        let t = ReferenceTracker::default();
        let prev = bb(0.0, 0.0, 10.0, 10.0);
        let f = scored(1, &[(prev, 0.5), (prev, 0.7)]);
        assert_eq!(t.step(&prev, &f), Some((prev, 0.7)));
        let other = bb(0.0, 0.0, 10.0, 10.0);
        let f = scored(1, &[(prev, 0.7), (other, 0.7)]);
        assert_eq!(t.step(&prev, &f).unwrap().1, 0.7);
    }

    fn moving_clip(n: u64) -> Vec<FrameProposals> {
        (0..n)
            .map(|i| {
                let x = i as f64;
                frame(
                    i,
                    vec![
                        prop(bb(300.0, 300.0, 320.0, 320.0), 0.3, 0.3),
                        // shifting by 1px on a 20px box keeps IoU ~0.9
                        prop(bb(x, 0.0, x + 20.0, 20.0), 0.8 + 0.01 * x, 0.8),
                    ],
                )
            })
            .collect()
    }

    #[test]
    fn track_single_frame() {
        let clip = build_signal(&moving_clip(1), &PipelineConfig::default()).unwrap();
        let t = assemble_track(&clip, 0, &ReferenceTracker::default()).unwrap();
        assert_eq!(t.entries.len(), 1);
        assert_eq!(t.peak_frame, 0);
    }

    #[test]
    fn track_follows_persistent_object() {
        let clip = build_signal(&moving_clip(5), &PipelineConfig::default()).unwrap();
        let t = assemble_track(&clip, 2, &ReferenceTracker::default()).unwrap();
        let frames: Vec<u64> = t.entries.iter().map(|e| e.frame_idx).collect();
        assert_eq!(frames, vec![0, 1, 2, 3, 4]);
        assert_eq!(t.peak_frame, 2);
        assert_eq!(t.confidence, clip.signal.values[2]);
    }

    #[test]
    fn track_stops_without_overlap() {
        let frames = vec![
            frame(0, vec![prop(bb(100.0, 100.0, 120.0, 120.0), 0.9, 0.9)]),
            frame(1, vec![prop(bb(0.0, 0.0, 20.0, 20.0), 0.9, 0.9)]),
            frame(2, vec![prop(bb(200.0, 200.0, 220.0, 220.0), 0.9, 0.9)]),
        ];
        let clip = build_signal(&frames, &PipelineConfig::default()).unwrap();
        let t = assemble_track(&clip, 1, &ReferenceTracker::default()).unwrap();
        assert_eq!(t.entries.len(), 1);
    }

    #[test]
    fn track_needs_best_proposal() {
        let frames = vec![frame(0, vec![])];
        let clip = build_signal(&frames, &PipelineConfig::default()).unwrap();
        assert!(matches!(
            assemble_track(&clip, 0, &ReferenceTracker::default()),
            Err(Error::PeakWithoutProposal(0))
        ));
    }

    #[test]
    fn unreachable_score_floor_gives_singleton() {
        let clip = build_signal(&moving_clip(5), &PipelineConfig::default()).unwrap();
        let tracker = ReferenceTracker {
            iou_min: 0.3,
            track_score_min: 1.01,
        };
        let t = assemble_track(&clip, 3, &tracker).unwrap();
        assert_eq!(t.entries.len(), 1);
        assert_eq!(t.peak_frame, 3);
    }

    #[test]
    fn localize_picks_last_peak() {
        let data = ClipData {
            clip_id: "c".into(),
            query_id: "q".into(),
            frames: moving_clip(5),
        };
        let out = localize(&data, &PipelineConfig::default()).unwrap();
        let track = out.track.unwrap();
        // prior rises each frame so the last frame is the only peak
        assert_eq!(track.peak_frame, 4);
        assert_eq!(track.entries.len(), 5);
    }

    #[test]
    fn localize_reports_miss() {
        let data = ClipData {
            clip_id: "c".into(),
            query_id: "q".into(),
            frames: vec![frame(0, vec![]), frame(1, vec![])],
        };
        let out = localize(&data, &PipelineConfig::default()).unwrap();
        assert!(out.track.is_none());
        assert_eq!(out.signal.values, vec![0.0, 0.0]);
    }
}
