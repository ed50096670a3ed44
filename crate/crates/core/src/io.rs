//! Newline-delimited JSON files for clips, annotations, predictions and signals.
//!
//! One record per line; blank lines are skipped. Floats are written as the
//! shortest decimal that reads back to the same value.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{cosine_similarity, FeatureVector, PriorBelief};
use crate::geometry::BoundingBox;
use crate::localization::{ClipData, FrameProposals, Proposal, SimilaritySignal};
use crate::metrics::{ClipAnnotation, MetricReport, Prediction};
use crate::pipeline::LocalizedClip;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxRecord {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeaturePair {
    proposal: Vec<f64>,
    query: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProposalRecord {
    #[serde(rename = "box")]
    bbox: BoxRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prior_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prior_features: Option<FeaturePair>,
    measurement_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    frame_idx: u64,
    proposals: Vec<ProposalRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClipRecord {
    clip_id: String,
    query_id: String,
    frames: Vec<FrameRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalRecord {
    pub clip_id: String,
    pub query_id: String,
    #[serde(flatten)]
    pub signal: SimilaritySignal,
}

impl ClipRecord {
    fn into_clip(self) -> Result<ClipData> {
        let fail = |frame: Option<u64>, field: &str, reason: String| Error::Record {
            clip_id: self.clip_id.clone(),
            query_id: self.query_id.clone(),
            reason: match frame {
                Some(f) => format!("frame {f}: {field}: {reason}"),
                None => format!("{field}: {reason}"),
            },
        };
        if self.clip_id.is_empty() || self.query_id.is_empty() {
            return Err(fail(None, "clip_id/query_id", "must be non-empty".into()));
        }
        for pair in self.frames.windows(2) {
            if pair[1].frame_idx <= pair[0].frame_idx {
                return Err(fail(
                    Some(pair[1].frame_idx),
                    "frame_idx",
                    format!("not after frame {}", pair[0].frame_idx),
                ));
            }
        }

        let mut frames = Vec::with_capacity(self.frames.len());
        for frame in &self.frames {
            let f = Some(frame.frame_idx);
            let mut proposals = Vec::with_capacity(frame.proposals.len());
            for p in &frame.proposals {
                let b = p.bbox;
                let bbox = BoundingBox::new(b.x1, b.y1, b.x2, b.y2)
                    .map_err(|e| fail(f, "box", e.to_string()))?;
                let prior = match (&p.prior_mean, &p.prior_features) {
                    (Some(mean), None) => PriorBelief::clamped(*mean)
                        .map_err(|e| fail(f, "prior_mean", e.to_string()))?,
                    (None, Some(pair)) => {
                        let to_vec = |v: &Vec<f64>| FeatureVector::new(v.clone());
                        to_vec(&pair.proposal)
                            .and_then(|u| Ok((u, to_vec(&pair.query)?)))
                            .and_then(|(u, v)| cosine_similarity(&u, &v))
                            .map_err(|e| fail(f, "prior_features", e.to_string()))?
                    }
                    _ => {
                        return Err(fail(
                            f,
                            "prior",
                            "exactly one of prior_mean and prior_features is required".into(),
                        ))
                    }
                };
                if !(0.0..=1.0).contains(&p.measurement_s) {
                    return Err(fail(
                        f,
                        "measurement_s",
                        format!("{} is outside [0, 1]", p.measurement_s),
                    ));
                }
                proposals.push(Proposal {
                    bbox,
                    prior,
                    measurement_s: p.measurement_s,
                });
            }
            frames.push(FrameProposals {
                frame_idx: frame.frame_idx,
                proposals,
            });
        }
        Ok(ClipData {
            clip_id: self.clip_id,
            query_id: self.query_id,
            frames,
        })
    }

    fn from_clip(clip: &ClipData) -> Self {
        ClipRecord {
            clip_id: clip.clip_id.clone(),
            query_id: clip.query_id.clone(),
            frames: clip
                .frames
                .iter()
                .map(|f| FrameRecord {
                    frame_idx: f.frame_idx,
                    proposals: f
                        .proposals
                        .iter()
                        .map(|p| ProposalRecord {
                            bbox: BoxRecord {
                                x1: p.bbox.x1(),
                                y1: p.bbox.y1(),
                                x2: p.bbox.x2(),
                                y2: p.bbox.y2(),
                            },
                            prior_mean: Some(p.prior.mean()),
                            prior_features: None,
                            measurement_s: p.measurement_s,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            source,
        })?;
        out.push(record);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn check_unique<'a>(keys: impl Iterator<Item = (&'a str, &'a str)>) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (c, q) in keys {
        if !seen.insert((c, q)) {
            return Err(Error::DuplicateKey(c.to_owned(), q.to_owned()));
        }
    }
    Ok(())
}

pub fn load_clips(path: &Path) -> Result<Vec<ClipData>> {
    let clips = read_jsonl::<ClipRecord>(path)?
        .into_iter()
        .map(ClipRecord::into_clip)
        .collect::<Result<Vec<_>>>()?;
    check_unique(
        clips
            .iter()
            .map(|c| (c.clip_id.as_str(), c.query_id.as_str())),
    )?;
    Ok(clips)
}

pub fn write_clips(path: &Path, clips: &[ClipData]) -> Result<()> {
    write_jsonl(path, clips.iter().map(ClipRecord::from_clip))
}

pub fn load_annotations(path: &Path) -> Result<Vec<ClipAnnotation>> {
    let anns: Vec<ClipAnnotation> = read_jsonl(path)?;
    for a in &anns {
        a.validate()?;
    }
    check_unique(
        anns.iter()
            .map(|a| (a.clip_id.as_str(), a.query_id.as_str())),
    )?;
    Ok(anns)
}

pub fn write_annotations(path: &Path, anns: &[ClipAnnotation]) -> Result<()> {
    write_jsonl(path, anns)
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let preds: Vec<Prediction> = read_jsonl(path)?;
    for p in &preds {
        p.validate()?;
    }
    check_unique(
        preds
            .iter()
            .map(|p| (p.clip_id.as_str(), p.query_id.as_str())),
    )?;
    Ok(preds)
}

pub fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    write_jsonl(path, preds)
}

pub fn write_signals(path: &Path, localized: &[LocalizedClip]) -> Result<()> {
    write_jsonl(
        path,
        localized.iter().map(|l| SignalRecord {
            clip_id: l.prediction.clip_id.clone(),
            query_id: l.prediction.query_id.clone(),
            signal: l.signal.clone(),
        }),
    )
}

pub fn load_signals(path: &Path) -> Result<Vec<SignalRecord>> {
    read_jsonl(path)
}

pub fn write_report(path: &Path, report: &MetricReport) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_report(path: &Path) -> Result<MetricReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: path.to_owned(),
        line: 0,
        source,
    })
}
