//! Whole-dataset localization and evaluation.

use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::localization::{localize, ClipData, SimilaritySignal};
use crate::metrics::{evaluate, ClipAnnotation, MetricConfig, MetricReport, Prediction};

/// Localization output for one (clip, query).
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedClip {
    pub prediction: Prediction,
    pub signal: SimilaritySignal,
}

/// Localizes every clip on the current rayon pool; results are ordered by
/// `(clip_id, query_id)`.
pub fn localize_all(clips: &[ClipData], cfg: &PipelineConfig) -> Result<Vec<LocalizedClip>> {
    cfg.validate()?;
    let mut out = clips
        .par_iter()
        .map(|clip| {
            let loc = localize(clip, cfg)?;
            Ok(LocalizedClip {
                prediction: Prediction {
                    clip_id: clip.clip_id.clone(),
                    query_id: clip.query_id.clone(),
                    track: loc.track,
                },
                signal: loc.signal,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| {
        (&a.prediction.clip_id, &a.prediction.query_id)
            .cmp(&(&b.prediction.clip_id, &b.prediction.query_id))
    });
    Ok(out)
}

/// Localizes all clips and scores the predictions.
pub fn run_and_evaluate(
    clips: &[ClipData],
    annotations: &[ClipAnnotation],
    cfg: &PipelineConfig,
    metric_cfg: &MetricConfig,
) -> Result<MetricReport> {
    let predictions: Vec<Prediction> = localize_all(clips, cfg)?
        .into_iter()
        .map(|l| l.prediction)
        .collect();
    evaluate(&predictions, annotations, metric_cfg)
}

/// Runs `f` on a dedicated pool with `workers` threads (0 means all cores).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| crate::Error::Pool(e.to_string()))?;
    Ok(pool.install(f))
}
