//! File-to-file entry points behind the `bayes-vq` subcommands.
//!
//! Each command writes into an output directory using fixed file names.

use std::path::{Path, PathBuf};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{evaluate as evaluate_predictions, MetricConfig, MetricReport, Prediction};
use crate::pipeline::{localize_all, with_workers};
use crate::scenario::{generate_scenario, ScenarioConfig};
use crate::tuner::{random_search, SearchOutcome, SearchSpace};

pub const CLIPS_FILE: &str = "clips.jsonl";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const SIGNALS_FILE: &str = "signals.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "report.txt";
pub const TRIALS_FILE: &str = "trials.tsv";
pub const BEST_CONFIG_FILE: &str = "best_config.toml";

fn prepare(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn generate(cfg: &ScenarioConfig, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let (clips, anns) = generate_scenario(cfg)?;
    prepare(out_dir)?;
    let clips_path = out_dir.join(CLIPS_FILE);
    let anns_path = out_dir.join(ANNOTATIONS_FILE);
    io::write_clips(&clips_path, &clips)?;
    io::write_annotations(&anns_path, &anns)?;
    Ok((clips_path, anns_path))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalizeSummary {
    pub clips: usize,
    pub misses: usize,
}

pub fn localize(
    input: &Path,
    cfg: &PipelineConfig,
    workers: usize,
    out_dir: &Path,
) -> Result<LocalizeSummary> {
    cfg.validate()?;
    let clips = io::load_clips(input)?;
    let localized = with_workers(workers, || localize_all(&clips, cfg))??;
    prepare(out_dir)?;
    let predictions: Vec<Prediction> = localized.iter().map(|l| l.prediction.clone()).collect();
    io::write_predictions(&out_dir.join(PREDICTIONS_FILE), &predictions)?;
    io::write_signals(&out_dir.join(SIGNALS_FILE), &localized)?;
    let misses = predictions.iter().filter(|p| p.track.is_none()).count();
    for p in predictions.iter().filter(|p| p.track.is_none()) {
        log::info!("no peak for {}/{}", p.clip_id, p.query_id);
    }
    Ok(LocalizeSummary {
        clips: predictions.len(),
        misses,
    })
}

pub fn evaluate(
    predictions: &Path,
    annotations: &Path,
    metric_cfg: &MetricConfig,
    method: &str,
    out_dir: &Path,
) -> Result<MetricReport> {
    let preds = io::load_predictions(predictions)?;
    let anns = io::load_annotations(annotations)?;
    let report = evaluate_predictions(&preds, &anns, metric_cfg)?;
    prepare(out_dir)?;
    io::write_report(&out_dir.join(REPORT_FILE), &report)?;
    let table = out_dir.join(TABLE_FILE);
    std::fs::write(&table, report.table(method)).map_err(|e| Error::io(&table, e))?;
    Ok(report)
}

pub fn tune(
    input: &Path,
    annotations: &Path,
    space: &SearchSpace,
    base: &PipelineConfig,
    metric_cfg: &MetricConfig,
    workers: usize,
    out_dir: &Path,
) -> Result<SearchOutcome> {
    let clips = io::load_clips(input)?;
    let anns = io::load_annotations(annotations)?;
    let outcome = with_workers(workers, || {
        random_search(space, &clips, &anns, base, metric_cfg)
    })??;
    prepare(out_dir)?;
    let trials = out_dir.join(TRIALS_FILE);
    std::fs::write(&trials, outcome.trial_log(space.objective))
        .map_err(|e| Error::io(&trials, e))?;
    let best = PipelineConfig {
        b: outcome.best_b,
        w: outcome.best_w,
        ..*base
    };
    let best_path = out_dir.join(BEST_CONFIG_FILE);
    std::fs::write(&best_path, best.to_toml()).map_err(|e| Error::io(&best_path, e))?;
    Ok(outcome)
}

/// Reads a flat TOML scenario file; unknown keys fail.
pub fn load_scenario_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.toml");
        std::fs::write(&p, "n_clips = 3\nseed = 11\n").unwrap();
        let cfg = load_scenario_config(&p).unwrap();
        assert_eq!((cfg.n_clips, cfg.seed), (3, 11));
        assert_eq!(
            cfg.frames_per_clip,
            ScenarioConfig::default().frames_per_clip
        );
        std::fs::write(&p, "clips = 3\n").unwrap();
        assert!(load_scenario_config(&p).is_err());
    }
}
