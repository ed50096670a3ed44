//! Random search over the fusion hyperparameters `(b, w)`.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::localization::ClipData;
use crate::metrics::{ClipAnnotation, MetricConfig, MetricReport};
use crate::pipeline::run_and_evaluate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Objective {
    #[default]
    #[serde(rename = "tAP")]
    TemporalAp,
    #[serde(rename = "stAP")]
    SpatioTemporalAp,
    #[serde(rename = "success")]
    Success,
    #[serde(rename = "recovery")]
    Recovery,
}

impl Objective {
    pub fn of(self, report: &MetricReport) -> f64 {
        match self {
            Objective::TemporalAp => report.t_ap,
            Objective::SpatioTemporalAp => report.st_ap,
            Objective::Success => report.success,
            Objective::Recovery => report.recovery,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::TemporalAp => "tAP",
            Objective::SpatioTemporalAp => "stAP",
            Objective::Success => "success",
            Objective::Recovery => "recovery",
        })
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tAP" => Ok(Objective::TemporalAp),
            "stAP" => Ok(Objective::SpatioTemporalAp),
            "success" => Ok(Objective::Success),
            "recovery" => Ok(Objective::Recovery),
            other => Err(Error::invalid(
                "objective",
                format!("unknown objective {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSpace {
    pub b_range: (f64, f64),
    pub w_range: (f64, f64),
    pub n_trials: usize,
    pub seed: u64,
    pub objective: Objective,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            b_range: (0.5, 20.0),
            w_range: (0.5, 20.0),
            n_trials: 50,
            seed: 0,
            objective: Objective::TemporalAp,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        for (field, (lo, hi)) in [("b range", self.b_range), ("w range", self.w_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi) {
                return Err(Error::invalid(
                    field,
                    format!("({lo}, {hi}) is not a positive interval"),
                ));
            }
        }
        if self.n_trials == 0 {
            return Err(Error::invalid("n_trials", "must be at least 1"));
        }
        Ok(())
    }

    /// The `(b, w)` pairs tried, in trial order.
    pub fn sample(&self) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.n_trials)
            .map(|_| {
                let b = rng.random_range(self.b_range.0..self.b_range.1);
                let w = rng.random_range(self.w_range.0..self.w_range.1);
                (b, w)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    pub index: usize,
    pub b: f64,
    pub w: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best_b: f64,
    pub best_w: f64,
    pub best_objective: f64,
    pub trials: Vec<Trial>,
}

impl SearchOutcome {
    /// Tab-separated trial log with a header row.
    pub fn trial_log(&self, objective: Objective) -> String {
        let mut out = format!("trial\tb\tw\t{objective}\n");
        for t in &self.trials {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", t.index, t.b, t.w, t.objective);
        }
        out
    }
}

/// Scores `(b, w)` pairs with the full localize-and-evaluate pipeline.
///
/// Only `b` and `w` of `base` are replaced; everything else is used as is.
pub fn score_pairs(
    pairs: &[(f64, f64)],
    clips: &[ClipData],
    annotations: &[ClipAnnotation],
    base: &PipelineConfig,
    metric_cfg: &MetricConfig,
    objective: Objective,
) -> Result<Vec<f64>> {
    pairs
        .par_iter()
        .map(|&(b, w)| {
            let cfg = PipelineConfig { b, w, ..*base };
            Ok(objective.of(&run_and_evaluate(clips, annotations, &cfg, metric_cfg)?))
        })
        .collect()
}

/// Uniform random search; the earliest trial wins ties.
pub fn random_search(
    space: &SearchSpace,
    clips: &[ClipData],
    annotations: &[ClipAnnotation],
    base: &PipelineConfig,
    metric_cfg: &MetricConfig,
) -> Result<SearchOutcome> {
    space.validate()?;
    if clips.is_empty() {
        return Err(Error::invalid("clips", "no clips to tune on"));
    }
    base.validate()?;

    let pairs = space.sample();
    let scores = score_pairs(
        &pairs,
        clips,
        annotations,
        base,
        metric_cfg,
        space.objective,
    )?;
    let trials: Vec<Trial> = pairs
        .iter()
        .zip(&scores)
        .enumerate()
        .map(|(index, (&(b, w), &objective))| Trial {
            index,
            b,
            w,
            objective,
        })
        .collect();

    let best = trials
        .iter()
        .fold(None::<&Trial>, |best, t| match best {
            Some(b) if b.objective >= t.objective => Some(b),
            _ => Some(t),
        })
        .expect("at least one trial");
    Ok(SearchOutcome {
        best_b: best.b,
        best_w: best.w,
        best_objective: best.objective,
        trials,
    })
}
