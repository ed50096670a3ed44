//! Pipeline configuration and its flat TOML file form.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{
    FusionParams, DEFAULT_GATE_THRESHOLD, DEFAULT_MEASUREMENT_WEIGHT, DEFAULT_PRIOR_STRENGTH,
};
use crate::localization::ReferenceTracker;

/// How per-proposal scores are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// Gated Beta–Bernoulli fusion of both sources.
    #[default]
    Fused,
    /// Raw measurement score, no prior and no gate.
    MeasurementOnly,
}

impl fmt::Display for ScoringMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoringMode::Fused => f.write_str("fused"),
            ScoringMode::MeasurementOnly => f.write_str("measurement_only"),
        }
    }
}

impl FromStr for ScoringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fused" => Ok(ScoringMode::Fused),
            "measurement_only" => Ok(ScoringMode::MeasurementOnly),
            other => Err(Error::invalid("mode", format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub b: f64,
    pub w: f64,
    pub gate_threshold: f64,
    pub sample_rate: f64,
    pub smoothing_window: usize,
    pub min_peak_height: f64,
    pub iou_min: f64,
    pub track_score_min: f64,
    pub mode: ScoringMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            b: DEFAULT_PRIOR_STRENGTH,
            w: DEFAULT_MEASUREMENT_WEIGHT,
            gate_threshold: DEFAULT_GATE_THRESHOLD,
            sample_rate: 1.0,
            smoothing_window: 1,
            min_peak_height: 0.0,
            iou_min: 0.3,
            track_score_min: 0.3,
            mode: ScoringMode::Fused,
        }
    }
}

impl PipelineConfig {
    pub fn fusion(&self) -> FusionParams {
        FusionParams {
            b: self.b,
            w: self.w,
            threshold: self.gate_threshold,
        }
    }

    pub fn tracker(&self) -> ReferenceTracker {
        ReferenceTracker {
            iou_min: self.iou_min,
            track_score_min: self.track_score_min,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fusion().validate()?;
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(Error::invalid(
                "sample_rate",
                format!("{} is outside (0, 1]", self.sample_rate),
            ));
        }
        if self.smoothing_window == 0 || self.smoothing_window.is_multiple_of(2) {
            return Err(Error::invalid(
                "smoothing_window",
                format!("{} is not an odd positive integer", self.smoothing_window),
            ));
        }
        for (field, v) in [
            ("min_peak_height", self.min_peak_height),
            ("iou_min", self.iou_min),
            ("track_score_min", self.track_score_min),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(field, format!("{v} is not finite")));
            }
        }
        Ok(())
    }

    /// Reads a config file; missing keys take their defaults, unknown keys fail.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Config {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|e| Error::Config {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }
}
