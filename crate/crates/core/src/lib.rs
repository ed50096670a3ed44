//! Bayesian fusion of proposal similarity scores for visual query localization.
//!
//! A query object is located in a clip by scoring every region proposal
//! against it with two sources: an embedding cosine similarity (the prior
//! mean) and a learned matching score (the measurement). The two are merged
//! by a Beta–Bernoulli update ([`fusion`]), the per-frame maxima form a
//! similarity signal whose most recent peak seeds a response track
//! ([`localization`]), and predictions are scored with temporal and
//! spatio-temporal metrics ([`metrics`]). [`scenario`] produces seeded
//! synthetic clips for both sources, and [`tuner`] searches `(b, w)`.

pub mod commands;
pub mod config;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod localization;
pub mod metrics;
pub mod pipeline;
pub mod scenario;
pub mod tuner;

pub use config::{PipelineConfig, ScoringMode};
pub use error::{Error, Result};
pub use fusion::{FusedScore, FusionParams, PriorBelief};
pub use geometry::BoundingBox;
pub use localization::{ClipData, ResponseTrack, SimilaritySignal};
pub use metrics::{ClipAnnotation, MetricConfig, MetricReport, Prediction};
pub use scenario::ScenarioConfig;
pub use tuner::{Objective, SearchSpace};
