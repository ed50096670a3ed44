//! Beta–Bernoulli fusion of two similarity sources.
//!
//! The high-dimensional source (cosine similarity of embedding vectors)
//! fixes the mean of a `Beta(a, b)` prior, with `b` acting as the prior
//! strength. The low-dimensional source reports a score `s` that is read as
//! `w·s` successes out of `w` pseudo-trials. The conjugate update gives
//! `Beta(a + k, b + n − k)`, whose mean is the fused similarity. A hard gate
//! zeroes proposals where either source is at or below the threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default prior strength `b`.
pub const DEFAULT_PRIOR_STRENGTH: f64 = 4.85;
/// Default measurement weight `w` (number of pseudo-trials).
pub const DEFAULT_MEASUREMENT_WEIGHT: f64 = 5.0;
/// Default gate threshold applied to both sources.
pub const DEFAULT_GATE_THRESHOLD: f64 = 0.65;

/// Largest prior mean used when solving for `a`; keeps `1 - mean` away from 0.
const MEAN_CAP: f64 = 1.0 - 1e-12;

/// Non-negative embedding vector with a strictly positive norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("feature vector", "empty"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(
                "feature vector",
                format!("component {v} is not a finite non-negative value"),
            ));
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(Error::ZeroNorm);
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

/// Expected similarity under the prior, `E[x]` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PriorBelief(f64);

impl PriorBelief {
    pub fn new(mean: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mean) {
            return Err(Error::invalid(
                "prior mean",
                format!("{mean} is outside [0, 1]"),
            ));
        }
        Ok(Self(mean))
    }

    /// Clamps a raw ingested mean into `[0, 1]`, logging when it had to move.
    /// Fails only on NaN.
    pub fn clamped(raw: f64) -> Result<Self> {
        if raw.is_nan() {
            return Err(Error::invalid("prior mean", "NaN"));
        }
        let mean = raw.clamp(0.0, 1.0);
        if mean != raw {
            log::warn!("prior mean {raw} clamped to {mean}");
        }
        Ok(Self(mean))
    }

    pub fn mean(self) -> f64 {
        self.0
    }

    pub fn is_certain(self) -> bool {
        self.0 == 1.0
    }
}

impl TryFrom<f64> for PriorBelief {
    type Error = Error;

    fn try_from(mean: f64) -> Result<Self> {
        Self::new(mean)
    }
}

impl From<PriorBelief> for f64 {
    fn from(p: PriorBelief) -> Self {
        p.0
    }
}

/// Shape parameters of a Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    a: f64,
    b: f64,
}

impl BetaParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::invalid(
                "beta a",
                format!("{a} is not a positive finite value"),
            ));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::invalid(
                "beta b",
                format!("{b} is not a positive finite value"),
            ));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `a / (a + b)`.
    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }
}

/// A continuous score `s` observed with confidence `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    s: f64,
    w: f64,
}

impl Measurement {
    pub fn new(s: f64, w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::invalid(
                "measurement s",
                format!("{s} is outside [0, 1]"),
            ));
        }
        check_positive("measurement weight w", w)?;
        Ok(Self { s, w })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn w(&self) -> f64 {
        self.w
    }
}

/// Pseudo-trial counts; `k` may be fractional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoCounts {
    pub n: f64,
    pub k: f64,
}

/// Gated posterior-mean similarity of one proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedScore {
    pub value: f64,
    pub gate: bool,
    /// Set when the prior mean was exactly 1 and the closed form was skipped.
    pub degenerate: bool,
}

impl FusedScore {
    fn rejected(degenerate: bool) -> Self {
        Self {
            value: 0.0,
            gate: false,
            degenerate,
        }
    }
}

/// Fusion hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionParams {
    /// Prior strength (pseudo-failures of the prior).
    pub b: f64,
    /// Measurement weight (pseudo-trials).
    pub w: f64,
    pub threshold: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            b: DEFAULT_PRIOR_STRENGTH,
            w: DEFAULT_MEASUREMENT_WEIGHT,
            threshold: DEFAULT_GATE_THRESHOLD,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("b", self.b)?;
        check_positive("w", self.w)?;
        check_threshold(self.threshold)
    }
}

fn check_positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            field,
            format!("{v} is not a positive finite value"),
        ))
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::invalid(
            "gate threshold",
            format!("{t} is outside [0, 1]"),
        ))
    }
}

/// Cosine similarity of two non-negative vectors, clamped to `[0, 1]`.
pub fn cosine_similarity(u: &FeatureVector, v: &FeatureVector) -> Result<PriorBelief> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (x, y) in u.values().iter().zip(v.values()) {
        dot += x * y;
        uu += x * x;
        vv += y * y;
    }
    let denom = uu.sqrt() * vv.sqrt();
    if denom == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(PriorBelief((dot / denom).clamp(0.0, 1.0)))
}

/// Solves `a / (a + b) = mean` for `a`.
pub fn beta_from_mean(prior: PriorBelief, b: f64) -> Result<BetaParams> {
    let mean = prior.mean();
    if !(mean > 0.0 && mean < 1.0) {
        return Err(Error::invalid(
            "prior mean",
            format!("{mean} is not in (0, 1)"),
        ));
    }
    check_positive("b", b)?;
    let mean = mean.min(MEAN_CAP);
    BetaParams::new(b * mean / (1.0 - mean), b)
}

pub fn map_measurement(m: Measurement) -> PseudoCounts {
    PseudoCounts {
        n: m.w,
        k: m.w * m.s,
    }
}

/// Conjugate update `Beta(a + k, b + n − k)`.
pub fn posterior(prior: BetaParams, counts: PseudoCounts) -> BetaParams {
    BetaParams {
        a: prior.a + counts.k,
        b: prior.b + (counts.n - counts.k),
    }
}

pub fn posterior_mean(p: BetaParams) -> f64 {
    p.mean()
}

/// Both sources must strictly exceed `threshold`.
pub fn gate(prior: PriorBelief, m: Measurement, threshold: f64) -> bool {
    prior.mean() > threshold && m.s > threshold
}

/// Fuses one proposal's two scores.
///
/// A prior mean of exactly 1 cannot be turned into a finite `a`; such
/// proposals are flagged `degenerate` and, if gated in, carry value 1.
/// [`score_frame_proposals`] resolves them against the rest of the frame.
pub fn fuse(prior: PriorBelief, m: Measurement, b: f64, threshold: f64) -> Result<FusedScore> {
    check_positive("b", b)?;
    check_threshold(threshold)?;
    let degenerate = prior.is_certain();
    if !gate(prior, m, threshold) {
        return Ok(FusedScore::rejected(degenerate));
    }
    if degenerate {
        return Ok(FusedScore {
            value: 1.0,
            gate: true,
            degenerate: true,
        });
    }
    let post = posterior(beta_from_mean(prior, b)?, map_measurement(m));
    Ok(FusedScore {
        value: posterior_mean(post),
        gate: true,
        degenerate: false,
    })
}

/// Scores every proposal in one frame.
///
/// Proposals with prior mean 1 are resolved together: if any of them has a
/// measurement above the threshold, the one with the highest measurement
/// (earliest on ties) is kept with score 1 and every other proposal in the
/// frame is discarded. Otherwise they score 0 and the rest are fused normally.
pub fn score_frame_proposals(
    proposals: &[(PriorBelief, f64)],
    params: &FusionParams,
) -> Result<Vec<FusedScore>> {
    if proposals.is_empty() {
        return Err(Error::EmptyProposals);
    }
    params.validate()?;

    let mut scores = Vec::with_capacity(proposals.len());
    for &(prior, s) in proposals {
        let m = Measurement::new(s, params.w)?;
        scores.push(fuse(prior, m, params.b, params.threshold)?);
    }

    let mut kept: Option<usize> = None;
    for (i, (score, &(_, s))) in scores.iter().zip(proposals).enumerate() {
        if score.degenerate && score.gate && kept.is_none_or(|j| s > proposals[j].1) {
            kept = Some(i);
        }
    }
    if let Some(kept) = kept {
        for (i, score) in scores.iter_mut().enumerate() {
            if i == kept {
                score.value = 1.0;
            } else {
                *score = FusedScore::rejected(score.degenerate);
            }
        }
    }
    Ok(scores)
}
