//! Deterministic synthetic clips with two noisy similarity sources.
//!
//! Each clip holds one query object that moves along a straight (clamped)
//! path. It is on screen during a final occurrence window that ends a few
//! frames before the clip does, and sometimes during one earlier window.
//! Every other proposal is a distractor at a random location whose scores
//! exceed the gate in each source at that source's false-positive rate.
//!
//! All randomness comes from ChaCha streams keyed by `(seed, clip, frame)`,
//! so output does not depend on generation order or thread count.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{PriorBelief, DEFAULT_GATE_THRESHOLD};
use crate::geometry::BoundingBox;
use crate::localization::{ClipData, FrameProposals, Proposal};
use crate::metrics::{ClipAnnotation, GtEntry};

const FRAME_WIDTH: f64 = 640.0;
const FRAME_HEIGHT: f64 = 480.0;
const MIN_BOX: f64 = 40.0;
const MAX_BOX: f64 = 120.0;
const MAX_SPEED: f64 = 2.0;
const GT_SCORE_MEAN: f64 = 0.9;
const PASS_LEVEL: f64 = DEFAULT_GATE_THRESHOLD;

/// Stream id for clip-level draws; frame streams use the frame index.
const CLIP_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_clips: usize,
    pub frames_per_clip: usize,
    pub proposals_per_frame: usize,
    /// Chance that the object is visible in a frame of one of its windows.
    pub gt_visibility: f64,
    /// Chance a distractor's prior score exceeds the gate.
    pub fp_rate_prior: f64,
    /// Chance a distractor's measurement score exceeds the gate.
    pub fp_rate_measurement: f64,
    /// 0 gives independent source failures, 1 gives maximally shared ones.
    pub fp_correlation: f64,
    pub score_noise_sd: f64,
    pub box_jitter_sd: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_clips: 20,
            frames_per_clip: 60,
            proposals_per_frame: 8,
            gt_visibility: 0.9,
            fp_rate_prior: 0.3,
            fp_rate_measurement: 0.3,
            fp_correlation: 0.0,
            score_noise_sd: 0.05,
            box_jitter_sd: 2.0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, n) in [
            ("n_clips", self.n_clips),
            ("frames_per_clip", self.frames_per_clip),
            ("proposals_per_frame", self.proposals_per_frame),
        ] {
            if n == 0 {
                return Err(Error::invalid(field, "must be positive"));
            }
        }
        for (field, p) in [
            ("gt_visibility", self.gt_visibility),
            ("fp_rate_prior", self.fp_rate_prior),
            ("fp_rate_measurement", self.fp_rate_measurement),
            ("fp_correlation", self.fp_correlation),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(field, format!("{p} is outside [0, 1]")));
            }
        }
        for (field, sd) in [
            ("score_noise_sd", self.score_noise_sd),
            ("box_jitter_sd", self.box_jitter_sd),
        ] {
            if !(sd.is_finite() && sd >= 0.0) {
                return Err(Error::invalid(
                    field,
                    format!("{sd} is not a finite non-negative value"),
                ));
            }
        }
        Ok(())
    }

    /// Probability that a distractor passes the gate in both sources.
    pub fn joint_false_pass_rate(&self) -> f64 {
        let (p1, p2, c) = (
            self.fp_rate_prior,
            self.fp_rate_measurement,
            self.fp_correlation,
        );
        c * p1.min(p2) + (1.0 - c) * p1 * p2
    }
}

/// Seeds a ChaCha stream from `(seed, clip, stream)`.
pub fn keyed_rng(seed: u64, clip: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&clip.to_le_bytes());
    key[16..24].copy_from_slice(&stream.to_le_bytes());
    key[24..].copy_from_slice(b"vq-scene");
    ChaCha8Rng::from_seed(key)
}

/// Draws a distractor's (prior, measurement) scores.
///
/// With probability `fp_correlation` both pass decisions share one uniform
/// draw, otherwise they are independent; each marginal rate is preserved.
pub fn sample_distractor_scores<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> (f64, f64) {
    let u_prior: f64 = rng.random();
    let u_meas: f64 = if rng.random_bool(cfg.fp_correlation) {
        u_prior
    } else {
        rng.random()
    };
    let prior = score_for(u_prior < cfg.fp_rate_prior, rng);
    let meas = score_for(u_meas < cfg.fp_rate_measurement, rng);
    (prior, meas)
}

fn score_for<R: Rng + ?Sized>(pass: bool, rng: &mut R) -> f64 {
    if pass {
        // (PASS_LEVEL, 1]
        1.0 - rng.random_range(0.0..1.0 - PASS_LEVEL)
    } else {
        rng.random_range(0.0..=PASS_LEVEL)
    }
}

fn truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    let normal = Normal::new(mean, sd).expect("sd is finite and positive");
    loop {
        let x = normal.sample(rng);
        if (0.0..=1.0).contains(&x) {
            return x;
        }
    }
}

fn random_box<R: Rng + ?Sized>(rng: &mut R) -> BoundingBox {
    let w = rng.random_range(MIN_BOX..=MAX_BOX);
    let h = rng.random_range(MIN_BOX..=MAX_BOX);
    let x = rng.random_range(0.0..=FRAME_WIDTH - w);
    let y = rng.random_range(0.0..=FRAME_HEIGHT - h);
    BoundingBox::new(x, y, x + w, y + h).expect("sizes are positive")
}

fn jittered<R: Rng + ?Sized>(b: &BoundingBox, sd: f64, rng: &mut R) -> BoundingBox {
    if sd == 0.0 {
        return *b;
    }
    let normal = Normal::new(0.0, sd).expect("sd is finite and positive");
    let x1 = (b.x1() + normal.sample(rng)).max(0.0);
    let y1 = (b.y1() + normal.sample(rng)).max(0.0);
    let x2 = (b.x2() + normal.sample(rng)).max(x1 + 1.0);
    let y2 = (b.y2() + normal.sample(rng)).max(y1 + 1.0);
    BoundingBox::new(x1, y1, x2, y2).expect("corners are ordered and non-negative")
}

/// Clip-level layout: object path and occurrence windows.
struct ClipPlan {
    size: (f64, f64),
    origin: (f64, f64),
    velocity: (f64, f64),
    /// Inclusive frame positions of the last occurrence.
    last: (usize, usize),
    earlier: Option<(usize, usize)>,
}

impl ClipPlan {
    fn draw(frames: usize, rng: &mut ChaCha8Rng) -> Self {
        let size = (
            rng.random_range(MIN_BOX..=MAX_BOX),
            rng.random_range(MIN_BOX..=MAX_BOX),
        );
        let origin = (
            rng.random_range(0.0..=FRAME_WIDTH - size.0),
            rng.random_range(0.0..=FRAME_HEIGHT - size.1),
        );
        let velocity = (
            rng.random_range(-MAX_SPEED..=MAX_SPEED),
            rng.random_range(-MAX_SPEED..=MAX_SPEED),
        );

        let len = rng.random_range((frames / 6).max(1)..=(frames / 3).max(1));
        let trailing = rng.random_range(0..=frames / 20);
        let end = frames - 1 - trailing.min(frames - 1);
        let start = (end + 1).saturating_sub(len);

        let earlier = if start >= 4 && rng.random_bool(0.5) {
            let e_len = rng.random_range(1..=(len / 2).max(1).min(start - 2));
            let e_end = rng.random_range(e_len - 1..=start - 3);
            Some((e_end + 1 - e_len, e_end))
        } else {
            None
        };
        Self {
            size,
            origin,
            velocity,
            last: (start, end),
            earlier,
        }
    }

    fn in_window(&self, pos: usize) -> bool {
        let inside = |(a, b): (usize, usize)| a <= pos && pos <= b;
        inside(self.last) || self.earlier.is_some_and(inside)
    }

    fn object_box(&self, pos: usize) -> BoundingBox {
        let t = pos as f64;
        let x = (self.origin.0 + self.velocity.0 * t).clamp(0.0, FRAME_WIDTH - self.size.0);
        let y = (self.origin.1 + self.velocity.1 * t).clamp(0.0, FRAME_HEIGHT - self.size.1);
        BoundingBox::new(x, y, x + self.size.0, y + self.size.1).expect("sizes are positive")
    }
}

fn generate_clip(cfg: &ScenarioConfig, clip: usize) -> (ClipData, ClipAnnotation) {
    let clip_key = clip as u64;
    let plan = ClipPlan::draw(
        cfg.frames_per_clip,
        &mut keyed_rng(cfg.seed, clip_key, CLIP_STREAM),
    );
    let clip_id = format!("clip_{clip:05}");
    let query_id = "q0".to_string();

    let mut frames = Vec::with_capacity(cfg.frames_per_clip);
    let mut gt_track = Vec::new();
    for pos in 0..cfg.frames_per_clip {
        let mut rng = keyed_rng(cfg.seed, clip_key, pos as u64);
        let visible_draw = rng.random_bool(cfg.gt_visibility);
        // the last window always shows the object at least once
        let forced = pos == plan.last.1 && gt_track.is_empty();
        let visible = plan.in_window(pos) && (visible_draw || forced);
        let gt_slot = visible.then(|| rng.random_range(0..cfg.proposals_per_frame));

        let mut proposals = Vec::with_capacity(cfg.proposals_per_frame);
        for slot in 0..cfg.proposals_per_frame {
            let (bbox, prior, s) = if gt_slot == Some(slot) {
                let truth = plan.object_box(pos);
                (
                    jittered(&truth, cfg.box_jitter_sd, &mut rng),
                    truncated_normal(GT_SCORE_MEAN, cfg.score_noise_sd, &mut rng),
                    truncated_normal(GT_SCORE_MEAN, cfg.score_noise_sd, &mut rng),
                )
            } else {
                let bbox = random_box(&mut rng);
                let (prior, s) = sample_distractor_scores(cfg, &mut rng);
                (bbox, prior, s)
            };
            proposals.push(Proposal {
                bbox,
                prior: PriorBelief::new(prior).expect("scores are drawn inside [0, 1]"),
                measurement_s: s,
            });
        }
        if visible && pos >= plan.last.0 {
            gt_track.push(GtEntry {
                frame_idx: pos as u64,
                bbox: plan.object_box(pos),
            });
        }
        frames.push(FrameProposals {
            frame_idx: pos as u64,
            proposals,
        });
    }

    (
        ClipData {
            clip_id: clip_id.clone(),
            query_id: query_id.clone(),
            frames,
        },
        ClipAnnotation {
            clip_id,
            query_id,
            gt_track,
        },
    )
}

/// Generates `cfg.n_clips` clips and their ground-truth last-occurrence tracks.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<(Vec<ClipData>, Vec<ClipAnnotation>)> {
    cfg.validate()?;
    Ok((0..cfg.n_clips)
        .into_par_iter()
        .map(|i| generate_clip(cfg, i))
        .unzip())
}
