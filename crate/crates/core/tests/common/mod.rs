#![allow(dead_code)]

use bayes_vq::geometry::BoundingBox;
use bayes_vq::localization::{ClipData, FrameProposals, Proposal};
use bayes_vq::metrics::{ClipAnnotation, GtEntry};
use bayes_vq::PriorBelief;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn ln_cosh(u: f64) -> f64 {
    let a = u.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Tanh-sinh nodes on `[lo, hi]` with step `h`: `(ln weight, x, 1 - x)`.
///
/// Distances to both ends are computed directly so endpoint singularities
/// and mass piled against `x = 1` keep full precision.
fn tanh_sinh_nodes(lo: f64, hi: f64, h: f64) -> Vec<(f64, f64, f64)> {
    let half = 0.5 * (hi - lo);
    let k_max = (6.5 / h).ceil() as i64;
    let mut nodes = Vec::new();
    for k in -k_max..=k_max {
        let t = k as f64 * h;
        let u = std::f64::consts::FRAC_PI_2 * t.sinh();
        let from_lo = half * 2.0 / (1.0 + (-2.0 * u).exp());
        let to_hi = half * 2.0 / (1.0 + (2.0 * u).exp());
        if from_lo <= 0.0 || to_hi <= 0.0 || !from_lo.is_finite() || !to_hi.is_finite() {
            continue;
        }
        let ln_w = half.ln() + std::f64::consts::FRAC_PI_2.ln() + ln_cosh(t) - 2.0 * ln_cosh(u);
        nodes.push((ln_w + h.ln(), lo + from_lo, (1.0 - hi) + to_hi));
    }
    nodes
}

/// Mean of `Beta(alpha, beta)` by quadrature of `x · density` over `[0, 1]`.
///
/// Works on log-densities and never evaluates the Beta function: the mean is
/// the ratio of the first and zeroth moment integrals. A piece touching an
/// endpoint where the density is singular (`alpha < 1` at 0, `beta < 1` at 1)
/// is integrated in `u = x^alpha` or `v = (1 - x)^beta`, which makes the
/// integrand bounded.
pub fn beta_mean_by_quadrature(alpha: f64, beta: f64) -> f64 {
    let split = if alpha > 1.0 && beta > 1.0 {
        (alpha - 1.0) / (alpha + beta - 2.0)
    } else {
        0.5
    };

    // each node: (ln weight + ln density, ln x)
    let piece_nodes = |lo: f64, hi: f64, h: f64| -> Vec<(f64, f64)> {
        if lo == 0.0 && alpha < 1.0 {
            let top = hi.powf(alpha);
            tanh_sinh_nodes(0.0, top, h)
                .into_iter()
                .map(|(ln_w, u, _)| {
                    let ln_x = u.ln() / alpha;
                    let one_minus_x = -ln_x.exp_m1();
                    (ln_w - alpha.ln() + (beta - 1.0) * one_minus_x.ln(), ln_x)
                })
                .collect()
        } else if hi == 1.0 && beta < 1.0 {
            let top = (1.0 - lo).powf(beta);
            tanh_sinh_nodes(0.0, top, h)
                .into_iter()
                .map(|(ln_w, v, _)| {
                    let one_minus_x = (v.ln() / beta).exp();
                    let ln_x = (-one_minus_x).ln_1p();
                    (ln_w - beta.ln() + (alpha - 1.0) * ln_x, ln_x)
                })
                .collect()
        } else {
            tanh_sinh_nodes(lo, hi, h)
                .into_iter()
                .map(|(ln_w, x, one_minus_x)| {
                    let ln_x = x.ln();
                    (
                        ln_w + (alpha - 1.0) * ln_x + (beta - 1.0) * one_minus_x.ln(),
                        ln_x,
                    )
                })
                .collect()
        }
    };

    let mut previous = f64::NAN;
    let mut h = 0.5;
    for level in 0..12 {
        let mut zeroth = Vec::new();
        let mut first = Vec::new();
        for (lo, hi) in [(0.0, split), (split, 1.0)] {
            if hi <= lo {
                continue;
            }
            for (ln_f, ln_x) in piece_nodes(lo, hi, h) {
                if ln_f.is_nan() {
                    continue;
                }
                zeroth.push(ln_f);
                first.push(ln_f + ln_x);
            }
        }
        let mean = (log_sum_exp(&first) - log_sum_exp(&zeroth)).exp();
        if level >= 3 && (mean - previous).abs() < 1e-14 {
            return mean;
        }
        previous = mean;
        h /= 2.0;
    }
    previous
}

/// Independent local-maximum scan: for every index, walk outward over equal
/// values to find the neighbours of its run and test them directly.
pub fn brute_force_peaks(v: &[f64], min_height: f64) -> Vec<usize> {
    let n = v.len();
    if n == 1 {
        return if v[0] >= min_height { vec![0] } else { vec![] };
    }
    let mut out = Vec::new();
    for i in 0..n {
        if i + 1 < n && v[i + 1] == v[i] {
            continue; // not the last index of its run
        }
        let mut l = i;
        while l > 0 && v[l - 1] == v[i] {
            l -= 1;
        }
        let left = if l > 0 { Some(v[l - 1]) } else { None };
        let right = if i + 1 < n { Some(v[i + 1]) } else { None };
        if left.is_none() && right.is_none() {
            continue;
        }
        if left.is_none_or(|x| v[i] > x) && right.is_none_or(|x| v[i] > x) && v[i] >= min_height {
            out.push(i);
        }
    }
    out
}

pub fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
    BoundingBox::new(x1, y1, x2, y2).unwrap()
}

/// Clips where the measurement source is unreliable: in every frame of the
/// object's window a distractor carries the higher measurement score while
/// the object carries the higher prior. Weighting the prior (large `b / w`)
/// recovers the object; weighting the measurement seeds tracks on distractors.
pub fn planted_prior_scenario(n_clips: usize, seed: u64) -> (Vec<ClipData>, Vec<ClipAnnotation>) {
    let mut r = rng(seed);
    let frames = 12u64;
    let window = 3..=10u64;
    let mut clips = Vec::new();
    let mut anns = Vec::new();
    for c in 0..n_clips {
        let clip_id = format!("planted_{c:03}");
        let object = bb(100.0, 100.0, 180.0, 180.0);
        let mut fr = Vec::new();
        let mut gt = Vec::new();
        for f in 0..frames {
            let mut proposals = vec![Proposal {
                bbox: bb(400.0, 300.0, 440.0, 340.0),
                prior: PriorBelief::new(0.3).unwrap(),
                measurement_s: 0.3,
            }];
            if window.contains(&f) {
                proposals.push(Proposal {
                    bbox: object,
                    prior: PriorBelief::new(r.random_range(0.80..0.86)).unwrap(),
                    measurement_s: r.random_range(0.66..0.70),
                });
                let x = r.random_range(300.0..500.0);
                let y = r.random_range(250.0..400.0);
                proposals.push(Proposal {
                    bbox: bb(x, y, x + 50.0, y + 50.0),
                    prior: PriorBelief::new(r.random_range(0.74..0.80)).unwrap(),
                    measurement_s: r.random_range(0.90..1.0),
                });
                gt.push(GtEntry {
                    frame_idx: f,
                    bbox: object,
                });
            }
            fr.push(FrameProposals {
                frame_idx: f,
                proposals,
            });
        }
        clips.push(ClipData {
            clip_id: clip_id.clone(),
            query_id: "q0".into(),
            frames: fr,
        });
        anns.push(ClipAnnotation {
            clip_id,
            query_id: "q0".into(),
            gt_track: gt,
        });
    }
    (clips, anns)
}

/// The fixed scenario used for the fusion-versus-single-source comparison.
pub fn comparison_scenario(fp_correlation: f64) -> bayes_vq::ScenarioConfig {
    bayes_vq::ScenarioConfig {
        n_clips: 200,
        frames_per_clip: 60,
        proposals_per_frame: 8,
        gt_visibility: 0.9,
        fp_rate_prior: 0.3,
        fp_rate_measurement: 0.3,
        fp_correlation,
        score_noise_sd: 0.05,
        box_jitter_sd: 2.0,
        seed: 2023,
    }
}
