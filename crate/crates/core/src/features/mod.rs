//! Interpretable acoustic parameters: pitch mean/deviation, intensity,
//! jitter, shimmer and duration.

mod cache;
mod pitch;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cache::{read_feature_cache, write_feature_cache, FeatureRow};
pub use pitch::{estimate_f0, frame_signal, pitch_stats, F0Track, FRAME_LEN, HOP};

use crate::corpus::{clip_or_pad, decode_wav, UtteranceRecord, Waveform};
use crate::error::{Error, Result};

/// Floor for the intensity of an all-zero signal.
pub const SILENCE_DB: f64 = -120.0;

pub const FEATURE_COUNT: usize = 6;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "pitch_mu",
    "pitch_sigma",
    "intensity_db",
    "jitter",
    "shimmer",
    "duration_s",
];

/// Per-utterance features. Pitch-derived fields are `None` when the
/// utterance has no voiced frames (or too few for jitter/shimmer).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub pitch_mu: Option<f64>,
    pub pitch_sigma: Option<f64>,
    pub intensity_db: f64,
    pub jitter: Option<f64>,
    pub shimmer: Option<f64>,
    pub duration_s: f64,
}

impl FeatureVector {
    /// Values in `FEATURE_NAMES` order.
    pub fn values(&self) -> [Option<f64>; FEATURE_COUNT] {
        [
            self.pitch_mu,
            self.pitch_sigma,
            Some(self.intensity_db),
            self.jitter,
            self.shimmer,
            Some(self.duration_s),
        ]
    }
}

/// 20 log10 RMS over the whole signal, floored at -120 dBFS.
pub fn intensity(w: &Waveform) -> f64 {
    if w.is_empty() {
        return SILENCE_DB;
    }
    let r = pitch::rms(&w.samples);
    if r > 0.0 {
        (20.0 * r.log10()).max(SILENCE_DB)
    } else {
        SILENCE_DB
    }
}

/// mean |x[k+1] - x[k]| / mean x[k]
fn relative_perturbation(xs: &[f64], what: &'static str) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::InsufficientData {
            what,
            needed: 2,
            got: xs.len(),
        });
    }
    if xs.iter().any(|&x| !x.is_finite() || x <= 0.0) {
        return Err(Error::Contract(format!("{what} inputs must be positive and finite")));
    }
    let diffs = xs.windows(2).map(|p| (p[1] - p[0]).abs()).sum::<f64>() / (xs.len() - 1) as f64;
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    Ok(diffs / mean)
}

/// Relative local jitter over a sequence of periods (seconds).
pub fn jitter(periods: &[f64]) -> Result<f64> {
    relative_perturbation(periods, "jitter")
}

/// Relative local shimmer over per-frame peak amplitudes.
pub fn shimmer(peak_amps: &[f64]) -> Result<f64> {
    relative_perturbation(peak_amps, "shimmer")
}

pub fn extract_features(w: &Waveform) -> FeatureVector {
    let track = estimate_f0(w);
    let (pitch_mu, pitch_sigma) = match pitch_stats(&track) {
        Ok((mu, sigma)) => (Some(mu), Some(sigma)),
        Err(_) => (None, None),
    };

    let periods: Vec<f64> = track.voiced().map(|f| 1.0 / f).collect();
    let peak_amps: Vec<f64> = match frame_signal(&w.samples, track.frame_len, track.hop) {
        Ok(frames) => frames
            .iter()
            .zip(&track.frame_hz)
            .filter(|(_, f0)| f0.is_some())
            .map(|(frame, _)| frame.iter().fold(0.0f64, |m, x| m.max(x.abs())))
            .collect(),
        Err(_) => Vec::new(),
    };

    FeatureVector {
        pitch_mu,
        pitch_sigma,
        intensity_db: intensity(w),
        jitter: jitter(&periods).ok(),
        shimmer: shimmer(&peak_amps).ok(),
        duration_s: w.duration_s(),
    }
}

/// Optional fixed-length windowing before extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipSpec {
    pub seconds: f64,
    pub seed: u64,
}

/// Decodes and analyses every record's audio in parallel. Results are in
/// manifest order; with clipping, item `i` draws its window from stream `i`
/// of the seeded generator, so output does not depend on scheduling.
pub fn extract_records(records: &[UtteranceRecord], clip: Option<ClipSpec>) -> Vec<Result<FeatureVector>> {
    records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let w = decode_wav(&r.audio_path)?;
            let w = match clip {
                Some(c) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
                    rng.set_stream(i as u64);
                    clip_or_pad(&w, c.seconds, &mut rng)
                }
                None => w,
            };
            Ok(extract_features(&w))
        })
        .collect()
}
