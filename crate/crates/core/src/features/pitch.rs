//! Frame-wise F0 tracking by normalized autocorrelation.

use crate::corpus::Waveform;
use crate::error::{Error, Result};

pub const FRAME_LEN: usize = 640;
pub const HOP: usize = 160;
pub const F0_MIN_HZ: f64 = 60.0;
pub const F0_MAX_HZ: f64 = 500.0;
/// Minimum normalized autocorrelation peak for a voiced frame.
pub const VOICING_THRESHOLD: f64 = 0.5;
/// Minimum frame RMS (-40 dBFS) for a voiced frame.
pub const RMS_GATE: f64 = 0.01;
/// A shorter-lag peak within this fraction of the best one wins, which keeps
/// the tracker off period multiples.
const OCTAVE_PREFERENCE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    pub frame_hz: Vec<Option<f64>>,
    pub frame_len: usize,
    pub hop: usize,
}

impl F0Track {
    pub fn voiced(&self) -> impl Iterator<Item = f64> + '_ {
        self.frame_hz.iter().flatten().copied()
    }
}

/// Splits `samples` into windows starting at 0, hop, 2*hop, ...; a trailing
/// partial window is dropped.
pub fn frame_signal(samples: &[f64], frame_len: usize, hop: usize) -> Result<Vec<&[f64]>> {
    if hop == 0 || frame_len == 0 {
        return Err(Error::Config("frame length and hop must be positive".into()));
    }
    if frame_len > samples.len() {
        return Err(Error::FrameTooLong {
            frame_len,
            len: samples.len(),
        });
    }
    let count = (samples.len() - frame_len) / hop + 1;
    Ok((0..count).map(|i| &samples[i * hop..i * hop + frame_len]).collect())
}

pub(crate) fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// r(lag) = sum x[i] x[i+lag] / sqrt(sum x[i]^2 * sum x[i+lag]^2) over the overlap.
fn normalized_autocorrelation(frame: &[f64], max_lag: usize) -> Vec<f64> {
    let n = frame.len();
    let mut energy = Vec::with_capacity(n + 1);
    energy.push(0.0);
    for &v in frame {
        energy.push(energy.last().unwrap() + v * v);
    }
    (0..=max_lag)
        .map(|lag| {
            let m = n - lag;
            let dot: f64 = frame[..m].iter().zip(&frame[lag..]).map(|(a, b)| a * b).sum();
            let e0 = energy[m];
            let e1 = energy[n] - energy[lag];
            let denom = (e0 * e1).sqrt();
            if denom > 0.0 {
                dot / denom
            } else {
                0.0
            }
        })
        .collect()
}

fn frame_f0(frame: &[f64], sample_rate: f64) -> Option<f64> {
    if rms(frame) < RMS_GATE {
        return None;
    }
    let min_lag = (sample_rate / F0_MAX_HZ).floor() as usize;
    let max_lag = (sample_rate / F0_MIN_HZ).ceil() as usize;
    if max_lag + 1 >= frame.len() || min_lag < 2 {
        return None;
    }
    let r = normalized_autocorrelation(frame, max_lag + 1);

    let peaks: Vec<usize> = (min_lag..=max_lag)
        .filter(|&l| r[l] >= r[l - 1] && r[l] > r[l + 1])
        .collect();
    let best = peaks.iter().map(|&l| r[l]).fold(f64::NEG_INFINITY, f64::max);
    if best < VOICING_THRESHOLD {
        return None;
    }
    let lag = *peaks.iter().find(|&&l| r[l] >= OCTAVE_PREFERENCE * best)?;

    let (left, mid, right) = (r[lag - 1], r[lag], r[lag + 1]);
    let curvature = left - 2.0 * mid + right;
    let shift = if curvature < 0.0 {
        (0.5 * (left - right) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let f0 = sample_rate / (lag as f64 + shift);
    (F0_MIN_HZ..=F0_MAX_HZ).contains(&f0).then_some(f0)
}

/// 40 ms / 10 ms frames searched over 60-500 Hz. A signal shorter than one
/// frame yields an empty track.
pub fn estimate_f0(w: &Waveform) -> F0Track {
    let sr = w.sample_rate as f64;
    let frame_hz = match frame_signal(&w.samples, FRAME_LEN, HOP) {
        Ok(frames) => frames.into_iter().map(|f| frame_f0(f, sr)).collect(),
        Err(_) => Vec::new(),
    };
    F0Track {
        frame_hz,
        frame_len: FRAME_LEN,
        hop: HOP,
    }
}

/// Mean and population standard deviation over voiced frames.
pub fn pitch_stats(track: &F0Track) -> Result<(f64, f64)> {
    let voiced: Vec<f64> = track.voiced().collect();
    if voiced.is_empty() {
        return Err(Error::NoVoicing);
    }
    let n = voiced.len() as f64;
    let mean = voiced.iter().sum::<f64>() / n;
    let var = voiced.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}
