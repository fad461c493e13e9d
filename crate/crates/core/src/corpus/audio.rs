use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

/// Mono audio with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Decodes a 16 kHz mono 16-bit PCM WAV file. Anything else is rejected
/// rather than converted.
pub fn decode_wav(path: &Path) -> Result<Waveform> {
    let wav_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    };
    let reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let unsupported = |property: String| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        property,
    };
    if spec.sample_rate != SAMPLE_RATE {
        return Err(unsupported(format!(
            "sample rate {} Hz (expected {SAMPLE_RATE})",
            spec.sample_rate
        )));
    }
    if spec.channels != 1 {
        return Err(unsupported(format!("{} channels (expected mono)", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(unsupported(format!(
            "{} bits per sample, {:?} (expected 16-bit PCM)",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(wav_err)?;
    if samples.is_empty() {
        return Err(Error::EmptyInput("wav file has no samples"));
    }
    Ok(Waveform::new(samples, SAMPLE_RATE))
}

/// Writes a waveform as 16-bit PCM, clamping out-of-range samples.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_err)?;
    for &s in &w.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(to_err)?;
    }
    writer.finalize().map_err(to_err)
}

/// Fits a waveform to exactly `target_seconds`: longer signals are cut to a
/// random contiguous window, shorter ones are placed at a random offset in
/// silence.
pub fn clip_or_pad<R: Rng + ?Sized>(w: &Waveform, target_seconds: f64, rng: &mut R) -> Waveform {
    let target = (target_seconds * w.sample_rate as f64).round() as usize;
    let n = w.samples.len();
    let samples = if n == target {
        w.samples.clone()
    } else if n > target {
        let start = rng.random_range(0..=n - target);
        w.samples[start..start + target].to_vec()
    } else {
        let offset = rng.random_range(0..=target - n);
        let mut out = vec![0.0; target];
        out[offset..offset + n].copy_from_slice(&w.samples);
        out
    };
    Waveform::new(samples, w.sample_rate)
}
