use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::audio::{write_wav, Waveform, SAMPLE_RATE};
use super::manifest::{write_manifest, UtteranceRecord};
use crate::error::{Error, Result};

const HARMONIC_WEIGHTS: [f64; 3] = [1.0, 0.5, 0.25];
const VIBRATO_DEPTH: f64 = 0.01;
const VIBRATO_HZ: f64 = 5.0;
const NOISE_AMPLITUDE: f64 = 0.003;

/// Acoustic profile of one synthetic class. Each generated file draws its
/// fundamental, peak amplitude and duration uniformly from these ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub name: String,
    pub f0_hz: (f64, f64),
    pub amplitude: (f64, f64),
    pub duration_s: (f64, f64),
}

impl ClassProfile {
    fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi;
        if self.name.is_empty()
            || !ok(self.f0_hz)
            || !ok(self.amplitude)
            || !ok(self.duration_s)
            || self.amplitude.1 > 1.0
        {
            return Err(Error::Config(format!("invalid class profile {self:?}")));
        }
        Ok(())
    }
}

/// Four classes separable only by combining pitch and loudness.
pub fn default_profiles() -> Vec<ClassProfile> {
    let p = |name: &str, f0: (f64, f64), amp: (f64, f64)| ClassProfile {
        name: name.to_string(),
        f0_hz: f0,
        amplitude: amp,
        duration_s: (0.8, 1.6),
    };
    vec![
        p("angry", (260.0, 320.0), (0.6, 0.8)),
        p("happy", (260.0, 320.0), (0.08, 0.15)),
        p("neutral", (110.0, 150.0), (0.6, 0.8)),
        p("sad", (110.0, 150.0), (0.08, 0.15)),
    ]
}

/// Parses `name:f0lo-f0hi:amplo-amphi:durlo-durhi` entries separated by commas.
pub fn parse_profiles(spec: &str) -> Result<Vec<ClassProfile>> {
    let range = |s: &str| -> Result<(f64, f64)> {
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("expected lo-hi range, got `{s}`")))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number `{x}`")))
        };
        Ok((parse(a)?, parse(b)?))
    };
    let mut out = Vec::new();
    for entry in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let fields: Vec<&str> = entry.split(':').collect();
        if fields.len() != 4 {
            return Err(Error::Config(format!(
                "class spec `{entry}` must be name:f0:amplitude:duration"
            )));
        }
        let profile = ClassProfile {
            name: fields[0].trim().to_string(),
            f0_hz: range(fields[1])?,
            amplitude: range(fields[2])?,
            duration_s: range(fields[3])?,
        };
        profile.validate()?;
        out.push(profile);
    }
    if out.is_empty() {
        return Err(Error::Config("no class profiles given".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub records: Vec<UtteranceRecord>,
    pub manifest_path: PathBuf,
}

fn draw<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Harmonic tone with slight vibrato and a little uniform noise.
fn render<R: Rng + ?Sized>(rng: &mut R, f0: f64, amplitude: f64, duration_s: f64) -> Waveform {
    let n = (duration_s * SAMPLE_RATE as f64).round().max(1.0) as usize;
    let sr = SAMPLE_RATE as f64;
    let vib_phase = rng.random_range(0.0..2.0 * PI);
    let harmonic_phase: Vec<f64> = HARMONIC_WEIGHTS
        .iter()
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect();
    let norm: f64 = HARMONIC_WEIGHTS.iter().sum();
    let mut phase = 0.0;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / sr;
        let inst = f0 * (1.0 + VIBRATO_DEPTH * (2.0 * PI * VIBRATO_HZ * t + vib_phase).sin());
        phase += 2.0 * PI * inst / sr;
        let tone: f64 = HARMONIC_WEIGHTS
            .iter()
            .zip(&harmonic_phase)
            .enumerate()
            .map(|(k, (w, ph))| w * ((k + 1) as f64 * phase + ph).sin())
            .sum();
        let noise = rng.random_range(-NOISE_AMPLITUDE..NOISE_AMPLITUDE);
        samples.push((amplitude * tone / norm + noise).clamp(-1.0, 1.0));
    }
    Waveform::new(samples, SAMPLE_RATE)
}

/// Writes `n_per_class` WAV files per profile under `out_dir/audio` and a
/// `manifest.jsonl` labelling each file with its class name.
pub fn synthesize_corpus<R: Rng + ?Sized>(
    profiles: &[ClassProfile],
    n_per_class: usize,
    out_dir: &Path,
    rng: &mut R,
) -> Result<SynthOutput> {
    for p in profiles {
        p.validate()?;
    }
    let audio_dir = out_dir.join("audio");
    fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;

    let mut records = Vec::with_capacity(profiles.len() * n_per_class);
    for profile in profiles {
        for idx in 0..n_per_class {
            let id = format!("{}_{idx:04}", profile.name);
            let f0 = draw(rng, profile.f0_hz);
            let amp = draw(rng, profile.amplitude);
            let dur = draw(rng, profile.duration_s);
            let wave = render(rng, f0, amp, dur);
            let path = audio_dir.join(format!("{id}.wav"));
            write_wav(&path, &wave)?;
            records.push(UtteranceRecord {
                id,
                audio_path: path,
                emotion: Some(profile.name.clone()),
                gender: None,
                arousal: None,
                valence: None,
                dominance: None,
            });
        }
    }
    let manifest_path = out_dir.join("manifest.jsonl");
    write_manifest(&manifest_path, &records, out_dir)?;
    Ok(SynthOutput {
        records,
        manifest_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{decode_wav, load_manifest};
    use crate::features::extract_features;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_classes() -> Vec<ClassProfile> {
        parse_profiles("low:120-140:0.5-0.6:0.5-0.7, high:400-450:0.5-0.6:0.5-0.7").unwrap()
    }

    #[test]
    fn counts() {
        let dir = tempfile::tempdir().unwrap();
        let out =
            synthesize_corpus(&two_classes(), 10, dir.path(), &mut ChaCha8Rng::seed_from_u64(1))
                .unwrap();
        assert_eq!(out.records.len(), 20);
        assert_eq!(fs::read_dir(dir.path().join("audio")).unwrap().count(), 20);
        assert_eq!(load_manifest(&out.manifest_path).unwrap().len(), 20);
    }

    #[test]
    fn pitch_of_generated_files_tracks_profile() {
        let dir = tempfile::tempdir().unwrap();
        let out =
            synthesize_corpus(&two_classes(), 6, dir.path(), &mut ChaCha8Rng::seed_from_u64(2))
                .unwrap();
        let high: Vec<f64> = out
            .records
            .iter()
            .filter(|r| r.emotion.as_deref() == Some("high"))
            .map(|r| extract_features(&decode_wav(&r.audio_path).unwrap()).pitch_mu.unwrap())
            .collect();
        assert_eq!(high.len(), 6);
        for mu in high {
            assert!((392.0..=459.0).contains(&mu), "pitch mean {mu}");
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for d in [&a, &b] {
            synthesize_corpus(&two_classes(), 3, d.path(), &mut ChaCha8Rng::seed_from_u64(7))
                .unwrap();
        }
        let read = |d: &tempfile::TempDir, f: &str| fs::read(d.path().join(f)).unwrap();
        assert_eq!(read(&a, "manifest.jsonl"), read(&b, "manifest.jsonl"));
        assert_eq!(read(&a, "audio/high_0002.wav"), read(&b, "audio/high_0002.wav"));
    }

    #[test]
    fn unwritable_dir_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let err = synthesize_corpus(&two_classes(), 1, &blocker, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn bad_profile_strings() {
        assert!(parse_profiles("").is_err());
        assert!(parse_profiles("a:1-2:0.1-0.2").is_err());
        assert!(parse_profiles("a:300-200:0.1-0.2:1-2").is_err());
        assert!(parse_profiles("a:100-200:0.1-1.5:1-2").is_err());
    }
}
