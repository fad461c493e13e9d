//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use paraclap::model::{forward_backward, ModelConfig, ModelParams, PairInput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small enough that every coordinate can be perturbed quickly.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        d: 4,
        text_embed_dim: 3,
        text_hidden: 5,
        audio_embed_dim: 3,
        audio_hidden: 5,
        expansion: 2,
    }
}

pub const TINY_VOCAB: usize = 9;

/// Random pairs with 1 to 4 tokens each, repeats allowed.
pub fn random_pairs(n: usize, vocab: usize, rng: &mut ChaCha8Rng) -> Vec<PairInput> {
    (0..n)
        .map(|_| {
            let mut audio = [0.0; 6];
            for a in &mut audio {
                *a = rng.random_range(-2.0..2.0);
            }
            let len = rng.random_range(1..=4);
            PairInput {
                audio,
                tokens: (0..len).map(|_| rng.random_range(0..vocab)).collect(),
            }
        })
        .collect()
}

pub struct GradCheck {
    pub max_rel_err: f64,
    pub worst: String,
    pub coordinates: usize,
}

/// Compares analytic gradients with central differences on every
/// coordinate. Relative error is |a - n| / max(|a|, |n|, floor).
pub fn finite_difference_check(pairs: &[PairInput], params: &ModelParams, step: f64, floor: f64) -> GradCheck {
    let analytic = forward_backward(pairs, params).unwrap().grads;
    let loss_at = |p: &ModelParams| forward_backward(pairs, p).unwrap().loss;
    let mut probe = params.clone();
    let mut out = GradCheck { max_rel_err: 0.0, worst: String::new(), coordinates: 0 };
    let names: Vec<(&'static str, usize)> = params.tensors().iter().map(|t| (t.name, t.data.len())).collect();
    for (ti, (name, len)) in names.into_iter().enumerate() {
        for k in 0..len {
            let original = probe.tensors()[ti].data[k];
            probe.tensors_mut()[ti].data[k] = original + step;
            let up = loss_at(&probe);
            probe.tensors_mut()[ti].data[k] = original - step;
            let down = loss_at(&probe);
            probe.tensors_mut()[ti].data[k] = original;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.tensors()[ti].data[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            out.coordinates += 1;
            if rel > out.max_rel_err {
                out.max_rel_err = rel;
                out.worst = format!("{name}[{k}]: analytic {a:e}, numeric {numeric:e}");
            }
        }
    }
    out
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Synthesizes `n` utterances per profile into `dir` and extracts features.
pub fn synthetic_items(
    dir: &std::path::Path,
    profiles: &[paraclap::corpus::ClassProfile],
    n: usize,
    seed: u64,
) -> Vec<paraclap::training::CorpusItem> {
    let out = paraclap::corpus::synthesize_corpus(profiles, n, dir, &mut seeded(seed)).unwrap();
    let features = paraclap::features::extract_records(&out.records, None);
    out.records
        .into_iter()
        .zip(features)
        .map(|(record, f)| paraclap::training::CorpusItem {
            record,
            features: f.unwrap(),
        })
        .collect()
}

pub fn two_class_profiles() -> Vec<paraclap::corpus::ClassProfile> {
    paraclap::corpus::default_profiles()
        .into_iter()
        .filter(|p| p.name == "angry" || p.name == "sad")
        .collect()
}

pub mod fixtures {
    use paraclap::corpus::{BinThresholds, UtteranceRecord};
    use paraclap::features::FeatureVector;
    use paraclap::querygen::{Attribute, Thresholds};

    /// Cut points at 0.3/0.7 for the annotations and round numbers for the
    /// acoustic attributes.
    pub fn thresholds() -> Thresholds {
        let t = |lo, hi| BinThresholds { lo, hi };
        [
            (Attribute::Arousal, t(0.3, 0.7)),
            (Attribute::Valence, t(0.3, 0.7)),
            (Attribute::Dominance, t(0.3, 0.7)),
            (Attribute::PitchMu, t(150.0, 200.0)),
            (Attribute::PitchSigma, t(10.0, 20.0)),
            (Attribute::Intensity, t(-30.0, -20.0)),
            (Attribute::Duration, t(2.0, 4.0)),
            (Attribute::Jitter, t(0.02, 0.03)),
            (Attribute::Shimmer, t(0.01, 0.02)),
        ]
        .into_iter()
        .collect()
    }

    /// High arousal, low valence, mid dominance, high pitch variation, low jitter.
    pub fn excited() -> (UtteranceRecord, FeatureVector) {
        (
            UtteranceRecord {
                id: "excited".into(),
                audio_path: "excited.wav".into(),
                emotion: Some("happiness".into()),
                gender: Some("female".into()),
                arousal: Some(0.9),
                valence: Some(0.1),
                dominance: Some(0.5),
            },
            FeatureVector {
                pitch_mu: Some(220.0),
                pitch_sigma: Some(30.0),
                intensity_db: -10.0,
                jitter: Some(0.01),
                shimmer: Some(0.05),
                duration_s: 3.0,
            },
        )
    }

    /// The mirror image: low arousal, flat pitch, high jitter.
    pub fn subdued() -> (UtteranceRecord, FeatureVector) {
        (
            UtteranceRecord {
                id: "subdued".into(),
                audio_path: "subdued.wav".into(),
                emotion: Some("sadness".into()),
                gender: Some("male".into()),
                arousal: Some(0.1),
                valence: Some(0.9),
                dominance: Some(0.9),
            },
            FeatureVector {
                pitch_mu: Some(100.0),
                pitch_sigma: Some(5.0),
                intensity_db: -40.0,
                jitter: Some(0.05),
                shimmer: Some(0.005),
                duration_s: 1.0,
            },
        )
    }
}
