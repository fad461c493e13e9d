//! Dual encoder: text and audio encoders, projection heads into a shared
//! space, the contrastive loss, and exact gradients.

mod checkpoint;
mod loss;
mod network;
pub(crate) mod ops;
mod params;
mod vocab;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, TensorRecord, FORMAT_VERSION};
pub use loss::{
    similarity_matrix, symmetric_ce_grad, symmetric_ce_loss, EmbeddingBatch, SimilarityMatrix,
    UNIT_NORM_TOLERANCE,
};
pub use network::{
    embed_audios, embed_batch, embed_texts, encode_audio, encode_text, forward_backward, project,
    ForwardBackward, PairInput,
};
pub use ops::{gelu, gelu_derivative, layer_norm, normalize, LAYER_NORM_EPS, MIN_NORM};
pub use params::{
    Linear, Mlp, ModelConfig, ModelParams, ParamGroup, ProjectionHead, TensorMut, TensorRef,
    INITIAL_LOG_TAU, MAX_LOG_TAU, SHRINK_INIT_SCALE,
};
pub use vocab::{split_words, Vocab, UNKNOWN_ID, UNKNOWN_TOKEN};

use crate::error::Result;
use crate::features::{FeatureVector, FEATURE_COUNT};

/// Per-feature standardization fitted on the training corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; FEATURE_COUNT],
    pub std: [f64; FEATURE_COUNT],
}

impl Default for Standardizer {
    fn default() -> Self {
        Self {
            mean: [0.0; FEATURE_COUNT],
            std: [1.0; FEATURE_COUNT],
        }
    }
}

impl Standardizer {
    /// Mean and population std over present values. Features that are never
    /// present, or constant, get mean 0 / std 1 and mean / std 1 respectively.
    pub fn fit<'a>(features: impl IntoIterator<Item = &'a FeatureVector>) -> Self {
        let mut sums = [0.0; FEATURE_COUNT];
        let mut counts = [0usize; FEATURE_COUNT];
        let all: Vec<[Option<f64>; FEATURE_COUNT]> = features.into_iter().map(|f| f.values()).collect();
        for values in &all {
            for (k, v) in values.iter().enumerate() {
                if let Some(v) = v {
                    sums[k] += v;
                    counts[k] += 1;
                }
            }
        }
        let mut out = Self::default();
        for k in 0..FEATURE_COUNT {
            if counts[k] == 0 {
                continue;
            }
            let mean = sums[k] / counts[k] as f64;
            let var = all
                .iter()
                .filter_map(|v| v[k])
                .map(|v| (v - mean).powi(2))
                .sum::<f64>()
                / counts[k] as f64;
            out.mean[k] = mean;
            out.std[k] = if var.sqrt() < 1e-12 { 1.0 } else { var.sqrt() };
        }
        out
    }

    /// Standardized features; absent values become 0.
    pub fn transform(&self, fv: &FeatureVector) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        for (k, v) in fv.values().iter().enumerate() {
            if let Some(v) = v {
                out[k] = (v - self.mean[k]) / self.std[k];
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.mean.iter().all(|m| m.is_finite()) && self.std.iter().all(|s| s.is_finite() && *s > 0.0)
    }
}

/// Everything needed to embed text and audio: parameters plus the
/// vocabulary and feature standardization they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub standardizer: Standardizer,
    pub params: ModelParams,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, vocab: Vocab, standardizer: Standardizer, rng: &mut R) -> Self {
        let params = ModelParams::init(&config, vocab.len(), rng);
        Self {
            config,
            vocab,
            standardizer,
            params,
        }
    }

    pub fn pair_input(&self, fv: &FeatureVector, text: &str) -> PairInput {
        PairInput {
            audio: self.standardizer.transform(fv),
            tokens: self.vocab.tokenize(text),
        }
    }

    /// Unit-norm text embeddings, one row per text.
    pub fn embed_texts(&self, texts: &[&str]) -> Result<Array2<f64>> {
        let tokens: Vec<Vec<usize>> = texts.iter().map(|t| self.vocab.tokenize(t)).collect();
        let refs: Vec<&[usize]> = tokens.iter().map(Vec::as_slice).collect();
        embed_texts(&refs, &self.params)
    }

    /// Unit-norm audio embeddings, one row per feature vector.
    pub fn embed_audios(&self, features: &[&FeatureVector]) -> Result<Array2<f64>> {
        let xs: Vec<[f64; FEATURE_COUNT]> = features.iter().map(|f| self.standardizer.transform(f)).collect();
        let refs: Vec<&[f64; FEATURE_COUNT]> = xs.iter().collect();
        embed_audios(&refs, &self.params)
    }

    pub fn embed_text(&self, text: &str) -> Result<Array1<f64>> {
        Ok(self.embed_texts(&[text])?.row(0).to_owned())
    }

    pub fn embed_audio(&self, fv: &FeatureVector) -> Result<Array1<f64>> {
        Ok(self.embed_audios(&[fv])?.row(0).to_owned())
    }
}
