//! Encoders, projection heads and the batched forward/backward pass.

use ndarray::{Array1, Array2, Axis};

use super::loss::{similarity_matrix, symmetric_ce_grad, symmetric_ce_loss, EmbeddingBatch, SimilarityMatrix};
use super::ops::{
    as_row, branch_backward, branch_forward, head_forward, mlp_backward, mlp_forward, BranchCache, MlpCache,
};
use super::params::{ModelParams, ProjectionHead};
use crate::error::{Error, Result};
use crate::features::FEATURE_COUNT;

/// One training pair: standardized audio features and caption token ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PairInput {
    pub audio: [f64; FEATURE_COUNT],
    pub tokens: Vec<usize>,
}

fn check_tokens(tokens: &[usize], vocab_size: usize) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput("token list"));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab_size) {
        return Err(Error::Shape {
            what: "token id".into(),
            expected: format!("< {vocab_size}"),
            got: bad.to_string(),
        });
    }
    Ok(())
}

fn check_audio(x: &[f64; FEATURE_COUNT]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("audio encoder input"))
    }
}

fn pooled_tokens(batch: &[&[usize]], params: &ModelParams) -> Array2<f64> {
    let e = params.text_embedding.ncols();
    let mut pooled = Array2::zeros((batch.len(), e));
    for (mut row, tokens) in pooled.rows_mut().into_iter().zip(batch) {
        for &t in tokens.iter() {
            row += &params.text_embedding.row(t);
        }
        row /= tokens.len() as f64;
    }
    pooled
}

/// Mean-pooled token embeddings through the text MLP.
pub fn encode_text(tokens: &[usize], params: &ModelParams) -> Result<Array1<f64>> {
    check_tokens(tokens, params.vocab_size())?;
    let (out, _) = mlp_forward(pooled_tokens(&[tokens], params), &params.text_mlp);
    Ok(out.row(0).to_owned())
}

/// The standardized feature vector through the audio MLP.
pub fn encode_audio(x: &[f64; FEATURE_COUNT], params: &ModelParams) -> Result<Array1<f64>> {
    check_audio(x)?;
    let (out, _) = mlp_forward(as_row(x).to_owned(), &params.audio_mlp);
    Ok(out.row(0).to_owned())
}

/// Projection head without the final normalization.
pub fn project(raw: &[f64], head: &ProjectionHead) -> Result<Array1<f64>> {
    let expected = head.expand.input_dim();
    if raw.len() != expected {
        return Err(Error::Shape {
            what: "projection input".into(),
            expected: expected.to_string(),
            got: raw.len().to_string(),
        });
    }
    let (out, _) = head_forward(as_row(raw).to_owned(), head);
    Ok(out.row(0).to_owned())
}

struct TextCache {
    mlp: MlpCache,
    branch: BranchCache,
}

struct AudioCache {
    mlp: MlpCache,
    branch: BranchCache,
}

fn text_forward(batch: &[&[usize]], params: &ModelParams) -> Result<(Array2<f64>, TextCache)> {
    for tokens in batch {
        check_tokens(tokens, params.vocab_size())?;
    }
    let (raw, mlp) = mlp_forward(pooled_tokens(batch, params), &params.text_mlp);
    let (unit, branch) = branch_forward(raw, &params.proj_text)?;
    Ok((unit, TextCache { mlp, branch }))
}

fn audio_forward(batch: &[&[f64; FEATURE_COUNT]], params: &ModelParams) -> Result<(Array2<f64>, AudioCache)> {
    let mut x = Array2::zeros((batch.len(), FEATURE_COUNT));
    for (mut row, features) in x.rows_mut().into_iter().zip(batch) {
        check_audio(features)?;
        row.assign(&ndarray::ArrayView1::from(&features[..]));
    }
    let (raw, mlp) = mlp_forward(x, &params.audio_mlp);
    let (unit, branch) = branch_forward(raw, &params.proj_audio)?;
    Ok((unit, AudioCache { mlp, branch }))
}

/// Unit-norm text embeddings, one row per token list.
pub fn embed_texts(batch: &[&[usize]], params: &ModelParams) -> Result<Array2<f64>> {
    text_forward(batch, params).map(|(unit, _)| unit)
}

/// Unit-norm audio embeddings, one row per feature vector.
pub fn embed_audios(batch: &[&[f64; FEATURE_COUNT]], params: &ModelParams) -> Result<Array2<f64>> {
    audio_forward(batch, params).map(|(unit, _)| unit)
}

fn split_pairs(pairs: &[PairInput]) -> (Vec<&[f64; FEATURE_COUNT]>, Vec<&[usize]>) {
    pairs.iter().map(|p| (&p.audio, p.tokens.as_slice())).unzip()
}

pub fn embed_batch(pairs: &[PairInput], params: &ModelParams) -> Result<EmbeddingBatch> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("pair batch"));
    }
    let (audio_in, text_in) = split_pairs(pairs);
    Ok(EmbeddingBatch {
        audio: embed_audios(&audio_in, params)?,
        text: embed_texts(&text_in, params)?,
    })
}

/// Loss and the gradient of the loss with respect to every parameter.
#[derive(Debug, Clone)]
pub struct ForwardBackward {
    pub loss: f64,
    pub grads: ModelParams,
    pub similarity: SimilarityMatrix,
}

pub fn forward_backward(pairs: &[PairInput], params: &ModelParams) -> Result<ForwardBackward> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("pair batch"));
    }
    let (audio_in, text_in) = split_pairs(pairs);
    let (audio, audio_cache) = audio_forward(&audio_in, params)?;
    let (text, text_cache) = text_forward(&text_in, params)?;
    let tau = params.tau();
    let batch = EmbeddingBatch { audio, text };
    let similarity = similarity_matrix(&batch, tau)?;
    let loss = symmetric_ce_loss(&similarity)?;

    let mut grads = params.zeros_like();
    let ds = symmetric_ce_grad(&similarity);
    // S = tau * A T^T and tau = exp(log_tau)
    grads.log_tau = (&ds * &similarity.s).sum();
    let dcos = ds * tau;
    let daudio = dcos.dot(&batch.text);
    let dtext = dcos.t().dot(&batch.audio);

    let draw_audio = branch_backward(&audio_cache.branch, &params.proj_audio, &daudio, &mut grads.proj_audio);
    mlp_backward(&audio_cache.mlp, &params.audio_mlp, &draw_audio, &mut grads.audio_mlp);

    let draw_text = branch_backward(&text_cache.branch, &params.proj_text, &dtext, &mut grads.proj_text);
    let dpooled = mlp_backward(&text_cache.mlp, &params.text_mlp, &draw_text, &mut grads.text_mlp);
    for (dp, tokens) in dpooled.axis_iter(Axis(0)).zip(&text_in) {
        let share = 1.0 / tokens.len() as f64;
        for &t in tokens.iter() {
            grads.text_embedding.row_mut(t).scaled_add(share, &dp);
        }
    }
    Ok(ForwardBackward { loss, grads, similarity })
}
