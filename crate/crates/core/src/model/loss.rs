//! Scaled cosine similarity and the symmetric contrastive loss.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Rows of both matrices must be unit vectors.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Audio and text embeddings for one batch; row i of each forms a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    pub audio: Array2<f64>,
    pub text: Array2<f64>,
}

/// `s[[i, j]]` compares audio i with text j.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub s: Array2<f64>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.s.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

fn check_unit_rows(m: &Array2<f64>, what: &str) -> Result<()> {
    for (i, row) in m.rows().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm.is_nan() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::Contract(format!(
                "{what} embedding {i} has norm {norm}, expected 1"
            )));
        }
    }
    Ok(())
}

pub fn similarity_matrix(batch: &EmbeddingBatch, tau: f64) -> Result<SimilarityMatrix> {
    let (a, t) = (&batch.audio, &batch.text);
    if a.dim() != t.dim() {
        return Err(Error::Shape {
            what: "embedding batch".into(),
            expected: format!("{:?}", a.dim()),
            got: format!("{:?}", t.dim()),
        });
    }
    if a.nrows() == 0 {
        return Err(Error::EmptyInput("embedding batch"));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Contract(format!("temperature must be positive, got {tau}")));
    }
    check_unit_rows(a, "audio")?;
    check_unit_rows(t, "text")?;
    Ok(SimilarityMatrix { s: a.dot(&t.t()) * tau })
}

fn log_sum_exp<'a>(xs: impl Iterator<Item = &'a f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    max + xs.map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Mean of the audio-to-text and text-to-audio cross entropies, where the
/// matching pair on the diagonal is the target.
pub fn symmetric_ce_loss(sim: &SimilarityMatrix) -> Result<f64> {
    let s = &sim.s;
    let n = s.nrows();
    if n == 0 || s.ncols() != n {
        return Err(Error::Shape {
            what: "similarity matrix".into(),
            expected: "square, non-empty".into(),
            got: format!("{:?}", s.dim()),
        });
    }
    let mut rows = 0.0;
    let mut cols = 0.0;
    for i in 0..n {
        rows += log_sum_exp(s.row(i).iter()) - s[[i, i]];
        cols += log_sum_exp(s.column(i).iter()) - s[[i, i]];
    }
    Ok(0.5 * (rows + cols) / n as f64)
}

fn softmax_along(s: &Array2<f64>, axis: Axis) -> Array2<f64> {
    let mut p = s.clone();
    for mut lane in p.lanes_mut(axis) {
        let max = lane.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        lane.mapv_inplace(|x| (x - max).exp());
        let total = lane.sum();
        lane.mapv_inplace(|x| x / total);
    }
    p
}

/// d loss / d S.
pub fn symmetric_ce_grad(sim: &SimilarityMatrix) -> Array2<f64> {
    let s = &sim.s;
    let n = s.nrows() as f64;
    // lanes along Axis(1) are rows
    let mut g = softmax_along(s, Axis(1)) + softmax_along(s, Axis(0));
    for i in 0..s.nrows() {
        g[[i, i]] -= 2.0;
    }
    g * (0.5 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_rows_give_ln_n() {
        let e = Array2::from_elem((5, 3), 1.0 / 3f64.sqrt());
        let batch = EmbeddingBatch { audio: e.clone(), text: e };
        let sim = similarity_matrix(&batch, 14.0).unwrap();
        let loss = symmetric_ce_loss(&sim).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_fixture() {
        // s = [[2, 0], [0, 2]]: each row and column CE is ln(1 + e^-2)
        let sim = SimilarityMatrix { s: array![[2.0, 0.0], [0.0, 2.0]] };
        let expected = (1.0 + (-2.0f64).exp()).ln();
        assert!((symmetric_ce_loss(&sim).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        let unit = array![[1.0, 0.0]];
        let not_unit = array![[2.0, 0.0]];
        let ok = EmbeddingBatch { audio: unit.clone(), text: unit.clone() };
        assert!(similarity_matrix(&ok, 0.0).is_err());
        assert!(similarity_matrix(&ok, -1.0).is_err());
        let bad = EmbeddingBatch { audio: not_unit, text: unit.clone() };
        assert!(matches!(similarity_matrix(&bad, 1.0), Err(Error::Contract(_))));
        let ragged = EmbeddingBatch { audio: array![[1.0, 0.0], [0.0, 1.0]], text: unit };
        assert!(matches!(similarity_matrix(&ragged, 1.0), Err(Error::Shape { .. })));
    }

    #[test]
    fn stable_for_large_logits() {
        let sim = SimilarityMatrix { s: array![[1000.0, -1000.0], [-1000.0, 1000.0]] };
        let loss = symmetric_ce_loss(&sim).unwrap();
        assert!((0.0..1e-12).contains(&loss));
    }

    #[test]
    fn grad_matches_finite_difference() {
        let s = array![[1.0, -0.5, 0.3], [0.2, 0.8, -1.1], [0.4, 0.0, 1.5]];
        let g = symmetric_ce_grad(&SimilarityMatrix { s: s.clone() });
        let h = 1e-6;
        for i in 0..3 {
            for j in 0..3 {
                let mut up = s.clone();
                up[[i, j]] += h;
                let mut down = s.clone();
                down[[i, j]] -= h;
                let fd = (symmetric_ce_loss(&SimilarityMatrix { s: up }).unwrap()
                    - symmetric_ce_loss(&SimilarityMatrix { s: down }).unwrap())
                    / (2.0 * h);
                assert!((fd - g[[i, j]]).abs() < 1e-8, "{i},{j}: {fd} vs {}", g[[i, j]]);
            }
        }
    }
}
