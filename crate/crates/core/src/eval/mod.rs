//! Zero-shot classification against label queries, and the metrics and
//! report built from it.

mod metrics;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

pub use metrics::{confusion_matrix, per_class_recall, uar, Confusion};

use crate::corpus::Waveform;
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureVector};
use crate::model::{Model, UNKNOWN_ID};
use crate::querygen::emotion_adjective;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    /// The bare label string.
    #[default]
    Raw,
    /// "speaker is {adjective}".
    Templated,
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryMode::Raw => "raw",
            QueryMode::Templated => "templated",
        })
    }
}

impl FromStr for QueryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "raw" => Ok(QueryMode::Raw),
            "templated" => Ok(QueryMode::Templated),
            other => Err(Error::Config(format!(
                "invalid query mode `{other}` (expected raw or templated)"
            ))),
        }
    }
}

/// One embedded query per class, in class order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelQuerySet {
    pub labels: Vec<String>,
    pub query_texts: Vec<String>,
    /// K x d, unit-norm rows.
    pub embeddings: Array2<f64>,
    pub mode: QueryMode,
    pub warnings: Vec<String>,
}

impl LabelQuerySet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

pub fn label_query_text(label: &str, mode: QueryMode) -> Option<String> {
    match mode {
        QueryMode::Raw => Some(label.to_string()),
        QueryMode::Templated => emotion_adjective(label).ok().map(|adj| format!("speaker is {adj}")),
    }
}

pub fn build_label_queries(labels: &[String], model: &Model, mode: QueryMode) -> Result<LabelQuerySet> {
    if labels.len() < 2 {
        return Err(Error::InsufficientData {
            what: "label query set",
            needed: 2,
            got: labels.len(),
        });
    }
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(Error::Config(format!("duplicate label `{l}`")));
        }
    }
    let mut warnings = Vec::new();
    let mut texts = Vec::with_capacity(labels.len());
    for label in labels {
        let text = label_query_text(label, mode).unwrap_or_else(|| {
            warnings.push(format!("label `{label}` has no adjective mapping; using the raw label"));
            label.clone()
        });
        let tokens = model.vocab.tokenize(&text);
        if tokens.is_empty() {
            return Err(Error::Config(format!("label `{label}` yields an empty query")));
        }
        if tokens.iter().all(|&t| t == UNKNOWN_ID) {
            warnings.push(format!("query `{text}` for label `{label}` has only unknown tokens"));
        }
        texts.push(text);
    }
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let embeddings = model.embed_texts(&refs)?;
    Ok(LabelQuerySet {
        labels: labels.to_vec(),
        query_texts: texts,
        embeddings,
        mode,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub index: usize,
    /// Another class had exactly the same similarity as the winner.
    pub tie: bool,
}

/// Argmax of cosine similarity; ties go to the lowest index.
pub fn classify_embedding(audio: ArrayView1<'_, f64>, queries: &LabelQuerySet) -> Prediction {
    let scores = queries.embeddings.dot(&audio);
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    let tie = scores
        .iter()
        .enumerate()
        .any(|(i, &s)| i != best && s == scores[best]);
    Prediction { index: best, tie }
}

pub fn classify_features(fv: &FeatureVector, queries: &LabelQuerySet, model: &Model) -> Result<Prediction> {
    let a = model.embed_audio(fv)?;
    Ok(classify_embedding(a.view(), queries))
}

pub fn classify(w: &Waveform, queries: &LabelQuerySet, model: &Model) -> Result<Prediction> {
    classify_features(&extract_features(w), queries, model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub id: String,
    pub label: String,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub uar: f64,
    /// Items in the confusion matrix.
    pub n: usize,
    pub labels: Vec<String>,
    pub query_mode: QueryMode,
    pub query_texts: Vec<String>,
    pub confusion: Confusion,
    pub per_class_recall: Vec<Option<f64>>,
    pub ties: usize,
    pub failures: Vec<ItemFailure>,
    pub warnings: Vec<String>,
    pub checkpoint_id: Option<String>,
    pub dataset_id: Option<String>,
}

pub fn evaluate(items: &[EvalItem], queries: &LabelQuerySet, model: &Model) -> Result<EvalReport> {
    let golds: Vec<usize> = items
        .iter()
        .map(|it| {
            queries
                .index_of(&it.label)
                .ok_or_else(|| Error::LabelNotInQuerySet(it.label.clone()))
        })
        .collect::<Result<_>>()?;
    let mut kept_golds = Vec::with_capacity(items.len());
    let mut preds = Vec::with_capacity(items.len());
    let mut failures = Vec::new();
    let mut ties = 0;
    for (item, gold) in items.iter().zip(golds) {
        match classify_features(&item.features, queries, model) {
            Ok(p) => {
                ties += usize::from(p.tie);
                kept_golds.push(gold);
                preds.push(p.index);
            }
            Err(e) => failures.push(ItemFailure {
                id: item.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    let confusion = confusion_matrix(&kept_golds, &preds, queries.len())?;
    Ok(EvalReport {
        uar: uar(&confusion)?,
        n: preds.len(),
        labels: queries.labels.clone(),
        query_mode: queries.mode,
        query_texts: queries.query_texts.clone(),
        per_class_recall: per_class_recall(&confusion),
        confusion,
        ties,
        failures,
        warnings: queries.warnings.clone(),
        checkpoint_id: None,
        dataset_id: None,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Header row and first column hold class names.
    pub fn confusion_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["gold\\predicted".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(&self.confusion) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn write(&self, report_path: &Path, confusion_path: &Path) -> Result<()> {
        std::fs::write(report_path, self.to_json()? + "\n").map_err(|e| Error::io(report_path, e))?;
        std::fs::write(confusion_path, self.confusion_csv()?).map_err(|e| Error::io(confusion_path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Standardizer, Vocab};
    use crate::querygen::build_template_bank;
    use ndarray::array;
    use rand::SeedableRng;

    fn model() -> Model {
        Model::new(
            ModelConfig::default(),
            Vocab::build(&build_template_bank(), []),
            Standardizer::default(),
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(3),
        )
    }

    fn fixed_queries(embeddings: Array2<f64>) -> LabelQuerySet {
        let k = embeddings.nrows();
        LabelQuerySet {
            labels: (0..k).map(|i| format!("c{i}")).collect(),
            query_texts: (0..k).map(|i| format!("c{i}")).collect(),
            embeddings,
            mode: QueryMode::Raw,
            warnings: vec![],
        }
    }

    #[test]
    fn argmax_and_ties() {
        let q = fixed_queries(Array2::eye(4));
        let p = classify_embedding(array![0.0, 0.0, 1.0, 0.0].view(), &q);
        assert_eq!(p, Prediction { index: 2, tie: false });
        let flat = fixed_queries(array![[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]]);
        let p = classify_embedding(array![1.0, 0.0].view(), &flat);
        assert_eq!(p, Prediction { index: 0, tie: true });
        let scaled = fixed_queries(Array2::eye(4) * 7.5);
        let p = classify_embedding(array![0.1, 0.0, 0.9, 0.2].view(), &scaled);
        assert_eq!(p.index, 2);
    }

    #[test]
    fn label_queries() {
        let m = model();
        let labels: Vec<String> = ["angry", "happy", "neutral", "sad"].map(String::from).to_vec();
        let q = build_label_queries(&labels, &m, QueryMode::Raw).unwrap();
        assert_eq!(q.labels, labels);
        assert_eq!(q.embeddings.nrows(), 4);
        assert!(q.warnings.is_empty());
        for row in q.embeddings.rows() {
            assert!((row.dot(&row) - 1.0).abs() < 1e-9);
        }
        let t = build_label_queries(&["anger".into(), "bliss".into()], &m, QueryMode::Templated).unwrap();
        assert_eq!(t.query_texts, vec!["speaker is angry", "bliss"]);
        assert_eq!(t.warnings.len(), 2);
        assert!(build_label_queries(&["angry".into()], &m, QueryMode::Raw).is_err());
        assert!(build_label_queries(&["sad".into(), "sad".into()], &m, QueryMode::Raw).is_err());
    }

    #[test]
    fn evaluate_single_item_and_unknown_label() {
        let m = model();
        let q = build_label_queries(&["angry".into(), "sad".into()], &m, QueryMode::Raw).unwrap();
        let fv = FeatureVector {
            pitch_mu: Some(150.0),
            pitch_sigma: Some(3.0),
            intensity_db: -20.0,
            jitter: Some(0.01),
            shimmer: Some(0.05),
            duration_s: 1.0,
        };
        let item = EvalItem { id: "a".into(), label: "sad".into(), features: fv };
        let r = evaluate(std::slice::from_ref(&item), &q, &m).unwrap();
        assert_eq!(r.n, 1);
        assert_eq!(r.confusion.iter().flatten().sum::<u64>(), 1);
        assert_eq!(r.confusion[1].iter().sum::<u64>(), 1);
        assert_eq!(r.per_class_recall[0], None);
        assert_eq!(EvalReport::from_json(&r.to_json().unwrap()).unwrap(), r);

        let bad = EvalItem { label: "happy".into(), ..item };
        match evaluate(&[bad], &q, &m) {
            Err(Error::LabelNotInQuerySet(l)) => assert_eq!(l, "happy"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn confusion_csv_layout() {
        let mut r = EvalReport {
            uar: 0.75,
            n: 200,
            labels: vec!["a".into(), "b,c".into()],
            query_mode: QueryMode::Raw,
            query_texts: vec!["a".into(), "b,c".into()],
            confusion: vec![vec![50, 50], vec![0, 100]],
            per_class_recall: vec![Some(0.5), Some(1.0)],
            ties: 0,
            failures: vec![],
            warnings: vec![],
            checkpoint_id: Some("x".into()),
            dataset_id: None,
        };
        assert_eq!(r.confusion_csv().unwrap(), "gold\\predicted,a,\"b,c\"\na,50,50\n\"b,c\",0,100\n");
        r.uar = 0.1 + 0.2;
        assert_eq!(EvalReport::from_json(&r.to_json().unwrap()).unwrap(), r);
    }
}
