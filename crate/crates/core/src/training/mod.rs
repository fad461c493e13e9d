//! Mini-batch contrastive training with per-group Adam, per-epoch caption
//! resampling and best-epoch selection on held-out zero-shot UAR.

mod adam;
mod batches;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamConfig, AdamState, GroupRates};
pub use batches::{make_batches, MIN_BATCH};

use crate::corpus::UtteranceRecord;
use crate::error::{Error, Result};
use crate::eval::{build_label_queries, evaluate, EvalItem, EvalReport, QueryMode};
use crate::features::FeatureVector;
use crate::model::{forward_backward, Model, ModelConfig, PairInput, Standardizer, Vocab};
use crate::querygen::{
    caption_pool, effective_pool, emotion_queries, fit_thresholds, sample_caption, CaptionPolicy, TemplateBank,
    Thresholds,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_encoders: f64,
    pub lr_heads: f64,
    pub policy: CaptionPolicy,
    pub seed: u64,
    pub adam: AdamConfig,
    pub model: ModelConfig,
    /// How held-out label queries are phrased for model selection.
    pub query_mode: QueryMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 50,
            lr_encoders: 1e-5,
            lr_heads: 1e-3,
            policy: CaptionPolicy::only_emo(),
            seed: 0,
            adam: AdamConfig::default(),
            model: ModelConfig::default(),
            query_mode: QueryMode::Raw,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size < MIN_BATCH {
            return bad(format!("batch_size must be at least {MIN_BATCH}"));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        for (name, lr) in [("lr_encoders", self.lr_encoders), ("lr_heads", self.lr_heads)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps must be positive".into());
        }
        let m = &self.model;
        if [m.d, m.text_embed_dim, m.text_hidden, m.audio_embed_dim, m.audio_hidden, m.expansion].contains(&0)
            || m.d < 2
        {
            return bad("model dimensions must be positive and d at least 2".into());
        }
        Ok(())
    }

    pub fn rates(&self) -> GroupRates {
        GroupRates {
            encoder: self.lr_encoders,
            head: self.lr_heads,
        }
    }
}

/// A manifest record with its extracted features.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub record: UtteranceRecord,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean over the epoch's batches.
    pub loss: f64,
    pub uar: f64,
    pub batches: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Model,
    pub best_epoch: usize,
    pub final_model: Model,
    pub log: Vec<EpochLog>,
    pub thresholds: Thresholds,
    /// Training items whose policy-specific query pool is empty.
    pub dropped: Vec<String>,
    pub heldout_labels: Vec<String>,
    /// Held-out report of the selected model.
    pub best_report: EvalReport,
}

impl TrainOutcome {
    pub fn best_uar(&self) -> f64 {
        self.log[self.best_epoch].uar
    }
}

struct PreparedItem {
    audio: [f64; crate::features::FEATURE_COUNT],
    pool: Vec<String>,
    emotion: Vec<String>,
}

/// Held-out items that carry an emotion label, and their sorted label set.
pub fn heldout_eval_items(heldout: &[CorpusItem]) -> (Vec<EvalItem>, Vec<String>) {
    let items: Vec<EvalItem> = heldout
        .iter()
        .filter_map(|c| {
            c.record.emotion.as_ref().map(|label| EvalItem {
                id: c.record.id.clone(),
                label: label.clone(),
                features: c.features,
            })
        })
        .collect();
    let labels: BTreeSet<String> = items.iter().map(|i| i.label.clone()).collect();
    (items, labels.into_iter().collect())
}

/// Stream 0 initializes the model; epoch `e` uses stream `e + 1`.
fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    seeded_stream(seed, epoch as u64 + 1)
}

/// Trains from scratch. `on_epoch` sees each log entry as it is produced.
pub fn train(
    config: &TrainConfig,
    bank: &TemplateBank,
    train_set: &[CorpusItem],
    heldout: &[CorpusItem],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    let (eval_items, heldout_labels) = heldout_eval_items(heldout);
    if eval_items.is_empty() {
        return Err(Error::Config("held-out split has no emotion-labeled items".into()));
    }

    let features: HashMap<&str, &FeatureVector> =
        train_set.iter().map(|c| (c.record.id.as_str(), &c.features)).collect();
    let records: Vec<UtteranceRecord> = train_set.iter().map(|c| c.record.clone()).collect();
    let thresholds = fit_thresholds(&records, &|id: &str| features.get(id).map(|f| **f))?;

    let labels: BTreeSet<&str> = train_set.iter().filter_map(|c| c.record.emotion.as_deref()).collect();
    let vocab = Vocab::build(bank, labels.iter().copied());
    let standardizer = Standardizer::fit(train_set.iter().map(|c| &c.features));

    let mut prepared = Vec::with_capacity(train_set.len());
    let mut dropped = Vec::new();
    for item in train_set {
        let pool = caption_pool(bank, &item.record, Some(&item.features), &thresholds);
        let emotion = match &item.record.emotion {
            Some(label) => emotion_queries(bank, label).unwrap_or_default(),
            None => Vec::new(),
        };
        if effective_pool(&pool, &config.policy, &emotion).is_empty() {
            dropped.push(item.record.id.clone());
            continue;
        }
        prepared.push(PreparedItem {
            audio: standardizer.transform(&item.features),
            pool,
            emotion,
        });
    }

    let mut model = Model::new(config.model, vocab, standardizer, &mut seeded_stream(config.seed, 0));
    let mut adam = AdamState::new(&model.params);
    let rates = config.rates();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Model, EvalReport)> = None;

    for epoch in 0..config.epochs {
        let mut rng = epoch_rng(config.seed, epoch);
        let batches = make_batches(prepared.len(), config.batch_size, &mut rng)?;
        let mut total = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let mut pairs = Vec::with_capacity(batch.len());
            for &i in batch {
                let item = &prepared[i];
                let caption = sample_caption(&item.pool, &config.policy, &item.emotion, &mut rng)?;
                pairs.push(PairInput {
                    audio: item.audio,
                    tokens: model.vocab.tokenize(&caption.text),
                });
            }
            let fb = forward_backward(&pairs, &model.params)?;
            if !fb.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            adam_step(&mut model.params, &fb.grads, &mut adam, &rates, &config.adam)?;
            if !model.params.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            total += fb.loss;
        }

        let queries = build_label_queries(&heldout_labels, &model, config.query_mode)?;
        let report = evaluate(&eval_items, &queries, &model)?;
        let entry = EpochLog {
            epoch,
            loss: total / batches.len() as f64,
            uar: report.uar,
            batches: batches.len(),
        };
        on_epoch(&entry);
        if best.as_ref().is_none_or(|(_, uar, _, _)| report.uar > *uar) {
            best = Some((epoch, report.uar, model.clone(), report));
        }
        log.push(entry);
    }

    let (best_epoch, _, best_model, best_report) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best: best_model,
        best_epoch,
        final_model: model,
        log,
        thresholds,
        dropped,
        heldout_labels,
        best_report,
    })
}

pub const CONFIG_FILE: &str = "config.json";
pub const EPOCH_LOG_FILE: &str = "epochs.jsonl";
pub const BEST_CHECKPOINT_FILE: &str = "checkpoint_best.json";
pub const FINAL_CHECKPOINT_FILE: &str = "checkpoint_final.json";
pub const THRESHOLDS_FILE: &str = "thresholds.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub best_epoch: usize,
    pub best_uar: f64,
    pub final_uar: f64,
    pub train_items: usize,
    pub dropped: Vec<String>,
    pub heldout_labels: Vec<String>,
}

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the run directory: config snapshot, epoch log, both checkpoints,
/// fitted thresholds and a summary.
pub fn write_run_dir(dir: &Path, config: &TrainConfig, outcome: &TrainOutcome, train_items: usize) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join(CONFIG_FILE), serde_json::to_string_pretty(config)? + "\n")?;
    let mut lines = String::new();
    for entry in &outcome.log {
        lines.push_str(&serde_json::to_string(entry)?);
        lines.push('\n');
    }
    write(&dir.join(EPOCH_LOG_FILE), lines)?;
    outcome.best.save(&dir.join(BEST_CHECKPOINT_FILE))?;
    outcome.final_model.save(&dir.join(FINAL_CHECKPOINT_FILE))?;
    write(&dir.join(THRESHOLDS_FILE), serde_json::to_string_pretty(&outcome.thresholds)? + "\n")?;
    let summary = RunSummary {
        best_epoch: outcome.best_epoch,
        best_uar: outcome.best_uar(),
        final_uar: outcome.log.last().map_or(f64::NAN, |e| e.uar),
        train_items,
        dropped: outcome.dropped.clone(),
        heldout_labels: outcome.heldout_labels.clone(),
    };
    write(&dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")
}

pub fn read_epoch_log(path: &Path) -> Result<Vec<EpochLog>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { batch_size: 1, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { lr_heads: 0.0, ..Default::default() },
            TrainConfig { lr_encoders: f64::NAN, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn epoch_streams_differ() {
        use rand::Rng;
        let a: u64 = epoch_rng(1, 0).random();
        let b: u64 = epoch_rng(1, 1).random();
        let c: u64 = epoch_rng(1, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
