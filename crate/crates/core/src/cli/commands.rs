use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use paraclap::corpus::{default_profiles, load_manifest, parse_profiles, synthesize_corpus, UtteranceRecord};
use paraclap::eval::{build_label_queries, evaluate, EvalItem, ItemFailure, QueryMode};
use paraclap::features::{
    extract_records, read_feature_cache, write_feature_cache, ClipSpec, FeatureRow, FeatureVector,
};
use paraclap::model::{Model, ModelConfig};
use paraclap::querygen::{
    build_template_bank, caption_pool, emotion_queries, fit_thresholds, sample_caption, CaptionPolicy,
    TemplateBank,
};
use paraclap::training::{train, write_run_dir, CorpusItem, TrainConfig};
use paraclap::Error;

use super::{
    usage_error, CaptionArgs, Cli, Command, ConfigFile, EvalArgs, ExtractArgs, Failure, SynthArgs, TrainArgs,
    UsageExt, EXIT_RUNTIME, EXIT_USAGE,
};

struct RunContext {
    config: ConfigFile,
    seed: u64,
    verbose: bool,
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let config = ConfigFile::load(cli.config.as_deref())?;
    let seed = config.pick_or(cli.seed, "seed", 0u64)?;
    let verbose = cli.verbose || config.get("verbose")?.unwrap_or(false);
    let ctx = RunContext { config, seed, verbose };
    match cli.command {
        Command::Extract(a) => extract(&ctx, a),
        Command::Caption(a) => caption(&ctx, a),
        Command::Synth(a) => synth(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
    }
}

/// Library errors caused by bad inputs or settings are usage errors.
fn lib_failure(e: Error) -> Failure {
    let code = match e {
        Error::Config(_)
        | Error::UnknownLabel(_)
        | Error::UnknownGender(_)
        | Error::LabelNotInQuerySet(_)
        | Error::InsufficientData { .. }
        | Error::EmptyInput(_)
        | Error::InvalidTemplate { .. } => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    };
    Failure { code, error: e.into() }
}

fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display())).usage()?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn load_records(path: &Path) -> Result<Vec<UtteranceRecord>, Failure> {
    let records = load_manifest(path).usage()?;
    if records.is_empty() {
        return Err(usage_error(format!("manifest {} has no records", path.display())));
    }
    Ok(records)
}

fn load_features(path: &Path) -> Result<HashMap<String, FeatureVector>, Failure> {
    Ok(read_feature_cache(path)
        .usage()?
        .into_iter()
        .map(|row| (row.id.clone(), row.features()))
        .collect())
}

fn load_bank(path: Option<PathBuf>) -> Result<TemplateBank, Failure> {
    match path {
        Some(p) => TemplateBank::load(&p).usage(),
        None => Ok(build_template_bank()),
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), Failure> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item)?);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn extract(ctx: &RunContext, a: ExtractArgs) -> Result<(), Failure> {
    let c = &ctx.config;
    let manifest: PathBuf = c.require(a.manifest, "manifest")?;
    let out: PathBuf = c.require(a.out, "out")?;
    let clip: Option<f64> = c.pick(a.clip_seconds, "clip_seconds")?;
    if let Some(s) = clip {
        if !(s > 0.0 && s.is_finite()) {
            return Err(usage_error(format!("--clip-seconds must be positive, got {s}")));
        }
    }
    let records = load_records(&manifest)?;
    let results = extract_records(&records, clip.map(|seconds| ClipSpec { seconds, seed: ctx.seed }));
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(fv) => rows.push(FeatureRow::new(record.id.clone(), &fv)),
            Err(e) => failures.push(ItemFailure {
                id: record.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    write_feature_cache(&out, &rows).map_err(lib_failure)?;
    let errors_path = sidecar(&out, "errors.jsonl");
    write_lines(&errors_path, &failures)?;
    for f in &failures {
        eprintln!("warning: {}: {}", f.id, f.error);
    }
    if rows.is_empty() {
        return Err(Failure {
            code: EXIT_RUNTIME,
            error: anyhow::anyhow!("no record could be processed; see {}", errors_path.display()),
        });
    }
    println!("extracted {} of {} records", rows.len(), records.len());
    Ok(())
}

#[derive(Serialize)]
struct CaptionLine<'a> {
    id: &'a str,
    caption: String,
    parts: Vec<String>,
}

fn caption(ctx: &RunContext, a: CaptionArgs) -> Result<(), Failure> {
    let c = &ctx.config;
    let manifest: PathBuf = c.require(a.manifest, "manifest")?;
    let features_path: PathBuf = c.require(a.features, "features")?;
    let out: PathBuf = c.require(a.out, "out")?;
    let mode: String = c.pick_or(a.mode, "mode", "only-emo".to_string())?;
    let max_queries: usize = c.pick_or(a.max_queries, "max_queries", 5)?;
    let policy = CaptionPolicy::parse(&mode, max_queries).map_err(lib_failure)?;
    let bank = load_bank(c.pick(a.template_bank, "template_bank")?)?;
    let records = load_records(&manifest)?;
    let features = load_features(&features_path)?;
    let missing = records.iter().filter(|r| !features.contains_key(&r.id)).count();
    if missing > 0 {
        eprintln!("warning: {missing} records have no features; their captions use labels only");
    }

    let thresholds =
        fit_thresholds(&records, &|id: &str| features.get(id).copied()).map_err(lib_failure)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut lines = Vec::new();
    let mut skipped = Vec::new();
    for r in &records {
        let pool = caption_pool(&bank, r, features.get(&r.id), &thresholds);
        let emotion = r
            .emotion
            .as_deref()
            .map(|l| emotion_queries(&bank, l).unwrap_or_default())
            .unwrap_or_default();
        match sample_caption(&pool, &policy, &emotion, &mut rng) {
            Ok(cap) => lines.push(CaptionLine {
                id: &r.id,
                caption: cap.text,
                parts: cap.parts,
            }),
            Err(Error::EmptyPool) => skipped.push(r.id.as_str()),
            Err(e) => return Err(lib_failure(e)),
        }
    }
    write_lines(&out, &lines)?;
    let thresholds_path = sidecar(&out, "thresholds.json");
    fs::write(&thresholds_path, serde_json::to_string_pretty(&thresholds)? + "\n")
        .with_context(|| format!("writing {}", thresholds_path.display()))?;
    if !skipped.is_empty() {
        eprintln!(
            "warning: no caption under {policy} for {} records: {}",
            skipped.len(),
            skipped.join(", ")
        );
    }
    if lines.is_empty() {
        return Err(Failure {
            code: EXIT_RUNTIME,
            error: anyhow::anyhow!("no record yields a caption under {policy}"),
        });
    }
    println!("wrote {} captions ({policy})", lines.len());
    Ok(())
}

fn synth(ctx: &RunContext, a: SynthArgs) -> Result<(), Failure> {
    let c = &ctx.config;
    let out_dir: PathBuf = c.require(a.out_dir, "out_dir")?;
    let n: usize = c.pick_or(a.n, "n", 50)?;
    if n == 0 {
        return Err(usage_error("--n must be at least 1"));
    }
    let profiles = match c.pick::<String>(a.classes, "classes")? {
        Some(spec) => parse_profiles(&spec).map_err(lib_failure)?,
        None => default_profiles(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let out = synthesize_corpus(&profiles, n, &out_dir, &mut rng).map_err(lib_failure)?;
    println!("wrote {} utterances to {}", out.records.len(), out.manifest_path.display());
    Ok(())
}

fn join_features(
    records: Vec<UtteranceRecord>,
    features: &HashMap<String, FeatureVector>,
    what: &str,
) -> Vec<CorpusItem> {
    let mut missing = 0;
    let items: Vec<CorpusItem> = records
        .into_iter()
        .filter_map(|record| match features.get(&record.id) {
            Some(fv) => Some(CorpusItem {
                features: *fv,
                record,
            }),
            None => {
                missing += 1;
                None
            }
        })
        .collect();
    if missing > 0 {
        eprintln!("warning: skipping {missing} {what} records without features");
    }
    items
}

/// Holds out `fraction` of every emotion class (rounded), chosen with a
/// seeded shuffle. Both parts keep manifest order.
fn stratified_split(items: Vec<CorpusItem>, fraction: f64, seed: u64) -> (Vec<CorpusItem>, Vec<CorpusItem>) {
    let mut groups: BTreeMap<Option<String>, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        groups.entry(item.record.emotion.clone()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let mut held = BTreeSet::new();
    for indices in groups.values_mut() {
        indices.shuffle(&mut rng);
        let k = (fraction * indices.len() as f64).round() as usize;
        held.extend(indices.iter().take(k).copied());
    }
    let (mut train_part, mut held_part) = (Vec::new(), Vec::new());
    for (i, item) in items.into_iter().enumerate() {
        if held.contains(&i) {
            held_part.push(item);
        } else {
            train_part.push(item);
        }
    }
    (train_part, held_part)
}

#[derive(Serialize)]
struct RunInputs {
    manifest: PathBuf,
    features: PathBuf,
    heldout_manifest: Option<PathBuf>,
    heldout_features: Option<PathBuf>,
    heldout_fraction: Option<f64>,
    template_bank: Option<PathBuf>,
    dataset_id: String,
    features_id: String,
    train_items: usize,
    heldout_items: usize,
}

fn train_cmd(ctx: &RunContext, a: TrainArgs) -> Result<(), Failure> {
    let c = &ctx.config;
    let manifest: PathBuf = c.require(a.manifest, "manifest")?;
    let features_path: PathBuf = c.require(a.features, "features")?;
    let out_dir: PathBuf = c.require(a.out_dir, "out_dir")?;
    let defaults = TrainConfig::default();
    let mode: String = c.pick_or(a.mode, "mode", "only-emo".to_string())?;
    let max_queries: usize = c.pick_or(a.max_queries, "max_queries", 5)?;
    let query_mode: String = c.pick_or(a.query_mode, "query_mode", "raw".to_string())?;
    let config = TrainConfig {
        batch_size: c.pick_or(a.batch_size, "batch_size", defaults.batch_size)?,
        epochs: c.pick_or(a.epochs, "epochs", defaults.epochs)?,
        lr_encoders: c.pick_or(a.lr_encoders, "lr_encoders", defaults.lr_encoders)?,
        lr_heads: c.pick_or(a.lr_heads, "lr_heads", defaults.lr_heads)?,
        policy: CaptionPolicy::parse(&mode, max_queries).map_err(lib_failure)?,
        seed: ctx.seed,
        adam: defaults.adam,
        model: ModelConfig {
            d: c.pick_or(a.dim, "dim", defaults.model.d)?,
            ..defaults.model
        },
        query_mode: query_mode.parse::<QueryMode>().map_err(lib_failure)?,
    };
    config.validate().map_err(lib_failure)?;
    let heldout_manifest: Option<PathBuf> = c.pick(a.heldout_manifest, "heldout_manifest")?;
    let heldout_features: Option<PathBuf> = c.pick(a.heldout_features, "heldout_features")?;
    let heldout_fraction: f64 = c.pick_or(a.heldout_fraction, "heldout_fraction", 0.2)?;
    if !(heldout_fraction > 0.0 && heldout_fraction < 1.0) {
        return Err(usage_error(format!("--heldout-fraction must lie in (0, 1), got {heldout_fraction}")));
    }
    let bank_path: Option<PathBuf> = c.pick(a.template_bank, "template_bank")?;
    let bank = load_bank(bank_path.clone())?;

    let features = load_features(&features_path)?;
    let items = join_features(load_records(&manifest)?, &features, "training");
    let (train_set, heldout) = match &heldout_manifest {
        Some(path) => {
            let hf = match &heldout_features {
                Some(p) => load_features(p)?,
                None => features.clone(),
            };
            (items, join_features(load_records(path)?, &hf, "held-out"))
        }
        None => stratified_split(items, heldout_fraction, ctx.seed),
    };

    let verbose = ctx.verbose;
    let outcome = train(&config, &bank, &train_set, &heldout, |e| {
        if verbose {
            eprintln!("epoch {:>3}  loss {:.4}  held-out UAR {:.4}", e.epoch, e.loss, e.uar);
        }
    })
    .map_err(lib_failure)?;
    if !outcome.dropped.is_empty() {
        eprintln!(
            "warning: {} training records have no caption under {}",
            outcome.dropped.len(),
            config.policy
        );
    }
    write_run_dir(&out_dir, &config, &outcome, train_set.len()).map_err(lib_failure)?;
    let inputs = RunInputs {
        dataset_id: sha256_file(&manifest)?,
        features_id: sha256_file(&features_path)?,
        manifest,
        features: features_path,
        heldout_fraction: heldout_manifest.is_none().then_some(heldout_fraction),
        heldout_manifest,
        heldout_features,
        template_bank: bank_path,
        train_items: train_set.len(),
        heldout_items: heldout.len(),
    };
    let inputs_path = out_dir.join("inputs.json");
    fs::write(&inputs_path, serde_json::to_string_pretty(&inputs)? + "\n")
        .with_context(|| format!("writing {}", inputs_path.display()))?;
    println!(
        "held-out UAR {} (best epoch {}); final epoch UAR {}",
        outcome.best_uar(),
        outcome.best_epoch,
        outcome.log.last().map_or(f64::NAN, |e| e.uar)
    );
    Ok(())
}

fn eval(ctx: &RunContext, a: EvalArgs) -> Result<(), Failure> {
    let c = &ctx.config;
    let manifest: PathBuf = c.require(a.manifest, "manifest")?;
    let checkpoint: PathBuf = c.require(a.checkpoint, "checkpoint")?;
    let out: PathBuf = c.require(a.out, "out")?;
    let features_path: Option<PathBuf> = c.pick(a.features, "features")?;
    let query_mode: QueryMode = c
        .pick_or(a.query_mode, "query_mode", "raw".to_string())?
        .parse()
        .map_err(lib_failure)?;
    let labels_arg: Option<String> = c.pick(a.labels, "labels")?;

    let model = Model::load(&checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))
        .usage()?;
    let records: Vec<UtteranceRecord> =
        load_records(&manifest)?.into_iter().filter(|r| r.emotion.is_some()).collect();
    if records.is_empty() {
        return Err(usage_error(format!("manifest {} has no emotion labels", manifest.display())));
    }
    let manifest_labels: BTreeSet<String> = records.iter().filter_map(|r| r.emotion.clone()).collect();
    let labels: Vec<String> = match labels_arg {
        Some(s) => s.split(',').map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect(),
        None => manifest_labels.iter().cloned().collect(),
    };
    let unknown: Vec<&str> = manifest_labels
        .iter()
        .filter(|l| !labels.contains(l))
        .map(String::as_str)
        .collect();
    if !unknown.is_empty() {
        return Err(usage_error(format!(
            "manifest labels not in --labels: {}",
            unknown.join(", ")
        )));
    }

    let mut failures = Vec::new();
    let mut items = Vec::with_capacity(records.len());
    match &features_path {
        Some(p) => {
            let features = load_features(p)?;
            for r in &records {
                match features.get(&r.id) {
                    Some(fv) => items.push(eval_item(r, *fv)),
                    None => failures.push(ItemFailure {
                        id: r.id.clone(),
                        error: "no features in cache".into(),
                    }),
                }
            }
        }
        None => {
            for (r, result) in records.iter().zip(extract_records(&records, None)) {
                match result {
                    Ok(fv) => items.push(eval_item(r, fv)),
                    Err(e) => failures.push(ItemFailure {
                        id: r.id.clone(),
                        error: e.to_string(),
                    }),
                }
            }
        }
    }

    let queries = build_label_queries(&labels, &model, query_mode).map_err(lib_failure)?;
    for w in &queries.warnings {
        eprintln!("warning: {w}");
    }
    let mut report = evaluate(&items, &queries, &model).map_err(lib_failure)?;
    report.failures.extend(failures);
    report.checkpoint_id = Some(sha256_file(&checkpoint)?);
    report.dataset_id = Some(sha256_file(&manifest)?);
    let confusion_path = sidecar(&out, "confusion.csv");
    report.write(&out, &confusion_path).map_err(lib_failure)?;
    if ctx.verbose {
        for f in &report.failures {
            eprintln!("warning: {}: {}", f.id, f.error);
        }
    }
    println!("UAR: {}", report.uar);
    Ok(())
}

fn eval_item(r: &UtteranceRecord, features: FeatureVector) -> EvalItem {
    EvalItem {
        id: r.id.clone(),
        label: r.emotion.clone().unwrap_or_default(),
        features,
    }
}
