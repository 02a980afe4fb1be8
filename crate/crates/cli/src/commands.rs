//! One function per subcommand. Each validates its inputs before writing
//! anything and returns a value the binary prints.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use padkit::data::{
    build_feature_cache, load_manifest, split_records, synth_dataset, write_manifest, write_samples, CacheReport,
    ManifestRecord, Split, SynthConfig, SynthProfile,
};
use padkit::error::{Error, Result};
use padkit::eval::{
    cross_eval_entry, eer, encode_roc_csv, hter, read_scores, write_scores, Aggregation, CrossEvalReport, EvalReport,
    ScoreSet,
};
use padkit::fsutil::write_atomic;
use padkit::model::{
    layer_gradchecks, load_checkpoint, model_gradcheck, save_checkpoint, Architecture, Checkpoint, GradCheckEntry,
    Model, ModelConfig, Variant,
};
use padkit::nn::OptimizerState;
use padkit::texture::{read_feature_cache, write_feature_cache, FeatureCache};
use padkit::train::{encode_loss_log, score_dataset, train_epochs, Dataset, LossLogEntry};
use serde_json::json;

use crate::config::RunConfig;

/// Batch size used for scoring; it does not affect the scores.
const SCORE_BATCH: usize = 64;

/// Path of the JSON sidecar that records how a non-JSON artifact was made.
pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_os_string();
    name.push(".run.json");
    PathBuf::from(name)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn write_sidecar(artifact: &Path, command: &str, config: &RunConfig, extra: serde_json::Value) -> Result<()> {
    write_json(
        &sidecar_path(artifact),
        &json!({ "command": command, "config": config.to_json(), "details": extra }),
    )
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{what} {} does not exist", path.display())))
    }
}

/// Splits `NAME=PATH`.
pub fn parse_named(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub out: PathBuf,
    pub profile: SynthProfile,
    /// Samples per split, half genuine (rounded up) and half spoof.
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub side: usize,
}

/// Renders each requested split under `out` and writes `out/manifest.csv`.
pub fn cmd_synth(args: &SynthArgs, config: &RunConfig) -> Result<Vec<ManifestRecord>> {
    let splits = [(Split::Train, args.train), (Split::Dev, args.dev), (Split::Test, args.test)];
    let mut configs = Vec::new();
    for (split, n) in splits {
        if n == 0 {
            continue;
        }
        if n < 2 {
            return Err(Error::Validation(format!("{} split needs at least 2 samples", split.as_str())));
        }
        let synth = SynthConfig {
            side: args.side,
            profile: args.profile,
            split,
            ..SynthConfig::new(n - n / 2, n / 2, config.seed())
        };
        synth.validate()?;
        configs.push(synth);
    }
    if configs.is_empty() {
        return Err(Error::Validation("every split count is 0".into()));
    }
    let mut records = Vec::new();
    for synth in &configs {
        let samples = synth_dataset(synth)?;
        records.extend(write_samples(&args.out, &samples)?);
    }
    let manifest = args.out.join("manifest.csv");
    write_manifest(&manifest, &records)?;
    write_sidecar(&manifest, "synth", config, serde_json::to_value(&configs)?)?;
    Ok(records)
}

/// Texture vectors for every readable record of the manifest.
pub fn cmd_extract(manifest: &Path, out: &Path, config: &RunConfig) -> Result<CacheReport> {
    require_file(manifest, "manifest")?;
    let records = load_manifest(manifest)?;
    let (cache, report) = build_feature_cache(&records, &config.preprocess(), &config.descriptor)?;
    if cache.records.is_empty() {
        return Err(Error::InsufficientData(format!("none of {} records could be described", records.len())));
    }
    write_feature_cache(out, &cache)?;
    let failures: Vec<_> = report
        .failures
        .iter()
        .map(|f| json!({ "id": f.id, "class": f.class, "detail": f.detail }))
        .collect();
    write_sidecar(
        out,
        "extract",
        config,
        json!({ "manifest": manifest, "requested": report.requested, "written": report.written, "failures": failures }),
    )?;
    Ok(report)
}

fn load_cache_for(variant: Variant, cache: Option<&Path>, wide_input: usize) -> Result<Option<FeatureCache>> {
    if !variant.uses_wide() {
        return Ok(None);
    }
    let path = cache.ok_or_else(|| {
        Error::Validation(format!("the {} variant needs a feature cache (--cache)", variant.as_str()))
    })?;
    require_file(path, "feature cache")?;
    let cache = read_feature_cache(path)?;
    let len = cache.config.vector_len();
    if len != wide_input {
        return Err(Error::ConfigMismatch(format!(
            "cache vectors have {len} values but the model expects {wide_input}"
        )));
    }
    Ok(Some(cache))
}

/// Scores records with a model in inference mode.
pub fn score_records(
    model: &mut Model,
    records: &[ManifestRecord],
    cache: Option<&FeatureCache>,
    config: &RunConfig,
) -> Result<ScoreSet> {
    let model_config = model.config().clone();
    let data = Dataset::load(
        records,
        &config.preprocess_for(&model_config),
        model_config.variant.uses_deep(),
        cache.filter(|_| model_config.variant.uses_wide()),
    )?;
    score_dataset(model, &data, SCORE_BATCH)
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub manifest: PathBuf,
    pub cache: Option<PathBuf>,
    pub out: PathBuf,
    /// Defaults to the checkpoint path with extension `loss.csv`.
    pub loss_log: Option<PathBuf>,
    /// Continue from this checkpoint's weights, optimizer state and epoch.
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub log: Vec<LossLogEntry>,
    pub epochs_completed: usize,
    /// EER on the manifest's dev split, when it has one.
    pub dev_eer: Option<f64>,
    pub loss_log: PathBuf,
}

/// Trains on the manifest's train split and writes a checkpoint plus a
/// loss log.
pub fn cmd_train(
    args: &TrainArgs,
    config: &RunConfig,
    on_step: &mut dyn FnMut(&LossLogEntry),
) -> Result<TrainSummary> {
    require_file(&args.manifest, "manifest")?;
    let (mut model, mut optimizer, first_epoch) = match &args.resume {
        Some(path) => {
            require_file(path, "checkpoint")?;
            let ckpt = load_checkpoint(path)?;
            let first = ckpt
                .run
                .as_ref()
                .and_then(|r| r.get("epochs_completed"))
                .and_then(|v| v.as_u64())
                .unwrap_or(0) as usize;
            let optimizer = match ckpt.optimizer {
                Some(o) => o,
                None => OptimizerState::new(config.sgd())?,
            };
            (ckpt.model, optimizer, first)
        }
        None => (Model::new(config.model.clone())?, OptimizerState::new(config.sgd())?, 0),
    };
    let model_config = model.config().clone();
    let records = load_manifest(&args.manifest)?;
    let train = split_records(&records, Split::Train);
    if train.len() < 2 {
        return Err(Error::Validation(format!(
            "{} has {} train records, need at least 2",
            args.manifest.display(),
            train.len()
        )));
    }
    let cache = load_cache_for(model_config.variant, args.cache.as_deref(), model_config.wide_input)?;
    let data = Dataset::load(
        &train,
        &config.preprocess_for(&model_config),
        model_config.variant.uses_deep(),
        cache.as_ref(),
    )?;
    let log = train_epochs(&mut model, &mut optimizer, &data, &config.train(), first_epoch, on_step)?;
    drop(data);

    let dev = split_records(&records, Split::Dev);
    let dev_eer = if dev.is_empty() {
        None
    } else {
        Some(eer(&score_records(&mut model, &dev, cache.as_ref(), config)?)?.rate)
    };
    let epochs_completed = first_epoch + config.epochs;
    let run = json!({
        "command": "train",
        "config": config.to_json(),
        "epochs_completed": epochs_completed,
        "dev_eer": dev_eer,
    });
    let loss_log = args.loss_log.clone().unwrap_or_else(|| args.out.with_extension("loss.csv"));
    save_checkpoint(
        &args.out,
        &Checkpoint {
            model,
            optimizer: Some(optimizer),
            run: Some(run.clone()),
        },
    )?;
    write_atomic(&loss_log, &encode_loss_log(&log))?;
    write_sidecar(&loss_log, "train", config, json!({ "checkpoint": args.out }))?;
    Ok(TrainSummary {
        log,
        epochs_completed,
        dev_eer,
        loss_log,
    })
}

/// Scores one split (or the whole manifest) with a checkpoint.
pub fn cmd_predict(
    checkpoint: &Path,
    manifest: &Path,
    cache: Option<&Path>,
    split: Option<Split>,
    out: &Path,
    config: &RunConfig,
) -> Result<ScoreSet> {
    require_file(checkpoint, "checkpoint")?;
    require_file(manifest, "manifest")?;
    let mut model = load_checkpoint(checkpoint)?.model;
    let records = load_manifest(manifest)?;
    let records = match split {
        Some(s) => split_records(&records, s),
        None => records,
    };
    if records.is_empty() {
        return Err(Error::Validation(format!(
            "{} has no {} records",
            manifest.display(),
            split.map_or("", |s| s.as_str())
        )));
    }
    let wide_input = model.config().wide_input;
    let cache = load_cache_for(model.variant(), cache, wide_input)?;
    let scores = score_records(&mut model, &records, cache.as_ref(), config)?;
    write_scores(out, &scores)?;
    write_sidecar(
        out,
        "predict",
        config,
        json!({ "checkpoint": checkpoint, "manifest": manifest, "split": split.map(|s| s.as_str()) }),
    )?;
    Ok(scores)
}

/// HTER of `test` at the operating threshold of `dev`, per aggregation.
pub fn cmd_eval(
    dev: &Path,
    test: &Path,
    aggregations: &[Aggregation],
    out: Option<&Path>,
    roc: Option<&Path>,
    config: &RunConfig,
) -> Result<Vec<(Aggregation, EvalReport)>> {
    require_file(dev, "dev scores")?;
    require_file(test, "test scores")?;
    let dev = read_scores(dev)?;
    let test = read_scores(test)?;
    let mut reports = Vec::new();
    for &agg in aggregations {
        reports.push((agg, hter(&dev.aggregate(agg)?, &test.aggregate(agg)?)?));
    }
    if let (Some(path), Some((_, first))) = (roc, reports.first()) {
        write_atomic(path, &encode_roc_csv(&first.roc))?;
        write_sidecar(path, "eval", config, json!({ "aggregation": reports[0].0 }))?;
    }
    if let Some(path) = out {
        let mut body = serde_json::Map::new();
        body.insert("command".into(), json!("eval"));
        body.insert("config".into(), config.to_json());
        for (agg, report) in &reports {
            body.insert(agg.as_str().into(), serde_json::to_value(report)?);
        }
        write_json(path, &serde_json::Value::Object(body))?;
    }
    Ok(reports)
}

pub fn format_eval(reports: &[(Aggregation, EvalReport)]) -> String {
    let mut out = String::new();
    for (agg, r) in reports {
        out.push_str(&format!(
            "{:<6} EER {:>6.2}%  HTER {:>6.2}%  (FAR {:.2}%, FRR {:.2}% at dev threshold {:.6}, dev EER {:.2}%, {} genuine / {} spoof)\n",
            agg.as_str(),
            100.0 * r.eer,
            100.0 * r.hter,
            100.0 * r.far,
            100.0 * r.frr,
            r.threshold,
            100.0 * r.dev_eer,
            r.genuine,
            r.spoof
        ));
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct CrossEvalArgs {
    /// `(name, manifest)`; each needs a test split.
    pub datasets: Vec<(String, PathBuf)>,
    /// `(dataset name, feature cache)`.
    pub caches: Vec<(String, PathBuf)>,
    /// `(training dataset name, checkpoint)`; the dataset needs a dev
    /// split. Several checkpoints (variants) may share a training set.
    pub checkpoints: Vec<(String, PathBuf)>,
    pub out: Option<PathBuf>,
}

/// Scores every checkpoint on its training set's dev split and on every
/// dataset's test split, for per-frame and per-video aggregation.
pub fn cmd_crosseval(args: &CrossEvalArgs, config: &RunConfig) -> Result<CrossEvalReport> {
    if args.checkpoints.is_empty() {
        return Err(Error::Validation("no --checkpoint given".into()));
    }
    let mut manifests: BTreeMap<&str, Vec<ManifestRecord>> = BTreeMap::new();
    for (name, path) in &args.datasets {
        require_file(path, "manifest")?;
        let records = load_manifest(path)?;
        if split_records(&records, Split::Test).is_empty() {
            return Err(Error::Validation(format!("dataset {name} has no test split")));
        }
        if manifests.insert(name, records).is_some() {
            return Err(Error::Validation(format!("dataset {name} given twice")));
        }
    }
    let cache_paths: BTreeMap<&str, &Path> = args.caches.iter().map(|(n, p)| (n.as_str(), p.as_path())).collect();
    let mut models = Vec::new();
    for (train, path) in &args.checkpoints {
        let records = manifests
            .get(train.as_str())
            .ok_or_else(|| Error::Validation(format!("checkpoint names unknown dataset {train}")))?;
        if split_records(records, Split::Dev).is_empty() {
            return Err(Error::Validation(format!("training dataset {train} has no dev split")));
        }
        require_file(path, "checkpoint")?;
        let model = load_checkpoint(path)?.model;
        if model.variant().uses_wide() {
            for (name, _) in &args.datasets {
                if !cache_paths.contains_key(name.as_str()) {
                    return Err(Error::Validation(format!(
                        "{} needs a feature cache for dataset {name} (--cache {name}=PATH)",
                        path.display()
                    )));
                }
            }
        }
        models.push((train.clone(), model));
    }
    let mut caches: BTreeMap<&str, FeatureCache> = BTreeMap::new();
    if models.iter().any(|(_, m)| m.variant().uses_wide()) {
        for (name, _) in &args.datasets {
            let path = cache_paths[name.as_str()];
            require_file(path, "feature cache")?;
            caches.insert(name, read_feature_cache(path)?);
        }
    }

    let mut report = CrossEvalReport::default();
    for (train, model) in &mut models {
        let variant = model.variant().as_str();
        let dev_records = split_records(&manifests[train.as_str()], Split::Dev);
        let dev = score_records(model, &dev_records, caches.get(train.as_str()), config)?;
        for (eval, _) in &args.datasets {
            let test_records = split_records(&manifests[eval.as_str()], Split::Test);
            let test = score_records(model, &test_records, caches.get(eval.as_str()), config)?;
            for agg in [Aggregation::Frame, Aggregation::Video] {
                report.entries.push(cross_eval_entry(train, eval, variant, agg, &dev, &test)?);
            }
        }
    }
    if let Some(path) = &args.out {
        write_json(
            path,
            &json!({ "command": "crosseval", "config": config.to_json(), "report": report }),
        )?;
    }
    Ok(report)
}

/// Every train-by-eval table, then a variant table per training set when
/// more than one variant was evaluated.
pub fn format_crosseval(report: &CrossEvalReport) -> String {
    let mut out = String::new();
    for agg in [Aggregation::Frame, Aggregation::Video] {
        for v in report.variants() {
            out.push_str(&report.train_eval_table(&v, agg));
            out.push('\n');
        }
        if report.variants().len() > 1 {
            for t in report.train_sets() {
                out.push_str(&report.variant_table(&t, agg));
                out.push('\n');
            }
        }
    }
    out
}

/// Per-layer checks followed by end-to-end checks of each variant of the
/// tiny model.
pub fn cmd_gradcheck(epsilon: f32, samples: usize, config: &RunConfig) -> Result<Vec<GradCheckEntry>> {
    let mut entries = layer_gradchecks(config.seed(), epsilon)?;
    for variant in Variant::ALL {
        let tiny = ModelConfig {
            seed: config.seed(),
            wide_input: config.descriptor.vector_len(),
            ..ModelConfig::tiny().with_variant(variant)
        };
        for mut e in model_gradcheck(&tiny, 4, epsilon, samples)? {
            e.name = format!("{}/{}", variant.as_str(), e.name);
            entries.push(e);
        }
    }
    Ok(entries)
}

/// Fails when any check exceeds `tolerance` or probed nothing.
pub fn gradcheck_verdict(entries: &[GradCheckEntry], tolerance: f64) -> Result<()> {
    let bad: Vec<String> = entries
        .iter()
        .filter(|e| e.checked == 0 || !(e.max_relative_error <= tolerance))
        .map(|e| format!("{} ({:.3e}, {} probed)", e.name, e.max_relative_error, e.checked))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::NumericFailure(format!("gradient check failed for {}", bad.join(", "))))
    }
}

pub fn format_gradcheck(entries: &[GradCheckEntry]) -> String {
    let mut out = format!("{:<44} {:>12} {:>8} {:>8}\n", "check", "max rel err", "probed", "kinks");
    for e in entries {
        out.push_str(&format!(
            "{:<44} {:>12.3e} {:>8} {:>8}\n",
            e.name, e.max_relative_error, e.checked, e.skipped_kinks
        ));
    }
    out
}

/// Parameter tables of the configured model, or of a checkpoint's model.
pub fn cmd_inspect(config: &RunConfig, checkpoint: Option<&Path>) -> Result<Architecture> {
    match checkpoint {
        Some(path) => {
            require_file(path, "checkpoint")?;
            load_checkpoint(path)?.model.config().architecture()
        }
        None => config.model.architecture(),
    }
}
