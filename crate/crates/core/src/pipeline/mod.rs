//! End-to-end experiment: prepare the corpus, train one FM per variant (the
//! attribute-free model plus one model per attribute) on a shared temporal
//! split, recommend, evaluate, audit the lists, and compare variants.
//!
//! Layout under `output_dir`:
//!
//! ```text
//! cache/<corpus key>/{dataset,attributes,split}.tsv, stats.txt
//! seed-<seed>/models/<variant>.fm
//! seed-<seed>/lists/<variant>.tsv
//! seed-<seed>/{search,metrics,audit,survival}.tsv, survival.txt
//! seed-<seed>/manifest.json
//! ```

mod config;
mod manifest;

pub use config::{
    AuditSettings, CorpusSettings, DatasetKind, ExperimentConfig, GridSettings, TrainingSettings,
    NO_ATTRIBUTE,
};
pub use manifest::{RecordedSettings, RunManifest, StageRecord};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::audit::{build_features, cross_validate};
use crate::corpus::{
    derive_attribute, encode_features, filter_min_activity, load_listening_log, load_rating_log,
    read_attribute_snapshot, read_dataset_snapshot, to_implicit, write_attribute_snapshot,
    write_dataset_snapshot, AttributeTable, DeriveRule, FeatureEncoding, ImplicitDataset, Lookup,
    RatingFormat,
};
use crate::error::{Error, Result};
use crate::metrics::{accuracy_metrics, diversity_metrics};
use crate::ranker::{
    grid_search, read_topn, recommend_topn, write_checkpoint, write_topn, Loss, TopNList,
    INIT_SCALE, WARP_MARGIN,
};
use crate::report::{
    audit_to_tsv, metric_rows, metrics_to_tsv, read_audit, read_metrics, AuditRow, MetricRow,
    CLASSIFIER_LOGREG, CLASSIFIER_MOST_FREQUENT,
};
use crate::splits::{read_split_snapshot, stratified_kfold, temporal_split, write_split_snapshot, TemporalSplit};
use crate::survival::{
    build_survival_report, survival_table, survival_to_tsv, ClassificationScore, RankingScore,
    SurvivalReport, NO_ATTRIBUTE as SURVIVAL_BASE, WITH_ATTRIBUTE,
};

/// Variant name of the matrix-factorization baseline.
pub const BPRMF: &str = "bprmf";

const DERIVE_RULES: [DeriveRule; 4] = [
    DeriveRule::AgeToBracket,
    DeriveRule::ZipToState,
    DeriveRule::CountryToContinent,
    DeriveRule::CountryToEuRest,
];

/// The filtered corpus, its user attributes and the shared split.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub key: String,
    pub dir: PathBuf,
    pub dataset: ImplicitDataset,
    pub attributes: AttributeTable,
    pub split: TemporalSplit,
    /// Loaded from an existing cache entry.
    pub reused: bool,
}

impl PreparedCorpus {
    /// Dataset statistics followed by attribute vocabulary sizes.
    pub fn stats_table(&self, dataset: DatasetKind) -> String {
        let s = self.dataset.stats();
        let mut out = format!(
            "dataset\tusers\titems\tinteractions\n{dataset}\t{}\t{}\t{}\nattribute\tvalues\n",
            s.users, s.items, s.interactions
        );
        for (name, attr) in &self.attributes.attributes {
            let _ = writeln!(out, "{name}\t{}", attr.vocabulary.len());
        }
        out
    }
}

fn user_file_for(cfg: &ExperimentConfig) -> Option<PathBuf> {
    let name = match cfg.dataset {
        DatasetKind::Ml100k => "u.user",
        DatasetKind::Ml1m => "users.dat",
        DatasetKind::Lastfm => return cfg.profile_path.clone(),
    };
    let p = cfg.data_path.parent()?.join(name);
    p.exists().then_some(p)
}

/// Digest of the raw inputs and every corpus setting.
pub fn corpus_key(cfg: &ExperimentConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(b"fmsurvival corpus v1\n");
    h.update(cfg.dataset.to_string().as_bytes());
    let mut settings = cfg.corpus.clone();
    settings.lookups.clear();
    h.update(serde_json::to_string(&settings).unwrap_or_default().as_bytes());
    let mut files: Vec<(String, PathBuf)> = vec![("data".into(), cfg.data_path.clone())];
    if let Some(p) = user_file_for(cfg) {
        files.push(("users".into(), p));
    }
    for (name, p) in &cfg.corpus.lookups {
        files.push((format!("lookup:{name}"), p.clone()));
    }
    for (role, path) in files {
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        h.update(role.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(&h.finalize()[..12]))
}

fn load_corpus(cfg: &ExperimentConfig) -> Result<(ImplicitDataset, AttributeTable)> {
    let (log, mut table) = match cfg.dataset {
        DatasetKind::Ml100k => load_rating_log(&cfg.data_path, RatingFormat::MovieLens100k)?,
        DatasetKind::Ml1m => load_rating_log(&cfg.data_path, RatingFormat::MovieLens1m)?,
        DatasetKind::Lastfm => {
            let profile = cfg
                .profile_path
                .as_ref()
                .ok_or_else(|| Error::Config("lastfm needs profile_path".into()))?;
            load_listening_log(&cfg.data_path, profile)?
        }
    };
    for rule in DERIVE_RULES {
        if table.get(rule.source()).is_none() || table.get(rule.target()).is_some() {
            continue;
        }
        let lookup = match cfg.corpus.lookups.get(rule.target()) {
            Some(p) => Some(Lookup::from_path(p)?),
            None => Lookup::bundled(rule),
        };
        table = derive_attribute(&table, rule, lookup.as_ref())?;
    }
    let c = &cfg.corpus;
    let ds = filter_min_activity(
        &to_implicit(&log, c.cutoff),
        c.min_user_interactions,
        c.min_item_interactions,
    );
    if ds.is_empty() {
        return Err(Error::InvalidInput("no interactions survive filtering".into()));
    }
    let attributes = table.restrict_to(&ds.users);
    Ok((ds, attributes))
}

fn check_attributes(cfg: &ExperimentConfig, table: &AttributeTable) -> Result<()> {
    for a in &cfg.attributes {
        if table.get(a).is_none() {
            let known: Vec<&str> = table.names().collect();
            return Err(Error::Config(format!(
                "attribute `{a}` not available for {}; known: {}",
                cfg.dataset,
                known.join(", ")
            )));
        }
    }
    Ok(())
}

/// Builds (or reloads) the cached corpus, attributes and split.
pub fn cmd_prepare(cfg: &ExperimentConfig) -> Result<PreparedCorpus> {
    let key = corpus_key(cfg)?;
    let dir = cfg.output_dir.join("cache").join(&key);
    let (ds_path, attr_path, split_path) = (
        dir.join("dataset.tsv"),
        dir.join("attributes.tsv"),
        dir.join("split.tsv"),
    );
    let prepared = if ds_path.exists() && attr_path.exists() && split_path.exists() {
        let dataset = read_dataset_snapshot(&ds_path)?;
        let attributes = read_attribute_snapshot(&attr_path)?;
        let split = read_split_snapshot(&split_path, &dataset)?;
        log::info!("reusing prepared corpus {}", dir.display());
        PreparedCorpus { key, dir, dataset, attributes, split, reused: true }
    } else {
        let (dataset, attributes) = load_corpus(cfg)?;
        let split = temporal_split(&dataset, cfg.corpus.test_fraction, cfg.corpus.validation_fraction)?;
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_dataset_snapshot(&dataset, &ds_path)?;
        write_attribute_snapshot(&attributes, &attr_path)?;
        write_split_snapshot(&split, &split_path)?;
        let stats = dir.join("stats.txt");
        let p = PreparedCorpus { key, dir, dataset, attributes, split, reused: false };
        fs::write(&stats, p.stats_table(cfg.dataset)).map_err(|e| Error::io(&stats, e))?;
        p
    };
    check_attributes(cfg, &prepared.attributes)?;
    Ok(prepared)
}

pub fn seed_dir(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.output_dir.join(format!("seed-{seed}"))
}

fn lists_path(run_dir: &Path, variant: &str) -> PathBuf {
    run_dir.join("lists").join(format!("{variant}.tsv"))
}

fn fm_algorithm(loss: Loss) -> String {
    format!("fm-{loss}")
}

fn encoding_for(prep: &PreparedCorpus, variant: &str) -> Result<FeatureEncoding> {
    if variant == NO_ATTRIBUTE || variant == BPRMF {
        encode_features(&prep.dataset, &prep.attributes, &[])
    } else {
        encode_features(&prep.dataset, &prep.attributes, &[variant])
    }
}

/// Outcome of training one variant.
#[derive(Debug, Clone)]
pub struct TrainedVariant {
    pub variant: String,
    pub selected: String,
    pub validation_map: f64,
    pub lists: TopNList,
}

/// Grid search, checkpoint and Top-N lists for every variant (and the
/// BPRMF baseline when enabled). Returns the variants with the artifact
/// paths written.
pub fn train_variants(
    cfg: &ExperimentConfig,
    prep: &PreparedCorpus,
    seed: u64,
    run_dir: &Path,
) -> Result<(Vec<TrainedVariant>, Vec<String>)> {
    for sub in ["models", "lists"] {
        let d = run_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut jobs: Vec<(String, Loss)> = cfg.variants().into_iter().map(|v| (v, cfg.loss)).collect();
    if cfg.training.bprmf {
        jobs.push((BPRMF.to_string(), Loss::Bpr));
    }
    let mut trained = Vec::new();
    let mut artifacts = vec!["search.tsv".to_string()];
    let mut search = String::from("variant\tlearning_rate\tepochs\tfactors\tvalidation_map\n");
    for (variant, loss) in jobs {
        let started = Instant::now();
        let enc = encoding_for(prep, &variant)?;
        let base = crate::ranker::TrainConfig { loss, ..cfg.base_train_config(seed) };
        let grid = cfg.grid_for(&base);
        let outcome = grid_search(&prep.split, &enc, &grid, cfg.n)?;
        for e in &outcome.evaluations {
            let map = e.map.map_or_else(|| "diverged".to_string(), |m| m.to_string());
            let _ = writeln!(
                search,
                "{variant}\t{}\t{}\t{}\t{map}",
                e.config.learning_rate, e.config.epochs, e.config.factors
            );
        }
        let model = run_dir.join("models").join(format!("{variant}.fm"));
        write_checkpoint(&outcome.params, seed, &outcome.best.to_string(), &model)?;
        let lists = recommend_topn(&outcome.params, &prep.split, &enc, cfg.n)?;
        write_topn(&lists, &lists_path(run_dir, &variant))?;
        artifacts.push(format!("models/{variant}.fm"));
        artifacts.push(format!("lists/{variant}.tsv"));
        log::info!(
            "{variant}: selected {} (validation MAP@{} {:.4}) in {:.1}s",
            outcome.best,
            cfg.n,
            outcome.best_map,
            started.elapsed().as_secs_f64()
        );
        trained.push(TrainedVariant {
            variant,
            selected: outcome.best.to_string(),
            validation_map: outcome.best_map,
            lists,
        });
    }
    let path = run_dir.join("search.tsv");
    fs::write(&path, search).map_err(|e| Error::io(&path, e))?;
    Ok((trained, artifacts))
}

fn load_lists(prep: &PreparedCorpus, run_dir: &Path, variant: &str) -> Result<TopNList> {
    read_topn(&lists_path(run_dir, variant), &prep.dataset)
}

/// Accuracy and diversity of every variant's lists, written to `metrics.tsv`.
pub fn evaluate_stage(
    cfg: &ExperimentConfig,
    prep: &PreparedCorpus,
    hash: &str,
    run_dir: &Path,
) -> Result<Vec<MetricRow>> {
    let mut jobs: Vec<(String, String, String)> = cfg
        .variants()
        .into_iter()
        .map(|v| (v.clone(), fm_algorithm(cfg.loss), v))
        .collect();
    if cfg.training.bprmf {
        jobs.push((BPRMF.into(), BPRMF.into(), NO_ATTRIBUTE.into()));
    }
    let dataset = cfg.dataset.to_string();
    let mut rows = Vec::new();
    for (variant, algorithm, attribute) in jobs {
        let lists = load_lists(prep, run_dir, &variant)?;
        let acc = accuracy_metrics(&lists, &prep.split.test)?;
        let div = diversity_metrics(&lists);
        rows.extend(metric_rows(hash, &dataset, &algorithm, &attribute, &acc, &div));
    }
    let path = run_dir.join("metrics.tsv");
    fs::write(&path, metrics_to_tsv(&rows)).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

/// Attribute inference from the lists: each attribute is audited on the
/// attribute-free lists and on the lists of the model trained with it.
pub fn audit_stage(
    cfg: &ExperimentConfig,
    prep: &PreparedCorpus,
    hash: &str,
    seed: u64,
    run_dir: &Path,
) -> Result<Vec<AuditRow>> {
    let clf = cfg.classifier_config(seed);
    let base_lists = load_lists(prep, run_dir, NO_ATTRIBUTE)?;
    let base_x = build_features(&base_lists, &prep.dataset.items)?;
    let dataset = cfg.dataset.to_string();
    let mut rows = Vec::new();
    for attribute in &cfg.attributes {
        let (vocab, labels) = prep
            .attributes
            .labels(attribute, &prep.dataset.users)
            .ok_or_else(|| Error::Config(format!("unknown attribute `{attribute}`")))?;
        let folds = stratified_kfold(&labels, cfg.audit.folds, seed)?;
        let with_x = build_features(&load_lists(prep, run_dir, attribute)?, &prep.dataset.items)?;
        for (variant, x) in [(SURVIVAL_BASE, &base_x), (WITH_ATTRIBUTE, &with_x)] {
            let r = cross_validate(attribute, x, &labels, vocab.len(), &folds, &clf)?;
            log::info!(
                "audit {attribute} on {variant} lists: logreg {:.4} (std {:.4}), most frequent {:.4}",
                r.classifier_f1,
                r.classifier_f1_std,
                r.baseline_f1
            );
            for (classifier, mean_f1, std_f1) in [
                (CLASSIFIER_LOGREG, r.classifier_f1, r.classifier_f1_std),
                (CLASSIFIER_MOST_FREQUENT, r.baseline_f1, r.baseline_f1_std),
            ] {
                rows.push(AuditRow {
                    hash: hash.to_owned(),
                    dataset: dataset.clone(),
                    attribute: attribute.clone(),
                    variant: variant.to_owned(),
                    classifier: classifier.to_owned(),
                    mean_f1,
                    std_f1,
                });
            }
        }
    }
    let path = run_dir.join("audit.tsv");
    fs::write(&path, audit_to_tsv(&rows)).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}

/// Survival table from `metrics.tsv` and `audit.tsv`, written as
/// `survival.tsv` and the aligned `survival.txt`.
pub fn report_stage(cfg: &ExperimentConfig, run_dir: &Path) -> Result<SurvivalReport> {
    let metrics = read_metrics(&run_dir.join("metrics.tsv"))?;
    let audits = read_audit(&run_dir.join("audit.tsv"))?;
    let fm = fm_algorithm(cfg.loss);
    let classification: Vec<ClassificationScore> = audits
        .iter()
        .filter(|r| r.classifier == CLASSIFIER_LOGREG)
        .map(|r| ClassificationScore {
            config_hash: r.hash.clone(),
            attribute: r.attribute.clone(),
            variant: r.variant.clone(),
            macro_f1: r.mean_f1,
        })
        .collect();
    let ranking: Vec<RankingScore> = metrics
        .iter()
        .filter(|r| r.algorithm == fm && r.metric == "ndcg")
        .map(|r| RankingScore {
            config_hash: r.hash.clone(),
            variant: r.attribute.clone(),
            ndcg: r.value,
        })
        .collect();
    let report = build_survival_report(&cfg.attributes, &classification, &ranking)?;
    for (name, text) in [
        ("survival.tsv", survival_to_tsv(&report)),
        ("survival.txt", survival_table(&report)),
    ] {
        let path = run_dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}

/// Everything one seed produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub variants: Vec<TrainedVariant>,
    pub metrics: Vec<MetricRow>,
    pub audit: Vec<AuditRow>,
    pub survival: SurvivalReport,
}

fn stage<T>(
    manifest: &mut RunManifest,
    manifest_path: &Path,
    name: &str,
    f: impl FnOnce() -> Result<(T, Vec<String>)>,
) -> Result<T> {
    let started = Instant::now();
    match f() {
        Ok((value, artifacts)) => {
            manifest.stages.push(StageRecord {
                stage: name.to_owned(),
                seconds: started.elapsed().as_secs_f64(),
                artifacts,
            });
            Ok(value)
        }
        Err(e) => {
            manifest.failed_stage = Some(name.to_owned());
            let _ = manifest.write(manifest_path);
            Err(Error::Stage { stage: name.to_owned(), source: Box::new(e) })
        }
    }
}

fn new_manifest(cfg: &ExperimentConfig, prep: &PreparedCorpus, hash: &str, seed: u64) -> RunManifest {
    RunManifest {
        config_hash: hash.to_owned(),
        corpus_key: prep.key.clone(),
        dataset: cfg.dataset.to_string(),
        seed,
        started_at: chrono::Utc::now().to_rfc3339(),
        settings: RecordedSettings {
            loss: cfg.loss.to_string(),
            alpha: cfg.training.alpha,
            beta: cfg.training.beta,
            warp_margin: WARP_MARGIN,
            max_warp_trials: cfg.training.max_warp_trials,
            init_scale: INIT_SCALE,
            n: cfg.n,
            folds: cfg.audit.folds,
            l2_strength: cfg.audit.l2_strength,
        },
        stages: Vec::new(),
        selected: BTreeMap::new(),
        failed_stage: None,
    }
}

/// The full protocol for every configured seed.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Vec<RunOutput>> {
    cfg.validate()?;
    let started = Instant::now();
    let prep = cmd_prepare(cfg).map_err(|e| Error::Stage { stage: "prepare".into(), source: Box::new(e) })?;
    let prepare_seconds = started.elapsed().as_secs_f64();
    let hash = cfg.config_hash(&prep.key);
    let mut outputs = Vec::new();
    for &seed in &cfg.seeds {
        let dir = seed_dir(cfg, seed);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let manifest_path = dir.join("manifest.json");
        let mut manifest = new_manifest(cfg, &prep, &hash, seed);
        manifest.stages.push(StageRecord {
            stage: "prepare".into(),
            seconds: prepare_seconds,
            artifacts: ["dataset.tsv", "attributes.tsv", "split.tsv"]
                .iter()
                .map(|f| prep.dir.join(f).display().to_string())
                .collect(),
        });
        let variants = stage(&mut manifest, &manifest_path, "train", || {
            train_variants(cfg, &prep, seed, &dir)
        })?;
        for v in &variants {
            manifest.selected.insert(v.variant.clone(), v.selected.clone());
        }
        let metrics = stage(&mut manifest, &manifest_path, "evaluate", || {
            Ok((evaluate_stage(cfg, &prep, &hash, &dir)?, vec!["metrics.tsv".into()]))
        })?;
        let audit = stage(&mut manifest, &manifest_path, "audit", || {
            Ok((audit_stage(cfg, &prep, &hash, seed, &dir)?, vec!["audit.tsv".into()]))
        })?;
        let survival = stage(&mut manifest, &manifest_path, "report", || {
            Ok((report_stage(cfg, &dir)?, vec!["survival.tsv".into(), "survival.txt".into()]))
        })?;
        manifest.write(&manifest_path)?;
        outputs.push(RunOutput { seed, dir, manifest, variants, metrics, audit, survival });
    }
    Ok(outputs)
}

/// Re-evaluates existing lists for every seed.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<Vec<Vec<MetricRow>>> {
    let prep = cmd_prepare(cfg)?;
    let hash = cfg.config_hash(&prep.key);
    cfg.seeds
        .iter()
        .map(|&s| evaluate_stage(cfg, &prep, &hash, &seed_dir(cfg, s)))
        .collect()
}

/// Re-runs the attribute audits on existing lists for every seed.
pub fn cmd_audit(cfg: &ExperimentConfig) -> Result<Vec<Vec<AuditRow>>> {
    let prep = cmd_prepare(cfg)?;
    let hash = cfg.config_hash(&prep.key);
    cfg.seeds
        .iter()
        .map(|&s| audit_stage(cfg, &prep, &hash, s, &seed_dir(cfg, s)))
        .collect()
}

/// Rebuilds the survival tables from existing reports for every seed.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<Vec<SurvivalReport>> {
    cfg.seeds
        .iter()
        .map(|&s| report_stage(cfg, &seed_dir(cfg, s)))
        .collect()
}
