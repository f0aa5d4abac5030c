use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::ClassifierConfig;
use crate::error::{Error, Result};
use crate::ranker::{lattice, Loss, TrainConfig, EPOCHS, FACTORS, LEARNING_RATES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Ml100k,
    Ml1m,
    Lastfm,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Ml100k => "ml100k",
            DatasetKind::Ml1m => "ml1m",
            DatasetKind::Lastfm => "lastfm",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml100k" => Ok(DatasetKind::Ml100k),
            "ml1m" => Ok(DatasetKind::Ml1m),
            "lastfm" => Ok(DatasetKind::Lastfm),
            other => Err(Error::Config(format!("unknown dataset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    /// Ratings at or above this value count as relevant.
    pub cutoff: u32,
    pub min_user_interactions: usize,
    pub min_item_interactions: Option<usize>,
    pub test_fraction: f64,
    pub validation_fraction: f64,
    /// Lookup file per derived attribute (`state`, `continent`,
    /// `eu_vs_rest`), replacing the bundled table.
    pub lookups: BTreeMap<String, PathBuf>,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        CorpusSettings {
            cutoff: 3,
            min_user_interactions: 20,
            min_item_interactions: None,
            test_fraction: 0.1,
            validation_fraction: 0.1,
            lookups: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    pub learning_rates: Vec<f64>,
    pub epochs: Vec<usize>,
    pub factors: Vec<usize>,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings {
            learning_rates: LEARNING_RATES.to_vec(),
            epochs: EPOCHS.to_vec(),
            factors: FACTORS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    pub alpha: f64,
    pub beta: f64,
    pub max_warp_trials: usize,
    pub batch_size: usize,
    /// Train the BPR matrix-factorization baseline alongside the FM.
    pub bprmf: bool,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        let base = TrainConfig::default();
        TrainingSettings {
            alpha: base.alpha,
            beta: base.beta,
            max_warp_trials: base.max_warp_trials,
            batch_size: base.batch_size,
            bprmf: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSettings {
    pub folds: usize,
    pub l2_strength: f64,
    pub max_iterations: usize,
    pub convergence_tol: f64,
}

impl Default for AuditSettings {
    fn default() -> Self {
        let c = ClassifierConfig::default();
        AuditSettings {
            folds: 5,
            l2_strength: c.l2_strength,
            max_iterations: c.max_iterations,
            convergence_tol: c.convergence_tol,
        }
    }
}

/// One experiment: a dataset, the attributes to test one at a time (the
/// attribute-free variant always runs), and every training, evaluation and
/// audit setting. Read from TOML; relative input paths resolve against the
/// config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    /// Ratings file (`u.data`, `ratings.dat`) or listening log.
    pub data_path: PathBuf,
    /// Profile file of a listening log.
    #[serde(default)]
    pub profile_path: Option<PathBuf>,
    #[serde(default)]
    pub attributes: Vec<String>,
    #[serde(default = "default_loss")]
    pub loss: Loss,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub corpus: CorpusSettings,
    #[serde(default)]
    pub grid: GridSettings,
    #[serde(default)]
    pub training: TrainingSettings,
    #[serde(default)]
    pub audit: AuditSettings,
}

fn default_loss() -> Loss {
    Loss::Warp
}

fn default_n() -> usize {
    50
}

fn default_seeds() -> Vec<u64> {
    vec![42]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Name of the attribute-free variant.
pub const NO_ATTRIBUTE: &str = "none";

impl ExperimentConfig {
    pub fn new(dataset: DatasetKind, data_path: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            dataset,
            data_path: data_path.into(),
            profile_path: None,
            attributes: Vec::new(),
            loss: default_loss(),
            n: default_n(),
            seeds: default_seeds(),
            output_dir: default_output_dir(),
            corpus: CorpusSettings::default(),
            grid: GridSettings::default(),
            training: TrainingSettings::default(),
            audit: AuditSettings::default(),
        }
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut cfg.data_path);
        if let Some(p) = cfg.profile_path.as_mut() {
            resolve(p);
        }
        for p in cfg.corpus.lookups.values_mut() {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("list length n must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for a in &self.attributes {
            if a == NO_ATTRIBUTE || a.is_empty() || a.contains(['\t', '/', '\\']) {
                return Err(Error::Config(format!("invalid attribute name `{a}`")));
            }
            if !seen.insert(a) {
                return Err(Error::Config(format!("attribute `{a}` listed twice")));
            }
        }
        let g = &self.grid;
        if g.learning_rates.is_empty() || g.epochs.is_empty() || g.factors.is_empty() {
            return Err(Error::Config("every grid axis needs at least one value".into()));
        }
        if self.audit.folds < 2 {
            return Err(Error::Config("audit needs at least two folds".into()));
        }
        let c = &self.corpus;
        if !(c.test_fraction > 0.0 && c.validation_fraction > 0.0 && c.test_fraction + c.validation_fraction < 1.0) {
            return Err(Error::Config("test and validation fractions must be positive and sum below 1".into()));
        }
        if self.dataset == DatasetKind::Lastfm && self.profile_path.is_none() {
            return Err(Error::Config("lastfm needs profile_path".into()));
        }
        self.base_train_config(self.seeds[0]).validate()?;
        self.classifier_config(self.seeds[0]).validate()
    }

    /// The attribute-free variant followed by the configured attributes.
    pub fn variants(&self) -> Vec<String> {
        std::iter::once(NO_ATTRIBUTE.to_string())
            .chain(self.attributes.iter().cloned())
            .collect()
    }

    pub fn base_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            loss: self.loss,
            alpha: self.training.alpha,
            beta: self.training.beta,
            seed,
            max_warp_trials: self.training.max_warp_trials,
            batch_size: self.training.batch_size,
            ..TrainConfig::default()
        }
    }

    pub fn grid_for(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        lattice(base, &self.grid.learning_rates, &self.grid.epochs, &self.grid.factors)
    }

    pub fn classifier_config(&self, seed: u64) -> ClassifierConfig {
        ClassifierConfig {
            l2_strength: self.audit.l2_strength,
            max_iterations: self.audit.max_iterations,
            convergence_tol: self.audit.convergence_tol,
            seed,
        }
    }

    /// Digest of every setting that can change a reported number. Input
    /// files enter through `corpus_key` (a digest of their content), so
    /// relocating the data or the output directory keeps the hash.
    pub fn config_hash(&self, corpus_key: &str) -> String {
        let mut view = self.clone();
        view.data_path = PathBuf::new();
        view.profile_path = None;
        view.output_dir = PathBuf::new();
        view.corpus.lookups.clear();
        let canonical = serde_json::to_string(&view).unwrap_or_default();
        let mut h = Sha256::new();
        h.update(canonical.as_bytes());
        h.update(corpus_key.as_bytes());
        hex::encode(&h.finalize()[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml_gets_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "dataset = \"ml100k\"\ndata_path = \"ml-100k/u.data\"\nattributes = [\"gender\"]\n",
            Path::new("/data"),
        )
        .unwrap();
        assert_eq!(cfg.data_path, Path::new("/data/ml-100k/u.data"));
        assert_eq!(cfg.n, 50);
        assert_eq!(cfg.loss, Loss::Warp);
        assert_eq!(cfg.variants(), vec!["none", "gender"]);
        assert_eq!(cfg.grid_for(&cfg.base_train_config(42)).len(), 125);
        assert_eq!(cfg.audit.folds, 5);
        assert_eq!(cfg.corpus.cutoff, 3);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = Path::new(".");
        assert!(ExperimentConfig::from_toml("dataset = \"netflix\"\ndata_path = \"x\"\n", base).is_err());
        assert!(ExperimentConfig::from_toml("dataset = \"ml100k\"\ndata_path = \"x\"\nattributes = [\"none\"]\n", base).is_err());
        assert!(ExperimentConfig::from_toml("dataset = \"ml100k\"\ndata_path = \"x\"\nn = 0\n", base).is_err());
        assert!(ExperimentConfig::from_toml("dataset = \"lastfm\"\ndata_path = \"x\"\n", base).is_err());
        assert!(ExperimentConfig::from_toml("dataset = \"ml100k\"\ndata_path = \"x\"\nbogus = 1\n", base).is_err());
    }

    #[test]
    fn hash_ignores_locations() {
        let mut a = ExperimentConfig::new(DatasetKind::Ml100k, "/a/u.data");
        let mut b = ExperimentConfig::new(DatasetKind::Ml100k, "/b/u.data");
        a.output_dir = "/out1".into();
        b.output_dir = "/out2".into();
        assert_eq!(a.config_hash("k"), b.config_hash("k"));
        assert_ne!(a.config_hash("k"), a.config_hash("other"));
        b.n = 10;
        assert_ne!(a.config_hash("k"), b.config_hash("k"));
    }

    #[test]
    fn toml_roundtrip() {
        let mut cfg = ExperimentConfig::new(DatasetKind::Lastfm, "/x/log.tsv");
        cfg.profile_path = Some("/x/profile.tsv".into());
        cfg.attributes = vec!["gender".into(), "continent".into()];
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text, Path::new("/")).unwrap(), cfg);
    }
}
