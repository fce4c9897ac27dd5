//! The experiment configuration file and dataset loading.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::ManifoldConfig;
use crate::data::{
    gen_synthetic, load_cls_tsv, load_corpus, load_nli_tsv, load_sts_tsv, LabeledSentence,
    NliTriple, StsPair, SyntheticData, SyntheticSpec, Vocab, RESERVED,
};
use crate::error::{Error, Result};
use crate::eval::StsSet;
use crate::model::ModelConfig;
use crate::training::{TrainConfig, TrainingCorpus};

/// Contents of `--config c.json`; every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub manifold: ManifoldConfig,
    /// Number of corpus sentences the baselines are fit on.
    pub baseline_fit_size: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::Synthetic(SyntheticSpec::default()),
            manifold: ManifoldConfig::default(),
            baseline_fit_size: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic(SyntheticSpec),
    Files(DataFiles),
}

/// Dataset files; relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFiles {
    /// One training sentence per line.
    pub corpus: PathBuf,
    /// One token per line starting with the reserved tokens; built from the
    /// corpus when absent.
    #[serde(default)]
    pub vocab: Option<PathBuf>,
    pub validation: PathBuf,
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default)]
    pub nli: Option<PathBuf>,
    #[serde(default)]
    pub cls_train: Option<PathBuf>,
    #[serde(default)]
    pub cls_test: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let DataConfig::Files(files) = &mut cfg.data {
            let base = path.parent().unwrap_or_else(|| Path::new(""));
            files.resolve(base);
        }
        Ok(cfg)
    }

    /// Makes `--seed` govern all randomness: training and data generation.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        if let DataConfig::Synthetic(spec) = &mut self.data {
            spec.seed = seed;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if let DataConfig::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        Ok(())
    }
}

impl DataFiles {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.validation);
        for p in [
            &mut self.vocab,
            &mut self.test,
            &mut self.nli,
            &mut self.cls_train,
            &mut self.cls_test,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }
}

/// Everything a command needs from the data section.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub id: String,
    pub vocab: Vocab,
    pub corpus: Vec<String>,
    pub nli: Vec<NliTriple>,
    pub validation: Vec<StsPair>,
    pub test: Vec<StsPair>,
    pub cls_train: Vec<LabeledSentence>,
    pub cls_test: Vec<LabeledSentence>,
}

/// Most frequent corpus words first (ties alphabetical), capped at `capacity`.
fn vocab_from_corpus(corpus: &[String], capacity: usize) -> Vocab {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for s in corpus {
        for w in s.split_whitespace() {
            *counts.entry(w.to_lowercase()).or_default() += 1;
        }
    }
    let mut words: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(w, _)| !RESERVED.contains(&w.as_str()))
        .collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    words.truncate(capacity.saturating_sub(RESERVED.len()));
    Vocab::from_words(words.into_iter().map(|(w, _)| w))
}

impl Dataset {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let ds = match &cfg.data {
            DataConfig::Synthetic(spec) => Self::from_synthetic(&gen_synthetic(spec)?),
            DataConfig::Files(f) => {
                let corpus = load_corpus(&f.corpus)?;
                let vocab = match &f.vocab {
                    Some(p) => Vocab::load(p)?,
                    None => vocab_from_corpus(&corpus, cfg.model.vocab_size),
                };
                let opt_sts = |p: &Option<PathBuf>| p.as_deref().map(load_sts_tsv).transpose();
                let opt_cls = |p: &Option<PathBuf>| p.as_deref().map(load_cls_tsv).transpose();
                Self {
                    id: f
                        .corpus
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "corpus".into()),
                    vocab,
                    nli: f
                        .nli
                        .as_deref()
                        .map(load_nli_tsv)
                        .transpose()?
                        .unwrap_or_default(),
                    validation: load_sts_tsv(&f.validation)?,
                    test: opt_sts(&f.test)?.unwrap_or_default(),
                    cls_train: opt_cls(&f.cls_train)?.unwrap_or_default(),
                    cls_test: opt_cls(&f.cls_test)?.unwrap_or_default(),
                    corpus,
                }
            }
        };
        if ds.vocab.len() > cfg.model.vocab_size {
            return Err(Error::Config(format!(
                "dataset vocabulary has {} tokens but the model only {} (raise model.vocab_size)",
                ds.vocab.len(),
                cfg.model.vocab_size
            )));
        }
        Ok(ds)
    }

    pub fn from_synthetic(data: &SyntheticData) -> Self {
        Self {
            id: data.corpus_id(),
            vocab: data.vocab.clone(),
            corpus: data.corpus_texts(),
            nli: data.nli.clone(),
            validation: data.validation_sts(),
            test: data.test_sts(),
            cls_train: SyntheticData::labeled(&data.labeled_train),
            cls_test: SyntheticData::labeled(&data.labeled_test),
        }
    }

    pub fn training_corpus(&self, max_len: usize) -> TrainingCorpus {
        TrainingCorpus::new(self.id.clone(), &self.vocab, &self.corpus, max_len).with_nli(
            &self.vocab,
            &self.nli,
            max_len,
        )
    }

    /// The named STS sets that are present (`validation`, then `test`).
    pub fn sts_sets(&self, max_len: usize) -> Vec<StsSet> {
        let mut out = vec![StsSet::new(
            "validation",
            &self.validation,
            &self.vocab,
            max_len,
        )];
        if !self.test.is_empty() {
            out.push(StsSet::new("test", &self.test, &self.vocab, max_len));
        }
        out
    }

    pub fn sts_pairs(&self, name: &str) -> Result<&[StsPair]> {
        match name {
            "validation" => Ok(&self.validation),
            "test" if !self.test.is_empty() => Ok(&self.test),
            "test" => Err(Error::Config("the data section has no test set".into())),
            other => Err(Error::Usage(format!(
                "unknown dataset {other:?} (expected validation or test)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"modle": {}}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"train": {"lr": 1}}"#).is_err());
    }

    #[test]
    fn seed_reaches_training_and_data() {
        let cfg = ExperimentConfig::default().with_seed(9);
        assert_eq!(cfg.train.seed, 9);
        match cfg.data {
            DataConfig::Synthetic(spec) => assert_eq!(spec.seed, 9),
            DataConfig::Files(_) => unreachable!(),
        }
    }

    #[test]
    fn file_paths_resolve_against_the_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("corpus.txt"), "b a\na c c\n").unwrap();
        std::fs::write(dir.path().join("val.tsv"), "a\tb\t1\nc\ta\t0\n").unwrap();
        let cfg_path = dir.path().join("c.json");
        std::fs::write(
            &cfg_path,
            r#"{"data": {"files": {"corpus": "corpus.txt", "validation": "val.tsv"}}}"#,
        )
        .unwrap();
        let cfg = ExperimentConfig::load(&cfg_path).unwrap();
        let ds = Dataset::load(&cfg).unwrap();
        assert_eq!(ds.corpus.len(), 2);
        assert_eq!(ds.validation.len(), 2);
        // Frequency order: c (2), a (2), b (1); ties alphabetical.
        assert_eq!(&ds.vocab.tokens()[3..], ["a", "c", "b"]);
        assert!(ds.sts_pairs("test").is_err());
    }
}
