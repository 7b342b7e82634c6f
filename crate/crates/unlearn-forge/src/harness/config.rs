//! Experiment configuration: one JSON document pinning every seed, size,
//! and hyperparameter a run needs, so manifests can embed it and a replay
//! can rebuild the run from nothing else.
//!
//! Two presets cover the common cases. [`ExperimentConfig::desk`] is the
//! full desk-scale experiment (each training run takes minutes);
//! [`ExperimentConfig::smoke`] is a seconds-scale miniature for tests and
//! dry runs. Everything else is reachable by editing the JSON or through
//! dotted-key overrides (`train.steps=2000`, `bundle.ood_sets.0.2=50`);
//! overrides must name keys that already exist, and the typed decode
//! rejects unknown fields and wrong types afterwards.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{BundlePlan, CanaryParams, CorpusParams, Vocab};
use crate::error::{Error, Result};
use crate::model::ModelConfig;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Minibatch Adam settings for reference and subject training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Checkpoint cadence in steps; `None` means every 10% of `steps`.
    pub checkpoint_every: Option<usize>,
}

/// Gradient-ascent settings shared by every unlearning run the harness
/// starts. The per-run batch order seed is derived from the global seed and
/// the forget set name, never stored here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnlearnSettings {
    pub batch_size: usize,
    pub lr: f64,
    pub max_passes: usize,
    /// Mean generalized exposure (bits) at which a run may stop early;
    /// `None` runs every pass to completion.
    pub early_stop_threshold: Option<f64>,
}

/// Knobs of the measurement side; everything else about the metrics is
/// fixed by their definitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSettings {
    /// k for similar-example mining and per-example R_x selection.
    pub reference_neighbors: usize,
    /// Two-sided Clopper-Pearson confidence level.
    pub cp_confidence: f64,
    /// Mean-GE thresholds the perplexity-distribution analysis conditions
    /// on (bits).
    pub ge_thresholds: Vec<f64>,
    pub histogram_bins: usize,
    /// Score BLEU on only the first n test pairs; `None` scores the whole
    /// test split.
    pub bleu_subsample: Option<usize>,
    /// Also write per-example exposure curves during trade-off sweeps.
    pub per_example_curves: bool,
}

/// The whole experiment, seeds included. `corpus_seed` fixes what reference
/// models share (pair splits, the R_InD/auxiliary cut); `seed` fixes what
/// varies per experiment (canary payloads, forget-set selection, unlearning
/// batch orders).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub corpus_seed: u64,
    pub output_dir: PathBuf,
    pub bundle: BundlePlan,
    pub model: ModelConfig,
    pub train: TrainSettings,
    /// Training seed per reference model (init and stream order).
    pub reference_seeds: Vec<u64>,
    pub subject_seed: u64,
    pub unlearn: UnlearnSettings,
    /// Gentler plan for the relative-vs-generalized comparison, which wants
    /// many small steps rather than a fast collapse.
    pub rel_vs_gen_unlearn: UnlearnSettings,
    pub metrics: MetricSettings,
}

impl ExperimentConfig {
    /// The full desk-scale preset: frequency ratios 1:10:100 as in the
    /// large-scale protocol, with set sizes cut to 64 and reference pools
    /// to 1000/500 so every stage finishes on a laptop.
    pub fn desk(seed: u64, output_dir: impl Into<PathBuf>) -> ExperimentConfig {
        ExperimentConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed,
            corpus_seed: 11,
            output_dir: output_dir.into(),
            bundle: BundlePlan::default(),
            model: ModelConfig {
                context_window: 10,
                embed_dim: 12,
                hidden_dims: vec![128],
                vocab_size: 69,
                pad_token: 4,
            },
            train: TrainSettings { steps: 16_000, batch_size: 32, lr: 5e-3, checkpoint_every: None },
            reference_seeds: vec![101, 102, 103],
            subject_seed: 7001,
            unlearn: UnlearnSettings {
                batch_size: 16,
                lr: 3e-4,
                max_passes: 4,
                early_stop_threshold: None,
            },
            rel_vs_gen_unlearn: UnlearnSettings {
                batch_size: 8,
                lr: 1.5e-4,
                max_passes: 3,
                early_stop_threshold: None,
            },
            metrics: MetricSettings {
                reference_neighbors: 10,
                cp_confidence: 0.95,
                ge_thresholds: vec![0.5, 2.0],
                histogram_bins: 30,
                bleu_subsample: None,
                per_example_curves: false,
            },
        }
    }

    /// A miniature preset that keeps every structural property of the desk
    /// run (three frequencies, both set kinds, nonempty pools) but trains in
    /// seconds. Used by tests and good for a first look at the pipeline.
    pub fn smoke(seed: u64, output_dir: impl Into<PathBuf>) -> ExperimentConfig {
        let freqs = [("x1", 1u32), ("x10", 10), ("x100", 100)];
        ExperimentConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed,
            corpus_seed: 11,
            output_dir: output_dir.into(),
            bundle: BundlePlan {
                corpus: CorpusParams {
                    n_train: 300,
                    n_validation: 120,
                    n_test: 80,
                    len_range: [3, 4],
                    context_budget: 8,
                },
                canary: CanaryParams { payload_len: 6, alphabet_size: 20, unique: true },
                ood_sets: freqs.iter().map(|(s, f)| (format!("ood_{s}"), 6, *f)).collect(),
                ind_sets: freqs.iter().map(|(s, f)| (format!("ind_{s}"), 6, *f)).collect(),
                r_ood_size: 40,
                r_ind_size: 30,
            },
            model: ModelConfig {
                context_window: 8,
                embed_dim: 6,
                hidden_dims: vec![32],
                vocab_size: 69,
                pad_token: 4,
            },
            train: TrainSettings { steps: 400, batch_size: 16, lr: 5e-3, checkpoint_every: None },
            reference_seeds: vec![11, 12],
            subject_seed: 7,
            unlearn: UnlearnSettings {
                batch_size: 3,
                lr: 1e-3,
                max_passes: 2,
                early_stop_threshold: None,
            },
            rel_vs_gen_unlearn: UnlearnSettings {
                batch_size: 2,
                lr: 5e-4,
                max_passes: 2,
                early_stop_threshold: None,
            },
            metrics: MetricSettings {
                reference_neighbors: 3,
                cp_confidence: 0.95,
                ge_thresholds: vec![0.5, 2.0],
                histogram_bins: 10,
                bleu_subsample: None,
                per_example_curves: false,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::config(format!(
                "config schema_version {} unsupported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.bundle.corpus.validate()?;
        self.model.validate()?;
        let vocab = Vocab::with_base(64)?;
        if self.model.vocab_size != vocab.len() {
            return Err(Error::config(format!(
                "model.vocab_size {} does not match the corpus vocabulary size {}",
                self.model.vocab_size,
                vocab.len()
            )));
        }
        if self.model.pad_token != vocab.pad {
            return Err(Error::config(format!(
                "model.pad_token {} does not match the vocabulary PAD id {}",
                self.model.pad_token, vocab.pad
            )));
        }
        if self.model.context_window < self.bundle.corpus.context_budget {
            return Err(Error::config(format!(
                "model.context_window {} is below bundle.corpus.context_budget {}",
                self.model.context_window, self.bundle.corpus.context_budget
            )));
        }
        if self.train.steps == 0 || self.train.batch_size == 0 {
            return Err(Error::config("train.steps and train.batch_size must be at least 1"));
        }
        if !(self.train.lr.is_finite() && self.train.lr > 0.0) {
            return Err(Error::config(format!("train.lr {} is not finite and positive", self.train.lr)));
        }
        if self.reference_seeds.is_empty() {
            return Err(Error::config("reference_seeds must hold at least one seed"));
        }
        let mut seen = std::collections::HashSet::new();
        for &s in &self.reference_seeds {
            if !seen.insert(s) {
                return Err(Error::config(format!("reference seed {s} appears twice")));
            }
        }
        for (name, u) in [("unlearn", &self.unlearn), ("rel_vs_gen_unlearn", &self.rel_vs_gen_unlearn)] {
            if u.batch_size == 0 || u.max_passes == 0 {
                return Err(Error::config(format!(
                    "{name}.batch_size and {name}.max_passes must be at least 1"
                )));
            }
            if !(u.lr.is_finite() && u.lr >= 0.0) {
                return Err(Error::config(format!("{name}.lr {} is not finite and >= 0", u.lr)));
            }
            if let Some(t) = u.early_stop_threshold {
                if !t.is_finite() {
                    return Err(Error::config(format!("{name}.early_stop_threshold is not finite")));
                }
            }
        }
        let m = &self.metrics;
        if m.reference_neighbors == 0 {
            return Err(Error::config("metrics.reference_neighbors must be at least 1"));
        }
        if !(m.cp_confidence > 0.0 && m.cp_confidence < 1.0) {
            return Err(Error::config(format!(
                "metrics.cp_confidence {} outside (0, 1)",
                m.cp_confidence
            )));
        }
        for &t in &m.ge_thresholds {
            if !t.is_finite() {
                return Err(Error::config("metrics.ge_thresholds must all be finite"));
            }
        }
        if m.histogram_bins == 0 {
            return Err(Error::config("metrics.histogram_bins must be at least 1"));
        }
        if m.bleu_subsample == Some(0) {
            return Err(Error::config("metrics.bleu_subsample must be at least 1 when set"));
        }
        Ok(())
    }

    /// Decode from a JSON document and validate.
    pub fn from_value(doc: serde_json::Value) -> Result<ExperimentConfig> {
        let config: ExperimentConfig = serde_json::from_value(doc)?;
        config.validate()?;
        Ok(config)
    }

    /// Read a config file and apply dotted-key overrides in order.
    pub fn load(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut doc: serde_json::Value = serde_json::from_str(&text)?;
        for (key, raw) in overrides {
            apply_override(&mut doc, key, raw)?;
        }
        ExperimentConfig::from_value(doc)
    }

    pub fn to_pretty_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_pretty_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Splits a `key=value` argument at the first `=`.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    match arg.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
        _ => Err(Error::config(format!("override {arg:?} is not of the form key=value"))),
    }
}

/// Sets one dotted-key override on the JSON form of a config. Path segments
/// index objects by field name and arrays by number; the addressed slot
/// must already exist, so typos surface as unknown-key errors instead of
/// silently growing the document. Values parse as JSON first and fall back
/// to bare strings.
pub fn apply_override(doc: &mut serde_json::Value, key: &str, raw: &str) -> Result<()> {
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cur = doc;
    let mut segments = key.split('.').peekable();
    while let Some(seg) = segments.next() {
        let slot = match cur {
            serde_json::Value::Object(map) => map.get_mut(seg).ok_or_else(|| {
                Error::config(format!("unknown config key {key:?} (no field {seg:?})"))
            })?,
            serde_json::Value::Array(items) => {
                let idx: usize = seg.parse().map_err(|_| {
                    Error::config(format!("config key {key:?}: {seg:?} is not an array index"))
                })?;
                let len = items.len();
                items.get_mut(idx).ok_or_else(|| {
                    Error::config(format!(
                        "config key {key:?}: index {idx} out of range for {len} elements"
                    ))
                })?
            }
            _ => {
                return Err(Error::config(format!(
                    "config key {key:?} descends into a scalar at {seg:?}"
                )))
            }
        };
        if segments.peek().is_none() {
            *slot = parsed;
            return Ok(());
        }
        cur = slot;
    }
    Err(Error::config("override key is empty"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for config in [ExperimentConfig::desk(0, "runs/desk"), ExperimentConfig::smoke(0, "runs/smoke")] {
            config.validate().unwrap();
            let text = config.to_pretty_json().unwrap();
            let back = ExperimentConfig::from_value(serde_json::from_str(&text).unwrap()).unwrap();
            assert_eq!(back, config);
            // Parse -> serialize -> parse is identity on the text level too.
            assert_eq!(back.to_pretty_json().unwrap(), text);
        }
    }

    #[test]
    fn overrides_reach_nested_and_indexed_fields() {
        let config = ExperimentConfig::smoke(3, "runs/s");
        let mut doc = serde_json::to_value(&config).unwrap();
        apply_override(&mut doc, "train.steps", "123").unwrap();
        apply_override(&mut doc, "bundle.ood_sets.1.2", "25").unwrap();
        apply_override(&mut doc, "bundle.ood_sets.0.0", "ood_alpha").unwrap();
        apply_override(&mut doc, "metrics.bleu_subsample", "40").unwrap();
        apply_override(&mut doc, "unlearn.early_stop_threshold", "null").unwrap();
        let back = ExperimentConfig::from_value(doc).unwrap();
        assert_eq!(back.train.steps, 123);
        assert_eq!(back.bundle.ood_sets[1].2, 25);
        assert_eq!(back.bundle.ood_sets[0].0, "ood_alpha");
        assert_eq!(back.metrics.bleu_subsample, Some(40));
        assert_eq!(back.unlearn.early_stop_threshold, None);
    }

    #[test]
    fn overrides_reject_unknown_keys_and_bad_types() {
        let config = ExperimentConfig::smoke(3, "runs/s");
        let mut doc = serde_json::to_value(&config).unwrap();
        assert!(apply_override(&mut doc, "train.stepz", "5").is_err());
        assert!(apply_override(&mut doc, "trian.steps", "5").is_err());
        assert!(apply_override(&mut doc, "bundle.ood_sets.9.0", "x").is_err());
        assert!(apply_override(&mut doc, "seed.nested", "5").is_err());
        // A type mismatch survives the set but fails the typed decode.
        apply_override(&mut doc, "train.steps", "\"many\"").unwrap();
        assert!(ExperimentConfig::from_value(doc).is_err());
    }

    #[test]
    fn validation_rejects_inconsistent_configs() {
        let mut bad_vocab = ExperimentConfig::smoke(0, "r");
        bad_vocab.model.vocab_size = 70;
        assert!(bad_vocab.validate().is_err());

        let mut bad_window = ExperimentConfig::smoke(0, "r");
        bad_window.model.context_window = 4;
        assert!(bad_window.validate().is_err());

        let mut dup_seed = ExperimentConfig::smoke(0, "r");
        dup_seed.reference_seeds = vec![5, 5];
        assert!(dup_seed.validate().is_err());

        let mut bad_version = ExperimentConfig::smoke(0, "r");
        bad_version.schema_version = 9;
        assert!(bad_version.validate().is_err());

        let mut bad_conf = ExperimentConfig::smoke(0, "r");
        bad_conf.metrics.cp_confidence = 1.0;
        assert!(bad_conf.validate().is_err());
    }

    #[test]
    fn parse_override_splits_on_first_equals() {
        assert_eq!(parse_override("a.b=c=d").unwrap(), ("a.b".into(), "c=d".into()));
        assert!(parse_override("no_equals").is_err());
        assert!(parse_override("=5").is_err());
    }
}
