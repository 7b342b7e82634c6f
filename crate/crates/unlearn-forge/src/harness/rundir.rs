//! Run directories and manifests. Every experiment lives in one directory:
//! the config that produced it, a manifest listing each stage executed and
//! the SHA-256 of every artifact written, the checkpoints, and the CSV
//! reports. The manifest is the replay contract: running the same stages
//! from the same config must reproduce every hashed artifact byte for byte.
//!
//! `config.json`, `manifest.json`, and `run.log` are deliberately absent
//! from the artifact map. The config embeds the output directory, which a
//! replay necessarily changes, and the log carries wall-clock noise; both
//! would make byte-identity impossible for reasons that say nothing about
//! the experiment.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// One executed pipeline stage, as recorded in the manifest. The serialized
/// form uses an `op` tag so manifests read naturally:
/// `{"op": "tradeoff", "set": "ood_x100"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Stage {
    GenCorpus,
    GenCanaries { count: usize },
    Train,
    Unlearn { set: String },
    Exposure { set: String, step: Option<u64> },
    Tradeoff { set: String },
    FreqCompare { rotation: Option<usize> },
    PerplexityDist { set: String },
    MemDiff,
    Similar { set: String },
    RelVsGen { set: String },
    Bleu { checkpoint: String },
}

/// Manifest of a run: the config, the ordered stage list, and one content
/// hash per artifact (path relative to the run root).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub stages: Vec<Stage>,
    pub artifacts: BTreeMap<String, String>,
}

/// Handle on a run directory. All artifact paths are relative to `root`;
/// writes go through [`RunDir::write_artifact`] or end with a
/// [`RunDir::note_artifact`] call so the manifest stays complete.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    pub manifest: RunManifest,
}

impl RunDir {
    /// Creates (or resumes) the run directory named by `config.output_dir`.
    /// Resuming requires the stored config to match the given one up to the
    /// output directory itself; anything else means the directory belongs
    /// to a different experiment and touching it would corrupt both.
    pub fn create(config: &ExperimentConfig) -> Result<RunDir> {
        config.validate()?;
        let root = config.output_dir.clone();
        for sub in ["checkpoints", "reports", "histograms"] {
            let dir = root.join(sub);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        let manifest_path = root.join("manifest.json");
        let manifest = if manifest_path.exists() {
            let mut stored = read_manifest(&manifest_path)?;
            if neutral(&stored.config) != neutral(config) {
                return Err(Error::config(format!(
                    "{} already holds a different experiment; use a fresh output directory",
                    root.display()
                )));
            }
            stored.config = config.clone();
            stored
        } else {
            RunManifest {
                schema_version: MANIFEST_SCHEMA_VERSION,
                config: config.clone(),
                stages: Vec::new(),
                artifacts: BTreeMap::new(),
            }
        };
        let rd = RunDir { root, manifest };
        config.save(rd.abs("config.json"))?;
        rd.save_manifest()?;
        Ok(rd)
    }

    /// Opens an existing run directory without writing anything.
    pub fn open(root: impl Into<PathBuf>) -> Result<RunDir> {
        let root = root.into();
        let manifest = read_manifest(&root.join("manifest.json"))?;
        Ok(RunDir { root, manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn abs(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Writes a text artifact and records its hash.
    pub fn write_artifact(&mut self, rel: &str, text: &str) -> Result<()> {
        let path = self.abs(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.note_artifact(rel)
    }

    /// Hashes an already-written file into the manifest. Use after code
    /// that writes through its own serializer (checkpoints, traces).
    pub fn note_artifact(&mut self, rel: &str) -> Result<()> {
        let digest = sha256_file(&self.abs(rel))?;
        self.manifest.artifacts.insert(rel.to_string(), digest);
        self.save_manifest()
    }

    /// Hashes every file under a directory, recursively, in sorted order.
    pub fn note_tree(&mut self, rel: &str) -> Result<()> {
        let mut files = Vec::new();
        collect_files(&self.abs(rel), &mut files)?;
        files.sort();
        let root = self.root.clone();
        for file in files {
            let rel_path = file
                .strip_prefix(&root)
                .map_err(|_| Error::config(format!("{} escapes the run root", file.display())))?;
            let rel_str = rel_path
                .to_str()
                .ok_or_else(|| Error::config(format!("non-UTF-8 path {}", rel_path.display())))?
                .to_string();
            let digest = sha256_file(&file)?;
            self.manifest.artifacts.insert(rel_str, digest);
        }
        self.save_manifest()
    }

    /// Appends a completed stage to the manifest (once; reruns of an
    /// already-recorded stage keep a single entry).
    pub fn record_stage(&mut self, stage: Stage) -> Result<()> {
        if !self.manifest.stages.contains(&stage) {
            self.manifest.stages.push(stage);
        }
        self.save_manifest()
    }

    pub fn save_manifest(&self) -> Result<()> {
        let path = self.abs("manifest.json");
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Appends one line to `run.log`.
    pub fn append_log(&self, line: &str) -> Result<()> {
        let path = self.abs("run.log");
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        writeln!(file, "{line}").map_err(|e| Error::io(&path, e))
    }
}

/// Config with the output directory blanked, for same-experiment checks.
fn neutral(config: &ExperimentConfig) -> ExperimentConfig {
    let mut c = config.clone();
    c.output_dir = PathBuf::new();
    c
}

pub(crate) fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::config(format!(
            "manifest schema_version {} unsupported (expected {MANIFEST_SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    Ok(manifest)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

pub(crate) fn sha256_file(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut s = String::with_capacity(64);
    for b in Sha256::digest(&bytes) {
        s.push_str(&format!("{b:02x}"));
    }
    Ok(s)
}
