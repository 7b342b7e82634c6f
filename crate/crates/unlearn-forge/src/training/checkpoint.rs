//! Versioned on-disk container for model checkpoints.
//!
//! Layout, stable from format version 1 onward:
//!
//! ```text
//! bytes 0..8    magic "UFCHKPT1"
//! bytes 8..12   header length `n` as little-endian u32
//! bytes 12..12+n  header JSON (utf-8)
//! rest          raw little-endian f64 data for each array the header
//!               declares, concatenated in declaration order
//! ```
//!
//! The header carries the format version, model config, step counter,
//! provenance, optimizer hyperparameters, and the array declarations
//! (name + shape). Parameter arrays come first, in [`ModelParams::arrays`]
//! order; when the optimizer is Adam with allocated moments, the moment
//! trees follow under `adam.m.` / `adam.v.` name prefixes. Everything needed
//! to replay the producing run is inside the file, so checkpoints are
//! portable across implementations that honor this layout.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ModelParams};
use crate::training::optimizer::OptimizerState;

const MAGIC: &[u8; 8] = b"UFCHKPT1";
const FORMAT_VERSION: u32 = 1;

/// One replicated forget set in a training stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgetRef {
    pub name: String,
    pub frequency: u32,
}

/// Everything a replay needs besides the corpus bundle itself.
/// `corpus_fingerprint` covers T alone, so reference and subject checkpoints
/// from the same bundle share it; `effective_fingerprint` additionally folds
/// in the replicated forget sets, pinning the exact training multiset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub train_seed: u64,
    pub corpus_fingerprint: String,
    pub effective_fingerprint: String,
    pub forget_sets: Vec<ForgetRef>,
    pub batch_size: usize,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    pub step: u64,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct ArrayDecl {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    step: u64,
    provenance: Provenance,
    optimizer: OptimizerState,
    arrays: Vec<ArrayDecl>,
}

fn ckpt_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Checkpoint { path: path.to_path_buf(), msg: msg.into() }
}

fn write_array(w: &mut impl Write, data: &[f64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 8);
    for &x in data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_array(r: &mut impl Read, data: &mut [f64], path: &Path, name: &str) -> Result<()> {
    let mut buf = vec![0u8; data.len() * 8];
    r.read_exact(&mut buf)
        .map_err(|_| ckpt_err(path, format!("file truncated inside array {name}")))?;
    for (x, chunk) in data.iter_mut().zip(buf.chunks_exact(8)) {
        *x = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(())
}

impl Checkpoint {
    /// A scoring-ready model sharing nothing with the checkpoint.
    pub fn model(&self) -> Model {
        Model { config: self.config.clone(), params: self.params.clone() }
    }

    /// Hex digest identifying the weights: covers step, train seed, and every
    /// parameter array (name, shape, exact bits). Optimizer moments are
    /// excluded on purpose; two checkpoints with identical weights embed and
    /// score identically no matter how they got there.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"ckpt-fp-v1");
        h.update(self.step.to_le_bytes());
        h.update(self.provenance.train_seed.to_le_bytes());
        for (name, shape, data) in self.params.arrays() {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
            for d in &shape {
                h.update((*d as u64).to_le_bytes());
            }
            for &x in data {
                h.update(x.to_le_bytes());
            }
        }
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Declared arrays: parameters, then Adam moments when present.
    fn array_views(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = self.params.arrays();
        if let (Some(m), Some(v)) = (&self.optimizer.m, &self.optimizer.v) {
            for (name, shape, data) in m.arrays() {
                out.push((format!("adam.m.{name}"), shape, data));
            }
            for (name, shape, data) in v.arrays() {
                out.push((format!("adam.v.{name}"), shape, data));
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let views = self.array_views();
        let header = Header {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            step: self.step,
            provenance: self.provenance.clone(),
            optimizer: self.optimizer.clone(),
            arrays: views
                .iter()
                .map(|(name, shape, _)| ArrayDecl { name: name.clone(), shape: shape.clone() })
                .collect(),
        };
        let header_json = serde_json::to_vec(&header)?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        (|| {
            w.write_all(MAGIC)?;
            w.write_all(&(header_json.len() as u32).to_le_bytes())?;
            w.write_all(&header_json)?;
            for (_, _, data) in &views {
                write_array(&mut w, data)?;
            }
            w.flush()
        })()
        .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);

        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| ckpt_err(path, "file too short for magic"))?;
        if &magic != MAGIC {
            return Err(ckpt_err(path, "bad magic; not a checkpoint file"));
        }
        let mut len_bytes = [0u8; 4];
        r.read_exact(&mut len_bytes).map_err(|_| ckpt_err(path, "missing header length"))?;
        let header_len = u32::from_le_bytes(len_bytes) as usize;
        let mut header_json = vec![0u8; header_len];
        r.read_exact(&mut header_json).map_err(|_| ckpt_err(path, "file truncated inside header"))?;
        let header: Header = serde_json::from_slice(&header_json)
            .map_err(|e| ckpt_err(path, format!("header is not valid JSON: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(ckpt_err(
                path,
                format!("format version {} unsupported (expected {FORMAT_VERSION})", header.format_version),
            ));
        }
        header.config.validate()?;

        let mut params = ModelParams::init(&header.config, 0);
        params.for_each_mut(|xs| xs.fill(0.0));
        let mut optimizer = header.optimizer;
        let expects_moments = header.arrays.iter().any(|a| a.name.starts_with("adam.m."));
        if expects_moments {
            optimizer.m = Some(params.zeros_like());
            optimizer.v = Some(params.zeros_like());
        }

        let mut decls = header.arrays.iter();
        let mut fill = |tree: &mut ModelParams, prefix: &str, r: &mut BufReader<File>| -> Result<()> {
            for (name, shape, data) in tree.arrays_mut() {
                let decl = decls
                    .next()
                    .ok_or_else(|| ckpt_err(path, format!("header is missing array {prefix}{name}")))?;
                if decl.name != format!("{prefix}{name}") || decl.shape != shape {
                    return Err(ckpt_err(
                        path,
                        format!(
                            "array mismatch: expected {prefix}{name} {shape:?}, header declares {} {:?}",
                            decl.name, decl.shape
                        ),
                    ));
                }
                read_array(r, data, path, &decl.name)?;
            }
            Ok(())
        };
        fill(&mut params, "", &mut r)?;
        if expects_moments {
            let mut m = optimizer.m.take().unwrap();
            let mut v = optimizer.v.take().unwrap();
            fill(&mut m, "adam.m.", &mut r)?;
            fill(&mut v, "adam.v.", &mut r)?;
            optimizer.m = Some(m);
            optimizer.v = Some(v);
        }
        drop(fill);
        if decls.next().is_some() {
            return Err(ckpt_err(path, "header declares more arrays than the model has"));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
            return Err(ckpt_err(path, "trailing bytes after the last declared array"));
        }

        Ok(Checkpoint {
            config: header.config,
            params,
            optimizer,
            step: header.step,
            provenance: header.provenance,
        })
    }
}
