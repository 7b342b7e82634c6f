//! Corpus persistence.
//!
//! Example files are TSV, one example per line:
//! `id<TAB>role<TAB>source_len<TAB>space-separated token ids`, UTF-8 with LF
//! endings. Vocab files hold one token string per line, line number = id.
//! A bundle directory is `vocab.txt` + `examples.tsv` + `bundle.json` (seeds,
//! plan, permutation, split and set memberships by example id).

use std::fs;
use std::path::Path;

use crate::corpus::bundle::{BundlePlan, CorpusBundle, ForgetSetSpec};
use crate::corpus::example::{Example, Role};
use crate::corpus::vocab::Vocab;
use crate::error::{Error, Result};

pub fn write_vocab(path: &Path, vocab: &Vocab) -> Result<()> {
    let mut out = String::new();
    for t in vocab.tokens() {
        out.push_str(t);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_vocab(path: &Path) -> Result<Vocab> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Vocab::from_tokens(text.lines().map(str::to_owned).collect())
}

pub fn write_examples(path: &Path, examples: &[Example]) -> Result<()> {
    let mut out = String::new();
    for e in examples {
        let ids: Vec<String> = e.tokens.iter().map(u32::to_string).collect();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            e.id,
            e.role.as_str(),
            e.source_len,
            ids.join(" ")
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_examples(path: &Path, vocab: &Vocab) -> Result<Vec<Example>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let bad = || Error::Corpus(format!("{}:{}: malformed example line", path.display(), lineno + 1));
        let id: u64 = fields.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let role = Role::parse(fields.next().ok_or_else(bad)?)?;
        let source_len: u32 = fields.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let tokens = fields
            .next()
            .ok_or_else(bad)?
            .split(' ')
            .map(|s| s.parse::<u32>().map_err(|_| bad()))
            .collect::<Result<Vec<u32>>>()?;
        if fields.next().is_some() {
            return Err(bad());
        }
        out.push(Example::new(id, role, tokens, source_len, vocab)?);
    }
    Ok(out)
}

/// Mirror of the bundle's id-level structure for `bundle.json`.
#[derive(serde::Serialize, serde::Deserialize)]
struct BundleMeta {
    corpus_seed: u64,
    experiment_seed: u64,
    plan: BundlePlan,
    permutation: Vec<u32>,
    train: Vec<u64>,
    validation: Vec<u64>,
    test: Vec<u64>,
    forget_sets: Vec<ForgetSetSpec>,
    r_ood: Vec<u64>,
    r_ind: Vec<u64>,
    aux: Vec<u64>,
}

pub fn save_bundle(dir: &Path, bundle: &CorpusBundle) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_vocab(&dir.join("vocab.txt"), &bundle.vocab)?;
    write_examples(&dir.join("examples.tsv"), &bundle.examples)?;
    let meta = BundleMeta {
        corpus_seed: bundle.corpus_seed,
        experiment_seed: bundle.experiment_seed,
        plan: bundle.plan.clone(),
        permutation: bundle.permutation.clone(),
        train: bundle.train.clone(),
        validation: bundle.validation.clone(),
        test: bundle.test.clone(),
        forget_sets: bundle.forget_sets.clone(),
        r_ood: bundle.r_ood.clone(),
        r_ind: bundle.r_ind.clone(),
        aux: bundle.aux.clone(),
    };
    let path = dir.join("bundle.json");
    let json = serde_json::to_string_pretty(&meta)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn load_bundle(dir: &Path) -> Result<CorpusBundle> {
    let vocab = read_vocab(&dir.join("vocab.txt"))?;
    let examples = read_examples(&dir.join("examples.tsv"), &vocab)?;
    let path = dir.join("bundle.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: BundleMeta = serde_json::from_str(&text)?;
    let bundle = CorpusBundle {
        vocab,
        plan: meta.plan,
        corpus_seed: meta.corpus_seed,
        experiment_seed: meta.experiment_seed,
        permutation: meta.permutation,
        examples,
        train: meta.train,
        validation: meta.validation,
        test: meta.test,
        forget_sets: meta.forget_sets,
        r_ood: meta.r_ood,
        r_ind: meta.r_ind,
        aux: meta.aux,
    };
    bundle.validate()?;
    Ok(bundle)
}
