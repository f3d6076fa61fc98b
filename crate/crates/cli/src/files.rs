//! Input resolution, checksums, atomic writes and model bundles.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use kgebm::persist::check_vocab;
use kgebm::{StoredModel, Vocabulary};
use sha2::{Digest, Sha256};

use crate::manifest::RunManifest;

/// Relative inputs are looked up under the data directory when one is set.
pub fn resolve_input(data_dir: Option<&Path>, path: &Path) -> PathBuf {
    match data_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// File contents plus their checksum.
pub fn read_text(path: &Path) -> anyhow::Result<(String, String)> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let sum = sha256_hex(&bytes);
    let text = String::from_utf8(bytes).map_err(|_| kgebm::Error::Invalid(format!("{} is not UTF-8", path.display())))?;
    Ok((text, sum))
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let name = path
        .file_name()
        .with_context(|| format!("{} is not a file path", path.display()))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| -> std::io::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.with_context(|| format!("cannot write {}", path.display()))
}

/// Absolute form for manifests; falls back to the path as given.
pub fn absolute(path: &Path) -> PathBuf {
    fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf())
}

/// `<prefix>.kgeb`, `<prefix>.vocab` and `<prefix>.manifest.json`.
#[derive(Debug, Clone)]
pub struct ModelFiles {
    pub embeddings: PathBuf,
    pub vocab: PathBuf,
    pub manifest: PathBuf,
}

impl ModelFiles {
    /// Accepts either the bare prefix or the `.kgeb` path.
    pub fn new(prefix: &Path) -> Self {
        let text = prefix.to_string_lossy();
        let base = text.strip_suffix(".kgeb").unwrap_or(&text);
        Self {
            embeddings: PathBuf::from(format!("{base}.kgeb")),
            vocab: PathBuf::from(format!("{base}.vocab")),
            manifest: PathBuf::from(format!("{base}.manifest.json")),
        }
    }
}

pub struct LoadedModel {
    pub model: StoredModel,
    pub vocab: Vocabulary,
    pub manifest: Option<RunManifest>,
}

pub fn load_model(files: &ModelFiles) -> anyhow::Result<LoadedModel> {
    let bytes = fs::read(&files.embeddings).with_context(|| format!("cannot read {}", files.embeddings.display()))?;
    let model = StoredModel::read_from(bytes.as_slice()).with_context(|| format!("in {}", files.embeddings.display()))?;
    let (vocab_text, _) = read_text(&files.vocab)?;
    let vocab = Vocabulary::from_tsv(&vocab_text).with_context(|| format!("in {}", files.vocab.display()))?;
    check_vocab(&vocab, &model)?;
    let manifest = if files.manifest.exists() {
        let (text, _) = read_text(&files.manifest)?;
        Some(RunManifest::from_json(&text).with_context(|| format!("in {}", files.manifest.display()))?)
    } else {
        None
    };
    Ok(LoadedModel { model, vocab, manifest })
}
