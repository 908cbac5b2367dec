//! Checkpoint directories: text documents, a tensor manifest, raw
//! little-endian tensor data and a digest file covering all of them.
//!
//! ```text
//! <dir>/config.txt     key=value model config
//! <dir>/manifest.txt   name<TAB>dtype<TAB>shape<TAB>byte offset<TAB>numel
//! <dir>/tensors.bin    concatenated little-endian arrays
//! <dir>/sha256.txt     file<TAB>hex digest, one line per file above
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const CONFIG_FILE: &str = "config.txt";
const MANIFEST_FILE: &str = "manifest.txt";
const TENSORS_FILE: &str = "tensors.bin";
const HASH_FILE: &str = "sha256.txt";

/// Contents of a checkpoint directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Archive<T: Scalar> {
    pub docs: BTreeMap<String, String>,
    pub tensors: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Archive<T> {
    pub fn doc(&self, name: &str, dir: &Path) -> Result<&str> {
        self.docs
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| Error::corrupt("checkpoint", dir, format!("missing {name}")))
    }
}

fn sibling(dir: &Path, suffix: &str) -> PathBuf {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into());
    dir.with_file_name(format!(".{name}.{suffix}"))
}

fn write_synced(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    f.sync_all().map_err(|e| Error::io(path, e))
}

/// Writes the archive into a temporary sibling and swaps it into place.
pub fn write_archive<T: Scalar>(
    dir: &Path,
    docs: &[(&str, &str)],
    tensors: &[(&str, &Tensor<T>)],
) -> Result<()> {
    let mut manifest = String::new();
    let mut bin = Vec::new();
    for (name, t) in tensors {
        if name.contains(['\t', '\n']) {
            return Err(Error::Contract(format!("tensor name {name:?} is not storable")));
        }
        let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
        manifest.push_str(&format!(
            "{name}\t{}\t{}\t{}\t{}\n",
            T::DTYPE,
            shape.join("x"),
            bin.len(),
            t.numel()
        ));
        for &v in t.data() {
            v.write_le(&mut bin);
        }
    }
    for (name, _) in docs {
        if [MANIFEST_FILE, TENSORS_FILE, HASH_FILE].contains(name) || name.contains(['/', '\\', '\t', '\n']) {
            return Err(Error::Contract(format!("document name {name:?} is not allowed")));
        }
    }
    let mut files: Vec<(&str, &[u8])> = docs.iter().map(|(n, d)| (*n, d.as_bytes())).collect();
    files.push((MANIFEST_FILE, manifest.as_bytes()));
    files.push((TENSORS_FILE, &bin));
    let mut digests = String::new();
    for (name, bytes) in &files {
        digests.push_str(&format!("{name}\t{}\n", hex::encode(Sha256::digest(bytes))));
    }

    if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = sibling(dir, "tmp");
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    for (name, bytes) in &files {
        write_synced(&tmp.join(name), bytes)?;
    }
    write_synced(&tmp.join(HASH_FILE), digests.as_bytes())?;

    let old = sibling(dir, "old");
    if old.exists() {
        fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
    }
    if dir.exists() {
        fs::rename(dir, &old).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))?;
    if old.exists() {
        fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
    }
    Ok(())
}

/// Reads and verifies an archive. Any digest, size or format problem is a
/// corruption error.
pub fn read_archive<T: Scalar>(dir: &Path) -> Result<Archive<T>> {
    let corrupt = |reason: String| Error::corrupt("checkpoint", dir, reason);
    let hash_path = dir.join(HASH_FILE);
    let digests = fs::read_to_string(&hash_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => corrupt(format!("missing {HASH_FILE}")),
        _ => Error::io(&hash_path, e),
    })?;
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for line in digests.lines().filter(|l| !l.is_empty()) {
        let (name, expected) = line
            .split_once('\t')
            .ok_or_else(|| corrupt(format!("malformed digest line {line:?}")))?;
        if name.contains(['/', '\\']) || name == ".." {
            return Err(corrupt(format!("illegal file name {name:?}")));
        }
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => corrupt(format!("missing {name}")),
            _ => Error::io(&path, e),
        })?;
        let actual = hex::encode(Sha256::digest(&bytes));
        if actual != expected {
            return Err(corrupt(format!("{name} digest {actual} does not match {expected}")));
        }
        files.insert(name.to_string(), bytes);
    }
    let manifest = files
        .remove(MANIFEST_FILE)
        .ok_or_else(|| corrupt(format!("missing {MANIFEST_FILE}")))?;
    let bin = files
        .remove(TENSORS_FILE)
        .ok_or_else(|| corrupt(format!("missing {TENSORS_FILE}")))?;
    let manifest = String::from_utf8(manifest).map_err(|_| corrupt("manifest is not UTF-8".into()))?;

    let mut tensors = Vec::new();
    let mut expected_offset = 0usize;
    for line in manifest.lines().filter(|l| !l.is_empty()) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(corrupt(format!("malformed manifest line {line:?}")));
        }
        if cols[1] != T::DTYPE {
            return Err(corrupt(format!("{} stored as {}, expected {}", cols[0], cols[1], T::DTYPE)));
        }
        let shape: Vec<usize> = cols[2]
            .split('x')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| corrupt(format!("bad shape in {line:?}")))?;
        let offset: usize = cols[3].parse().map_err(|_| corrupt(format!("bad offset in {line:?}")))?;
        let numel: usize = cols[4].parse().map_err(|_| corrupt(format!("bad numel in {line:?}")))?;
        if offset != expected_offset || shape.iter().product::<usize>() != numel {
            return Err(corrupt(format!("inconsistent manifest line {line:?}")));
        }
        let end = offset + numel * T::BYTES;
        if end > bin.len() {
            return Err(corrupt(format!("{} runs past the end of {TENSORS_FILE}", cols[0])));
        }
        let data: Vec<T> = bin[offset..end].chunks_exact(T::BYTES).map(T::read_le).collect();
        let t = Tensor::new(shape, data).map_err(|e| corrupt(e.to_string()))?;
        tensors.push((cols[0].to_string(), t));
        expected_offset = end;
    }
    if expected_offset != bin.len() {
        return Err(corrupt(format!("{TENSORS_FILE} has {} trailing bytes", bin.len() - expected_offset)));
    }
    let mut docs = BTreeMap::new();
    for (name, bytes) in files {
        let text = String::from_utf8(bytes).map_err(|_| corrupt(format!("{name} is not UTF-8")))?;
        docs.insert(name, text);
    }
    Ok(Archive { docs, tensors })
}

pub fn save_model<T: Scalar>(params: &ModelParams<T>, dir: &Path) -> Result<()> {
    let cfg = params.config().to_kv();
    let named: Vec<(&str, &Tensor<T>)> = params
        .names()
        .iter()
        .map(String::as_str)
        .zip(params.tensors())
        .collect();
    write_archive(dir, &[(CONFIG_FILE, &cfg)], &named)
}

/// Loads parameters from a model checkpoint or from a training-state
/// checkpoint, whose optimizer moments are skipped.
pub fn load_model<T: Scalar>(dir: &Path) -> Result<ModelParams<T>> {
    let archive = read_archive::<T>(dir)?;
    let config = ModelConfig::from_kv(archive.doc(CONFIG_FILE, dir)?)?;
    let named = archive
        .tensors
        .into_iter()
        .filter(|(name, _)| !name.starts_with("adam."))
        .collect();
    ModelParams::from_named(&config, named)
}
