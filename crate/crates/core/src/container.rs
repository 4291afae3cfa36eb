//! On-disk formats: JSON manifests with little-endian binary sidecars.
//!
//! A `.pvec` file is a manifest `{"dtype":"f64","dim","layout","sha256"}` whose
//! data lives in `<file>.bin`. Block-diagonal matrices use the same manifest
//! with `"kind":"blockdiag"` and the row-major blocks concatenated. Models add
//! an `<file>.arch.json` descriptor; datasets keep features and labels in two
//! sidecars.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::curvature::{BlockFisher, FisherMeta};
use crate::error::{Error, Result};
use crate::numkit::{Block, BlockDiagMatrix, BlockLayout, ParamVector};
use crate::toymodel::{Architecture, Dataset, MlpModel};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorManifest {
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    pub dim: usize,
    pub layout: Vec<Block>,
    pub data: String,
    pub sha256: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl TensorManifest {
    pub fn layout(&self) -> Result<BlockLayout> {
        BlockLayout::new(self.layout.clone())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn f64_bytes(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values.into_iter().flat_map(f64::to_le_bytes).collect()
}

fn bytes_f64(path: &Path, bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(format_err(path, "binary length is not a multiple of 8"));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), reason: reason.into() }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

fn write_tensor(path: &Path, kind: Option<&str>, layout: &BlockLayout, blob: Vec<u8>, extra: Map<String, Value>) -> Result<()> {
    let bin = sidecar(path, ".bin");
    let manifest = TensorManifest {
        dtype: "f64".into(),
        kind: kind.map(String::from),
        dim: layout.dim(),
        layout: layout.blocks().to_vec(),
        data: bin.file_name().unwrap().to_string_lossy().into_owned(),
        sha256: sha256_hex(&blob),
        extra,
    };
    fs::write(&bin, blob)?;
    write_json(path, &manifest)
}

fn read_tensor(path: &Path, kind: Option<&str>) -> Result<(TensorManifest, Vec<f64>)> {
    let manifest: TensorManifest = read_json(path)?;
    if manifest.dtype != "f64" {
        return Err(format_err(path, format!("unsupported dtype `{}`", manifest.dtype)));
    }
    if manifest.kind.as_deref() != kind {
        return Err(format_err(path, format!("expected kind {kind:?}, found {:?}", manifest.kind)));
    }
    let bin = path.with_file_name(&manifest.data);
    let blob = fs::read(&bin)?;
    let found = sha256_hex(&blob);
    if found != manifest.sha256 {
        return Err(Error::DigestMismatch { what: bin.display().to_string(), expected: manifest.sha256, found });
    }
    let values = bytes_f64(path, &blob)?;
    Ok((manifest, values))
}

pub fn write_pvec(path: &Path, v: &ParamVector) -> Result<()> {
    write_pvec_with(path, v, Map::new())
}

/// Writes a vector whose manifest carries additional top-level fields.
pub fn write_pvec_with(path: &Path, v: &ParamVector, extra: Map<String, Value>) -> Result<()> {
    write_tensor(path, None, v.layout(), f64_bytes(v.values().iter().copied()), extra)
}

pub fn read_pvec(path: &Path) -> Result<ParamVector> {
    Ok(read_pvec_with(path)?.0)
}

pub fn read_pvec_with(path: &Path) -> Result<(ParamVector, Map<String, Value>)> {
    let (manifest, values) = read_tensor(path, None)?;
    let layout = manifest.layout().map_err(|e| format_err(path, e.to_string()))?;
    if layout.dim() != manifest.dim {
        return Err(format_err(path, "manifest dim disagrees with layout"));
    }
    let v = ParamVector::new(values, Arc::new(layout)).map_err(|e| format_err(path, e.to_string()))?;
    Ok((v, manifest.extra))
}

pub fn write_blockdiag(path: &Path, m: &BlockDiagMatrix, extra: Map<String, Value>) -> Result<()> {
    let blob = f64_bytes(m.blocks().iter().flat_map(|b| b.transpose().as_slice().to_vec()));
    write_tensor(path, Some("blockdiag"), m.layout(), blob, extra)
}

pub fn read_blockdiag(path: &Path) -> Result<(BlockDiagMatrix, Map<String, Value>)> {
    let (manifest, values) = read_tensor(path, Some("blockdiag"))?;
    let layout = manifest.layout().map_err(|e| format_err(path, e.to_string()))?;
    let expected: usize = layout.blocks().iter().map(|b| b.size * b.size).sum();
    if values.len() != expected {
        return Err(format_err(path, format!("expected {expected} entries, found {}", values.len())));
    }
    let mut at = 0;
    let mut blocks = Vec::with_capacity(layout.len());
    for b in layout.blocks() {
        let n = b.size * b.size;
        blocks.push(DMatrix::from_row_slice(b.size, b.size, &values[at..at + n]));
        at += n;
    }
    let m = BlockDiagMatrix::new(blocks, Arc::new(layout)).map_err(|e| format_err(path, e.to_string()))?;
    Ok((m, manifest.extra))
}

/// Fisher blocks with their damping, sample count and source digest in the manifest.
pub fn write_fisher(path: &Path, c: &BlockFisher, mut extra: Map<String, Value>) -> Result<()> {
    extra.insert("fisher".into(), serde_json::to_value(c.meta())?);
    write_blockdiag(path, &c.fisher, extra)
}

pub fn read_fisher(path: &Path) -> Result<(BlockFisher, Map<String, Value>)> {
    let (m, mut extra) = read_blockdiag(path)?;
    let meta = extra.remove("fisher").ok_or_else(|| format_err(path, "missing `fisher` metadata"))?;
    let meta: FisherMeta = serde_json::from_value(meta).map_err(|e| format_err(path, e.to_string()))?;
    let c = BlockFisher::new(m, meta.lambda, meta.n, meta.source_digest).map_err(|e| format_err(path, e.to_string()))?;
    Ok((c, extra))
}

pub fn write_model(path: &Path, model: &MlpModel) -> Result<()> {
    write_model_with(path, model, Map::new())
}

pub fn write_model_with(path: &Path, model: &MlpModel, extra: Map<String, Value>) -> Result<()> {
    write_pvec_with(path, model.params(), extra)?;
    write_json(&sidecar(path, ".arch.json"), &model.architecture())
}

pub fn read_model(path: &Path) -> Result<MlpModel> {
    Ok(read_model_with(path)?.0)
}

pub fn read_model_with(path: &Path) -> Result<(MlpModel, Map<String, Value>)> {
    let arch: Architecture = read_json(&sidecar(path, ".arch.json"))?;
    let (params, extra) = read_pvec_with(path)?;
    let model = MlpModel::from_params(&arch.layer_dims, params).map_err(|e| format_err(path, e.to_string()))?;
    Ok((model, extra))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct DatasetManifest {
    name: String,
    n: usize,
    dim: usize,
    classes: usize,
    features: String,
    features_sha256: String,
    labels: String,
    labels_sha256: String,
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let fpath = sidecar(path, ".features.bin");
    let lpath = sidecar(path, ".labels.bin");
    let fblob = f64_bytes(data.features().iter().copied());
    let lblob: Vec<u8> = data.labels().iter().flat_map(|y| y.to_le_bytes()).collect();
    let manifest = DatasetManifest {
        name: data.name.clone(),
        n: data.len(),
        dim: data.dim(),
        classes: data.classes(),
        features: fpath.file_name().unwrap().to_string_lossy().into_owned(),
        features_sha256: sha256_hex(&fblob),
        labels: lpath.file_name().unwrap().to_string_lossy().into_owned(),
        labels_sha256: sha256_hex(&lblob),
    };
    fs::write(&fpath, fblob)?;
    fs::write(&lpath, lblob)?;
    write_json(path, &manifest)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let m: DatasetManifest = read_json(path)?;
    let fpath = path.with_file_name(&m.features);
    let lpath = path.with_file_name(&m.labels);
    let fblob = fs::read(&fpath)?;
    let lblob = fs::read(&lpath)?;
    for (p, blob, expected) in [(&fpath, &fblob, &m.features_sha256), (&lpath, &lblob, &m.labels_sha256)] {
        let found = sha256_hex(blob);
        if &found != expected {
            return Err(Error::DigestMismatch { what: p.display().to_string(), expected: expected.clone(), found });
        }
    }
    if lblob.len() % 4 != 0 {
        return Err(format_err(path, "label blob length is not a multiple of 4"));
    }
    let labels: Vec<u32> = lblob.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    let features = bytes_f64(path, &fblob)?;
    if labels.len() != m.n {
        return Err(format_err(path, format!("manifest says {} rows, labels hold {}", m.n, labels.len())));
    }
    Dataset::new(m.name, features, labels, m.dim, m.classes).map_err(|e| format_err(path, e.to_string()))
}
