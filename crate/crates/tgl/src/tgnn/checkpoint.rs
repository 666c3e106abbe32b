//! Model checkpoints: a flat little-endian `f64` binary of the parameter
//! arrays plus a JSON manifest carrying names, shapes, offsets, the run
//! seed and the configuration hash.

use crate::optim::ParamSet;
use crate::tensor::Tensor;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the binary blob, in values (not bytes).
    pub offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub dtype: String,
    pub seed: u64,
    pub config_hash: String,
    pub entries: Vec<ManifestEntry>,
}

fn manifest_path(bin_path: &Path) -> std::path::PathBuf {
    let mut os = bin_path.as_os_str().to_os_string();
    os.push(".json");
    os.into()
}

/// Write `<path>` (raw little-endian doubles, name order) and
/// `<path>.json` (the manifest).
pub fn save_checkpoint(
    params: &ParamSet,
    seed: u64,
    config_hash: &str,
    bin_path: &Path,
) -> Result<()> {
    let mut entries = Vec::with_capacity(params.len());
    let mut blob: Vec<u8> = Vec::with_capacity(params.num_entries() * 8);
    let mut offset = 0usize;
    for (name, tensor) in params.iter() {
        entries.push(ManifestEntry {
            name: name.to_string(),
            shape: tensor.shape().to_vec(),
            offset,
        });
        for v in tensor.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        offset += tensor.len();
    }
    let manifest = CheckpointManifest {
        dtype: "f64le".to_string(),
        seed,
        config_hash: config_hash.to_string(),
        entries,
    };
    fs::write(bin_path, blob)?;
    fs::write(
        manifest_path(bin_path),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Read a checkpoint pair back into a parameter set.
pub fn load_checkpoint(bin_path: &Path) -> Result<(ParamSet, CheckpointManifest)> {
    let manifest: CheckpointManifest =
        serde_json::from_str(&fs::read_to_string(manifest_path(bin_path))?)?;
    if manifest.dtype != "f64le" {
        return Err(Error::Format(format!(
            "unsupported checkpoint dtype {:?}",
            manifest.dtype
        )));
    }
    let blob = fs::read(bin_path)?;
    if blob.len() % 8 != 0 {
        return Err(Error::Format("checkpoint blob is not 8-byte aligned".into()));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let mut params = ParamSet::new();
    for entry in &manifest.entries {
        let len: usize = entry.shape.iter().product();
        let end = entry.offset + len;
        if end > values.len() {
            return Err(Error::Format(format!(
                "entry {:?} overruns the checkpoint blob",
                entry.name
            )));
        }
        params.insert(
            entry.name.clone(),
            Tensor::new(entry.shape.clone(), values[entry.offset..end].to_vec())?,
        );
    }
    Ok((params, manifest))
}
