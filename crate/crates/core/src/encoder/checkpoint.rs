//! `manifest.json` plus `checkpoint.bin`: the tensors of
//! [`ModelParams::tensors`] concatenated in manifest order as little-endian
//! floats.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use crate::config::{Config, Precision};
use crate::error::{Error, Result};
use crate::numerics::{c, Real};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "checkpoint.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    /// `f32` or `f64`.
    pub dtype: String,
    pub num_items: usize,
    pub tensors: Vec<TensorEntry>,
    pub config: Config,
}

/// Writes both files into `dir` and returns the path of the weights file.
/// Weights are stored as 32-bit floats unless the model runs in 64-bit.
pub fn save_checkpoint<T: Real>(
    dir: impl AsRef<Path>,
    params: &ModelParams<T>,
    config: &Config,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dtype = match config.model.precision {
        Precision::F32 => "f32",
        Precision::F64 => "f64",
    };
    let manifest = Manifest {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        dtype: dtype.into(),
        num_items: params.num_items(),
        tensors: params
            .tensors()
            .into_iter()
            .map(|(name, _, t)| TensorEntry {
                name,
                shape: [t.nrows(), t.ncols()],
            })
            .collect(),
        config: config.clone(),
    };
    let mut bytes = Vec::with_capacity(params.num_scalars() * 8);
    for v in params.to_flat() {
        match config.model.precision {
            Precision::F32 => bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()),
            Precision::F64 => bytes.extend_from_slice(&v.as_f64().to_le_bytes()),
        }
    }
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| Error::io(&mpath, e))?;
    let wpath = dir.join(WEIGHTS_FILE);
    fs::write(&wpath, bytes).map_err(|e| Error::io(&wpath, e))?;
    Ok(wpath)
}

fn checkpoint_dir(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

/// Reads only the manifest, for callers that must know the dtype first.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let mpath = checkpoint_dir(path.as_ref()).join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported schema {}",
            manifest.schema_version
        )));
    }
    Ok(manifest)
}

/// Accepts either the checkpoint directory or the weights file inside it.
pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<(ModelParams<T>, Manifest)> {
    let path = path.as_ref();
    let manifest = read_manifest(path)?;
    let wpath = checkpoint_dir(path).join(WEIGHTS_FILE);
    let bytes = fs::read(&wpath).map_err(|e| Error::io(&wpath, e))?;

    let mut params = ModelParams::<T>::init(
        &manifest.config.model,
        manifest.num_items,
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    let layout = params.tensors();
    if layout.len() != manifest.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "manifest lists {} tensors, configuration implies {}",
            manifest.tensors.len(),
            layout.len()
        )));
    }
    for ((name, _, t), e) in layout.iter().zip(&manifest.tensors) {
        if *name != e.name || [t.nrows(), t.ncols()] != e.shape {
            return Err(Error::Checkpoint(format!(
                "tensor `{}` does not match the configuration",
                e.name
            )));
        }
    }
    let width = match manifest.dtype.as_str() {
        "f32" => 4,
        "f64" => 8,
        other => return Err(Error::Checkpoint(format!("unknown dtype `{other}`"))),
    };
    let count = params.num_scalars();
    if bytes.len() != count * width {
        return Err(Error::Checkpoint(format!(
            "weights file has {} bytes, expected {}",
            bytes.len(),
            count * width
        )));
    }
    let flat: Vec<T> = bytes
        .chunks_exact(width)
        .map(|b| {
            if width == 4 {
                c::<T>(f32::from_le_bytes(b.try_into().unwrap()) as f64)
            } else {
                c::<T>(f64::from_le_bytes(b.try_into().unwrap()))
            }
        })
        .collect();
    params.set_flat(&flat);
    Ok((params, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        for precision in [Precision::F32, Precision::F64] {
            let mut cfg = Config::default();
            cfg.model.d = 4;
            cfg.model.d_ff = 4;
            cfg.model.max_len = 6;
            cfg.model.horizon = 1;
            cfg.model.learnable_filter = true;
            cfg.model.precision = precision;
            let dir = tempfile::tempdir().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            match precision {
                Precision::F32 => {
                    let p = ModelParams::<f32>::init(&cfg.model, 9, &mut rng);
                    let path = save_checkpoint(dir.path(), &p, &cfg).unwrap();
                    let (q, m) = load_checkpoint::<f32>(&path).unwrap();
                    assert_eq!(p, q);
                    assert_eq!(m.config, cfg);
                }
                Precision::F64 => {
                    let p = ModelParams::<f64>::init(&cfg.model, 9, &mut rng);
                    save_checkpoint(dir.path(), &p, &cfg).unwrap();
                    let (q, _) = load_checkpoint::<f64>(dir.path()).unwrap();
                    assert_eq!(p, q);
                }
            }
        }
    }

    #[test]
    fn truncated_weights_rejected() {
        let cfg = Config::default();
        let dir = tempfile::tempdir().unwrap();
        let p = ModelParams::<f32>::init(&cfg.model, 3, &mut ChaCha8Rng::seed_from_u64(0));
        let path = save_checkpoint(dir.path(), &p, &cfg).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(
            load_checkpoint::<f32>(&path),
            Err(Error::Checkpoint(_))
        ));
    }
}
