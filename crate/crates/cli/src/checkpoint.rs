//! Checkpoints: the binary parameter file plus a `<ckpt>.toml` sidecar with
//! everything needed to rebuild and feed the model.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sfatnet_core::model::{Model, ModelConfig};
use sfatnet_core::tensor::{decode_checkpoint, encode_checkpoint};
use sfatnet_core::train::FormantScaler;

use crate::cache::AnnotationParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub scaler: FormantScaler,
    pub annotation: AnnotationParams,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Equal-error-rate threshold on the validation set.
    pub threshold: f64,
}

pub fn sidecar_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

pub fn save_checkpoint(path: &Path, model: &Model<f32>, meta: &CheckpointMeta) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    fs::write(path, encode_checkpoint(&model.params)).map_err(Error::io(path))?;
    let side = sidecar_path(path);
    let text = toml::to_string(meta).expect("metadata serializes");
    fs::write(&side, text).map_err(Error::io(&side))
}

pub fn load_checkpoint(path: &Path) -> Result<(Model<f32>, CheckpointMeta)> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(Error::io(&side))?;
    let meta: CheckpointMeta = toml::from_str(&text).map_err(|e| Error::Parse {
        path: side.clone(),
        line: e.span().map_or(0, |s| text[..s.start].lines().count() as u64),
        message: e.message().to_string(),
    })?;
    let bytes = fs::read(path).map_err(Error::io(path))?;
    let params = decode_checkpoint::<f32>(&bytes)?;
    let model = Model::from_params(meta.model.clone(), params)?;
    Ok((model, meta))
}
