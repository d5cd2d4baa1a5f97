//! JSON checkpoints. Floats are written in shortest round-trip form so a
//! save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DataDims, ModelConfig, ModelError, Params, PatchDecomp};
use crate::numerics::Tensor;

pub const CHECKPOINT_FORMAT: &str = "patchdecomp-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    model: ModelConfig,
    dims: DataDims,
    variable_names: Vec<String>,
    tensors: Vec<TensorRecord>,
}

pub fn checkpoint_to_string(model: &PatchDecomp) -> String {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        model: model.config.clone(),
        dims: model.dims,
        variable_names: model.layout.variable_names().to_vec(),
        tensors: model
            .params
            .named()
            .into_iter()
            .map(|(name, t)| TensorRecord {
                name,
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("checkpoint serializes")
}

pub fn save_checkpoint(model: &PatchDecomp, path: &Path) -> Result<(), CheckpointError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, checkpoint_to_string(model))?;
    Ok(())
}

pub fn checkpoint_from_str(text: &str) -> Result<PatchDecomp, CheckpointError> {
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| CheckpointError::Format(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(CheckpointError::Format(format!(
            "unknown format tag `{}`",
            file.format
        )));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            found: file.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    file.model.validate()?;
    let layout = file.model.layout(file.dims)?;
    let mut params = Params::zeros(&file.model, file.dims, &layout);
    let expected = params.shapes();
    if expected.len() != file.tensors.len() {
        return Err(CheckpointError::Format(format!(
            "{} tensors stored, configuration needs {}",
            file.tensors.len(),
            expected.len()
        )));
    }
    for ((name, shape), record) in expected.iter().zip(&file.tensors) {
        if *name != record.name {
            return Err(CheckpointError::Format(format!(
                "expected tensor `{name}`, found `{}`",
                record.name
            )));
        }
        if *shape != record.shape {
            return Err(CheckpointError::Shape {
                name: name.clone(),
                expected: shape.clone(),
                found: record.shape.clone(),
            });
        }
    }
    let mut records = file.tensors.into_iter();
    let mut bad = None;
    params.for_each_mut(|name, t| {
        let r = records.next().expect("count checked");
        match Tensor::new(&r.shape, r.data) {
            Ok(v) => *t = v,
            Err(e) => bad = Some(format!("tensor `{name}`: {e}")),
        }
    });
    if let Some(msg) = bad {
        return Err(CheckpointError::Format(msg));
    }
    let model = PatchDecomp::from_params(file.model, file.dims, params)?;
    Ok(model.with_variable_names(file.variable_names)?)
}

pub fn load_checkpoint(path: &Path) -> Result<PatchDecomp, CheckpointError> {
    checkpoint_from_str(&fs::read_to_string(path)?)
}

/// Fails unless `model` was built for exactly this window geometry and
/// channel set.
pub fn ensure_compatible(
    model: &PatchDecomp,
    config: &ModelConfig,
    dims: DataDims,
) -> Result<(), CheckpointError> {
    let c = &model.config;
    let pairs = [
        ("lookback", c.lookback, config.lookback),
        ("horizon", c.horizon, config.horizon),
        ("patch_len", c.patch_len, config.patch_len),
        ("d_hist", model.dims.d_hist, dims.d_hist),
        ("d_futr", model.dims.d_futr, dims.d_futr),
        ("d_stat", model.dims.d_stat, dims.d_stat),
    ];
    for (what, stored, declared) in pairs {
        if stored != declared {
            return Err(CheckpointError::LayoutMismatch(format!(
                "checkpoint has {what} = {stored}, but {declared} was declared"
            )));
        }
    }
    Ok(())
}

/// [`load_checkpoint`] followed by [`ensure_compatible`].
pub fn load_checkpoint_for(
    path: &Path,
    config: &ModelConfig,
    dims: DataDims,
) -> Result<PatchDecomp, CheckpointError> {
    let model = load_checkpoint(path)?;
    ensure_compatible(&model, config, dims)?;
    Ok(model)
}
