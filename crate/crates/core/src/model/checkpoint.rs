use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ModelParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: ModelConfig,
    values: Vec<f64>,
}

pub fn checkpoint_to_json(params: &ModelParams) -> Result<String> {
    Ok(serde_json::to_string(&Checkpoint {
        version: CHECKPOINT_VERSION,
        config: *params.config(),
        values: params.values.clone(),
    })?)
}

pub fn checkpoint_from_json(text: &str) -> Result<ModelParams> {
    let ck: Checkpoint = serde_json::from_str(text)?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::Config(format!("unsupported checkpoint version {}", ck.version)));
    }
    let params = ModelParams::from_values(ck.config, ck.values)?;
    if !params.is_finite() {
        return Err(Error::Config("checkpoint contains non-finite weights".into()));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, checkpoint_to_json(params)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_json(&text)
}
