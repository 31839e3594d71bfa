//! Versioned JSON model checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::train::Model;

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    model: Model,
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path_str = path.as_ref().display().to_string();
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        model: model.clone(),
    };
    let json = serde_json::to_string_pretty(&checkpoint)?;
    std::fs::write(path.as_ref(), json).map_err(|e| Error::io(&path_str, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path_str = path.as_ref().display().to_string();
    let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    // peek the version before strict decoding so a mismatch is reported
    // as such rather than as a schema error
    #[derive(Deserialize)]
    struct VersionOnly {
        version: u32,
    }
    let v: VersionOnly = serde_json::from_slice(&bytes)?;
    if v.version != CHECKPOINT_VERSION {
        return Err(Error::ModelVersion {
            found: v.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let checkpoint: Checkpoint = serde_json::from_slice(&bytes)?;
    Ok(checkpoint.model)
}
