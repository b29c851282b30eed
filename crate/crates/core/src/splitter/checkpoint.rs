use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{read_json, write_json};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MODEL_FILE: &str = "model.json";

/// Metadata stored next to the model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub backend_name: String,
    pub config: serde_json::Value,
    pub epoch: usize,
    pub val_loss: f64,
}

/// Writes `model.json` then `manifest.json`, each atomically.
pub fn save_checkpoint<M: Serialize>(dir: &Path, model: &M, manifest: &CheckpointManifest) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join(MODEL_FILE), model)?;
    write_json(&dir.join(MANIFEST_FILE), manifest)
}

pub fn load_checkpoint<M: DeserializeOwned>(dir: &Path) -> Result<(M, CheckpointManifest)> {
    let manifest = read_json(&dir.join(MANIFEST_FILE))?;
    let model = read_json(&dir.join(MODEL_FILE))?;
    Ok((model, manifest))
}
