//! JSON checkpoints for searched models. Each ensemble slot's winning
//! genome is stored together with its trained weights and search scores,
//! so later stages can rebuild the ensemble without re-searching. JSON
//! keeps f64 weights bit-exact through the shortest-roundtrip repr.

use std::path::Path;

use varband_core::ga::FitnessRecord;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("checkpoint {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

pub fn save_model(path: &Path, record: &FitnessRecord) -> Result<(), CheckpointError> {
    let name = path.display().to_string();
    let mut bytes = serde_json::to_vec_pretty(record).map_err(|source| CheckpointError::Json {
        path: name.clone(),
        source,
    })?;
    bytes.push(b'\n');
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| CheckpointError::Io {
            path: name.clone(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| CheckpointError::Io { path: name, source })
}

pub fn load_model(path: &Path) -> Result<FitnessRecord, CheckpointError> {
    let name = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: name.clone(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|source| CheckpointError::Json { path: name, source })
}
