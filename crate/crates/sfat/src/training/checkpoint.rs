//! Checkpoints: `manifest.json` describing every tensor plus
//! `params.sfeb`, a file of concatenated SFEB blocks in manifest order
//! (parameters first, then Adam moments when present).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::sfeb::{decode_block, encode_block};
use crate::model::{ModelConfig, SfatModel};
use crate::numerics::Tensor;

use super::optim::{Adam, AdamConfig};
use super::trainer::TrainingConfig;
use super::{Result, TrainingError};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: u32,
    pub cols: u32,
    pub dtype: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimState {
    pub config: AdamConfig,
    pub step_count: u64,
    /// Moment blocks follow the parameter blocks in `params.sfeb`,
    /// all `m` entries then all `v` entries, in this name order.
    pub moment_names: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub epoch: usize,
    pub model_config: ModelConfig,
    pub training_config: Option<TrainingConfig>,
    /// Human-readable summary of how randomness is derived on resume.
    pub random_state: String,
    pub params: Vec<TensorEntry>,
    pub optim: Option<OptimState>,
}

/// A loaded checkpoint.
pub struct Checkpoint {
    pub model: SfatModel<f32>,
    pub adam: Option<Adam<f32>>,
    pub epoch: usize,
    pub training_config: Option<TrainingConfig>,
}

pub fn save_checkpoint(
    dir: &Path,
    model: &SfatModel<f32>,
    adam: Option<&Adam<f32>>,
    epoch: usize,
    training_config: &TrainingConfig,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    let mut payload = Vec::new();
    for (name, tensor) in &model.params {
        let (rows, cols) = (tensor.shape()[0] as u32, tensor.shape()[1] as u32);
        encode_block(rows, cols, tensor.data(), &mut payload)?;
        entries.push(TensorEntry { name: name.clone(), rows, cols, dtype: "f32".into() });
    }
    let optim = match adam {
        None => None,
        Some(a) => {
            let moment_names: Vec<String> = a.m.keys().cloned().collect();
            for name in &moment_names {
                encode_block(1, a.m[name].len() as u32, &a.m[name], &mut payload)?;
            }
            for name in &moment_names {
                encode_block(1, a.v[name].len() as u32, &a.v[name], &mut payload)?;
            }
            Some(OptimState { config: a.config, step_count: a.step_count, moment_names })
        }
    };
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        epoch,
        model_config: model.config.clone(),
        training_config: Some(training_config.clone()),
        random_state: format!(
            "ChaCha8 streams derived from (seed={}, epoch, stage label)",
            training_config.seed
        ),
        params: entries,
        optim,
    };
    let w = std::io::BufWriter::new(std::fs::File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(w, &manifest).map_err(|e| TrainingError::Format(e.to_string()))?;
    std::fs::write(dir.join("params.sfeb"), payload)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest_path = dir.join("manifest.json");
    let r = std::io::BufReader::new(std::fs::File::open(&manifest_path).map_err(|e| {
        TrainingError::Format(format!("cannot open {}: {e}", manifest_path.display()))
    })?);
    let manifest: Manifest =
        serde_json::from_reader(r).map_err(|e| TrainingError::Format(e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(TrainingError::Format(format!(
            "unsupported manifest version {}",
            manifest.version
        )));
    }
    let bytes = std::fs::read(dir.join("params.sfeb"))?;
    let mut offset = 0usize;
    let mut params = BTreeMap::new();
    for entry in &manifest.params {
        if entry.dtype != "f32" {
            return Err(TrainingError::Format(format!(
                "parameter {} has unsupported dtype {}",
                entry.name, entry.dtype
            )));
        }
        let (rows, cols, data, next) = decode_block(&bytes, offset)?;
        if rows != entry.rows || cols != entry.cols {
            return Err(TrainingError::Format(format!(
                "block for {} is {rows}x{cols}, manifest declares {}x{}",
                entry.name, entry.rows, entry.cols
            )));
        }
        params.insert(
            entry.name.clone(),
            Tensor::leaf(&[rows as usize, cols as usize], data)
                .map_err(crate::model::ModelError::from)?,
        );
        offset = next;
    }
    let model = SfatModel { config: manifest.model_config.clone(), params };
    let adam = match &manifest.optim {
        None => None,
        Some(state) => {
            let mut a = Adam::new(state.config)?;
            a.step_count = state.step_count;
            for name in &state.moment_names {
                let (_, _, data, next) = decode_block(&bytes, offset)?;
                a.m.insert(name.clone(), data);
                offset = next;
            }
            for name in &state.moment_names {
                let (_, _, data, next) = decode_block(&bytes, offset)?;
                a.v.insert(name.clone(), data);
                offset = next;
            }
            Some(a)
        }
    };
    if offset != bytes.len() {
        return Err(TrainingError::Format(format!(
            "{} trailing bytes after the last declared block",
            bytes.len() - offset
        )));
    }
    Ok(Checkpoint {
        model,
        adam,
        epoch: manifest.epoch,
        training_config: manifest.training_config,
    })
}
