//! Versioned JSON checkpoints.
//!
//! Reals are written in shortest round-trip form, so a saved model reloads
//! bit-identically.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::mlp::{Dense, MlpModel};
use crate::embeddings::EmbeddingKind;
use crate::error::{Error, Result};
use crate::rules::RuleId;

pub const CHECKPOINT_FORMAT: &str = "pscf-lab-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub rule: RuleId,
    pub embedding: EmbeddingKind,
    pub m: usize,
    pub seed: u64,
    pub epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub metadata: CheckpointMeta,
    pub layers: Vec<Dense>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<AdamState>,
}

impl Checkpoint {
    pub fn new(model: &MlpModel, metadata: CheckpointMeta) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            metadata,
            layers: model.layers().to_vec(),
            optimizer: None,
        }
    }

    pub fn with_optimizer(mut self, state: AdamState) -> Self {
        self.optimizer = Some(state);
        self
    }

    /// Validates the header and the layer shapes.
    pub fn model(&self) -> Result<MlpModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("not a checkpoint: format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint version {} (supported: {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let model = MlpModel::from_layers(self.layers.clone())?;
        let m = self.metadata.m;
        if model.input_dim() != m * m || model.output_dim() != m {
            return Err(Error::Format(format!(
                "layers {:?} do not match m={m}",
                model.layer_dims()
            )));
        }
        Ok(model)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let checkpoint: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("bad checkpoint: {e}")))?;
        checkpoint.model()?;
        Ok(checkpoint)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, checkpoint.to_json()?)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_json(&fs::read_to_string(path)?)
}

pub fn save_model(path: &Path, model: &MlpModel, metadata: CheckpointMeta) -> Result<()> {
    write_checkpoint(path, &Checkpoint::new(model, metadata))
}

pub fn load_model(path: &Path) -> Result<(MlpModel, CheckpointMeta)> {
    let checkpoint = read_checkpoint(path)?;
    Ok((checkpoint.model()?, checkpoint.metadata))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            rule: RuleId::Copeland,
            embedding: EmbeddingKind::Tournament,
            m: 3,
            seed: 17,
            epoch: 4,
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/model.json");
        let model = MlpModel::new(&[9, 8, 8, 3], 123).unwrap();
        save_model(&path, &model, meta()).unwrap();
        let (loaded, loaded_meta) = load_model(&path).unwrap();
        assert_eq!(loaded_meta, meta());
        for i in 0..model.num_params() {
            assert_eq!(model.param(i).to_bits(), loaded.param(i).to_bits());
        }
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
        assert_eq!(model.predict(&x).unwrap(), loaded.predict(&x).unwrap());
    }

    #[test]
    fn version_mismatch_is_a_format_error() {
        let model = MlpModel::new(&[9, 4, 3], 1).unwrap();
        let mut checkpoint = Checkpoint::new(&model, meta());
        checkpoint.version = 99;
        let text = checkpoint.to_json().unwrap();
        assert!(matches!(Checkpoint::from_json(&text), Err(Error::Format(_))));
    }

    #[test]
    fn corrupt_or_mismatched_checkpoints_are_rejected() {
        assert!(matches!(Checkpoint::from_json("{\"format\": 3"), Err(Error::Format(_))));
        let model = MlpModel::new(&[16, 4, 4], 1).unwrap();
        let text = Checkpoint::new(&model, meta()).to_json().unwrap();
        assert!(matches!(Checkpoint::from_json(&text), Err(Error::Format(_))));
    }

    #[test]
    fn metadata_and_optimizer_are_recorded() {
        let model = MlpModel::new(&[9, 4, 3], 1).unwrap();
        let checkpoint = Checkpoint::new(&model, meta()).with_optimizer(AdamState::new(&model));
        let json: serde_json::Value = serde_json::from_str(&checkpoint.to_json().unwrap()).unwrap();
        assert_eq!(json["metadata"]["rule"], "copeland");
        assert_eq!(json["metadata"]["embedding"], "T_T");
        assert_eq!(json["metadata"]["m"], 3);
        assert_eq!(json["metadata"]["seed"], 17);
        let back = Checkpoint::from_json(&checkpoint.to_json().unwrap()).unwrap();
        assert_eq!(back.optimizer.unwrap().step_count, 0);
    }
}
