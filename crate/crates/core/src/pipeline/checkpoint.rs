//! Binary checkpoints: magic, version, a JSON header with the manifest,
//! then every parameter and table embedding as little-endian `f32`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::act_space::{ActTable, DialogueAct};
use crate::dialog_data::{GenConfig, World};
use crate::latent_policy::{LatentActModel, ModelMode};
use crate::numerics::rng::{seeded, stream};
use crate::numerics::{ParamStore, Tensor};
use crate::seq_model::{ModelConfig, Vocab};

pub const MAGIC: &[u8; 8] = b"LATACTCK";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic bytes)")]
    Magic,
    #[error("checkpoint version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint manifest: {0}")]
    Manifest(String),
    #[error("checkpoint payload has {found} bytes, manifest needs {expected}")]
    PayloadLength { expected: usize, found: usize },
    #[error("vocabulary hash {found} does not match recorded {expected}")]
    VocabHash { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    mode: ModelMode,
    train: TrainConfig,
    data: GenConfig,
    vocab: Vec<String>,
    vocab_hash: String,
    manifest: Vec<TensorEntry>,
    /// Table acts; their embeddings follow the parameters in the payload.
    table: Vec<DialogueAct>,
    table_dim: usize,
}

/// A trained model with everything needed to run it.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: LatentActModel,
    pub store: ParamStore<f32>,
    pub train: TrainConfig,
    /// Generator settings of the training corpus; they fix the world.
    pub data: GenConfig,
    pub vocab: Vocab,
    pub table: ActTable,
}

impl Checkpoint {
    pub fn world(&self) -> World {
        World::generate(self.data.seed, self.data.entities_per_domain)
    }

    pub fn manifest(&self) -> Vec<TensorEntry> {
        manifest(&self.store)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            model: self.model.config.clone(),
            mode: self.model.mode,
            train: self.train.clone(),
            data: self.data.clone(),
            vocab: self.vocab.tokens().to_vec(),
            vocab_hash: self.vocab.hash(),
            manifest: self.manifest(),
            table: self.table.acts().to_vec(),
            table_dim: self.table.dim(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(20 + json.len() + 4 * self.store.num_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, p) in self.store.iter() {
            for x in p.value.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        for (_, e) in self.table.iter() {
            for x in e {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 8 || &bytes[..8] != MAGIC {
            return Err(CheckpointError::Magic);
        }
        if bytes.len() < 20 {
            return Err(CheckpointError::Header("file ends inside the preamble".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(CheckpointError::Version { found: version, expected: VERSION });
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if len > body.len() {
            return Err(CheckpointError::Header(format!("header length {len} exceeds file size")));
        }
        let header: Header =
            serde_json::from_slice(&body[..len]).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let vocab = Vocab::from_tokens(header.vocab).map_err(|e| CheckpointError::Header(e.to_string()))?;
        if vocab.hash() != header.vocab_hash {
            return Err(CheckpointError::VocabHash { expected: header.vocab_hash, found: vocab.hash() });
        }
        if header.model.vocab_size != vocab.len() {
            return Err(CheckpointError::Manifest(format!(
                "model expects {} tokens, vocabulary has {}",
                header.model.vocab_size,
                vocab.len()
            )));
        }

        let mut store = ParamStore::new();
        let model = LatentActModel::new(&mut store, header.model, header.mode, &mut seeded(0, stream::INIT))
            .map_err(|e| CheckpointError::Header(e.to_string()))?;
        let expected = manifest(&store);
        if expected.len() != header.manifest.len() {
            return Err(CheckpointError::Manifest(format!(
                "{} tensors recorded, model has {}",
                header.manifest.len(),
                expected.len()
            )));
        }
        if let Some((want, got)) = expected.iter().zip(&header.manifest).find(|(a, b)| a != b) {
            return Err(CheckpointError::Manifest(format!(
                "tensor {} {:?} recorded where {} {:?} expected",
                got.name, got.shape, want.name, want.shape
            )));
        }

        let payload = &body[len..];
        let n_params = store.num_scalars();
        let need = 4 * (n_params + header.table.len() * header.table_dim);
        if payload.len() != need {
            return Err(CheckpointError::PayloadLength { expected: need, found: payload.len() });
        }
        let mut values = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let shape = store.get(id).value.shape().to_vec();
            let n: usize = shape.iter().product();
            let data: Vec<f32> = values.by_ref().take(n).collect();
            let t = Tensor::new(shape, data).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
            store.set_value(id, t).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        }
        let rows: Vec<(DialogueAct, Vec<f32>)> = header
            .table
            .into_iter()
            .map(|a| (a, values.by_ref().take(header.table_dim).collect()))
            .collect();
        let table = ActTable::from_rows(rows).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        Ok(Checkpoint {
            model,
            store,
            train: header.train,
            data: header.data,
            vocab,
            table,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

fn manifest(store: &ParamStore<f32>) -> Vec<TensorEntry> {
    store
        .iter()
        .map(|(_, p)| TensorEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
        })
        .collect()
}
