//! Versioned checkpoint container: a JSON manifest followed by named tensor
//! blobs. Holds backbone weights and, under reserved names, adapter state
//! (calibration tokens, classifier weights) and free-form metadata such as
//! the mask mode.

use super::config::BackboneConfig;
use super::weights::BackboneWeights;
use crate::nncore::{read_blob, write_blob, BlobError, Tensor};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: [u8; 4] = *b"LCCK";
const VERSION: u32 = 1;

#[derive(Debug)]
pub enum CheckpointError {
    Io(io::Error),
    Blob(BlobError),
    /// Malformed manifest, or tensors inconsistent with the config.
    Manifest(String),
    MissingTensor(String),
    BadMagic,
    UnsupportedVersion(u32),
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::Io(e) => write!(f, "checkpoint i/o: {e}"),
            CheckpointError::Blob(e) => write!(f, "checkpoint tensor: {e}"),
            CheckpointError::Manifest(why) => write!(f, "checkpoint manifest: {why}"),
            CheckpointError::MissingTensor(name) => write!(f, "checkpoint lacks tensor {name}"),
            CheckpointError::BadMagic => write!(f, "not a checkpoint file"),
            CheckpointError::UnsupportedVersion(v) => write!(f, "unsupported checkpoint version {v}"),
        }
    }
}

impl std::error::Error for CheckpointError {}

impl From<io::Error> for CheckpointError {
    fn from(e: io::Error) -> CheckpointError {
        CheckpointError::Io(e)
    }
}

impl From<BlobError> for CheckpointError {
    fn from(e: BlobError) -> CheckpointError {
        CheckpointError::Blob(e)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: BackboneConfig,
    metadata: BTreeMap<String, String>,
    /// Tensor names in payload order.
    tensors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: BackboneConfig,
    pub metadata: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new(config: BackboneConfig) -> Checkpoint {
        Checkpoint { config, metadata: BTreeMap::new(), tensors: BTreeMap::new() }
    }

    /// Checkpoint pre-populated with a backbone's tensors.
    pub fn with_backbone(weights: &BackboneWeights) -> Checkpoint {
        let mut ck = Checkpoint::new(weights.config.clone());
        for (name, tensor) in weights.named_tensors() {
            ck.insert(name, tensor);
        }
        ck
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn require(&self, name: &str) -> Result<&Tensor, CheckpointError> {
        self.tensors.get(name).ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))
    }

    /// Reassembles the backbone weights stored in this checkpoint.
    pub fn backbone(&self) -> Result<BackboneWeights, CheckpointError> {
        BackboneWeights::from_named(&self.config, &self.tensors).map_err(CheckpointError::Manifest)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let manifest = Manifest {
            config: self.config.clone(),
            metadata: self.metadata.clone(),
            tensors: self.tensors.keys().cloned().collect(),
        };
        let json = serde_json::to_vec(&manifest)
            .map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for tensor in self.tensors.values() {
            write_blob(tensor, &mut w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let json_len = u64::from_le_bytes(len) as usize;
        let mut json = vec![0u8; json_len];
        r.read_exact(&mut json)?;
        let manifest: Manifest = serde_json::from_slice(&json)
            .map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        let mut tensors = BTreeMap::new();
        for name in manifest.tensors {
            let tensor = read_blob(&mut r)?;
            tensors.insert(name, tensor);
        }
        Ok(Checkpoint { config: manifest.config, metadata: manifest.metadata, tensors })
    }
}
