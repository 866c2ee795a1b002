//! Checkpoint layout: `checkpoint.bin` is a flat run of little-endian `f64`
//! values (the server's shared slice, then each client's private slice in
//! ascending client id); `checkpoint.json` describes the model and where each
//! block starts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FedError, Federation, Result, Strategy};
use crate::nn::ModelSpec;

const BIN_NAME: &str = "checkpoint.bin";
const JSON_NAME: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Block {
    byte_offset: usize,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Sidecar {
    spec: ModelSpec,
    strategy: Strategy,
    round: usize,
    shared: Block,
    clients: Vec<Block>,
}

/// Decoded checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub strategy: Strategy,
    pub round: usize,
    pub shared: Vec<f64>,
    /// Private slice of client `k` at index `k`.
    pub private: Vec<Vec<f64>>,
}

pub(super) fn save(fed: &Federation, dir: &Path) -> Result<()> {
    let strategy = fed.cfg.strategy;
    let mut values: Vec<f64> = fed.server.shared.clone();
    let shared = Block {
        byte_offset: 0,
        len: values.len(),
    };
    let mut clients = Vec::with_capacity(fed.clients.len());
    for client in &fed.clients {
        let shared_range = strategy.shared_range(&client.params);
        let private: Vec<f64> = client
            .params
            .values()
            .iter()
            .enumerate()
            .filter(|(i, _)| !shared_range.contains(i))
            .map(|(_, &v)| v)
            .collect();
        clients.push(Block {
            byte_offset: values.len() * 8,
            len: private.len(),
        });
        values.extend(private);
    }
    let sidecar = Sidecar {
        spec: fed.spec.clone(),
        strategy,
        round: fed.server.round,
        shared,
        clients,
    };
    std::fs::create_dir_all(dir)?;
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(dir.join(BIN_NAME), bytes)?;
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| FedError::Checkpoint(e.to_string()))?;
    std::fs::write(dir.join(JSON_NAME), json)?;
    Ok(())
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Checkpoint> {
    let dir = dir.as_ref();
    let sidecar: Sidecar = serde_json::from_slice(&std::fs::read(dir.join(JSON_NAME))?)
        .map_err(|e| FedError::Checkpoint(e.to_string()))?;
    let bytes = std::fs::read(dir.join(BIN_NAME))?;
    let read_block = |b: &Block| -> Result<Vec<f64>> {
        let end = b.byte_offset + b.len * 8;
        let raw = bytes
            .get(b.byte_offset..end)
            .ok_or_else(|| FedError::Checkpoint(format!("block at byte {} runs past the file", b.byte_offset)))?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    Ok(Checkpoint {
        shared: read_block(&sidecar.shared)?,
        private: sidecar.clients.iter().map(read_block).collect::<Result<_>>()?,
        spec: sidecar.spec,
        strategy: sidecar.strategy,
        round: sidecar.round,
    })
}
