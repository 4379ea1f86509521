//! The genesis file defines network membership: nodes whose genesis
//! blocks differ cannot peer. Every field feeds the genesis header, so
//! altering any of them changes the genesis hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::identity::Fingerprint;
use crate::ledger::block::{Block, BlockHeader};

#[derive(Debug, Error)]
pub enum GenesisError {
    #[error("cannot read genesis file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse genesis file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("network_id must be positive")]
    BadNetworkId,
    #[error("difficulty must be at least 1")]
    BadDifficulty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenesisConfig {
    pub network_id: u32,
    pub difficulty: u64,
    pub timestamp: u64,
    pub comment: String,
}

impl GenesisConfig {
    pub fn load(path: &Path) -> Result<Self, GenesisError> {
        let text = std::fs::read_to_string(path)?;
        let config: GenesisConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), GenesisError> {
        if self.network_id == 0 {
            return Err(GenesisError::BadNetworkId);
        }
        if self.difficulty == 0 {
            return Err(GenesisError::BadDifficulty);
        }
        Ok(())
    }

    /// The fixed first block. Its merkle-root slot commits to every
    /// genesis field (network id and comment included), so the block hash
    /// is a complete network identifier. Genesis is exempt from the
    /// proof-of-work check.
    pub fn genesis_block(&self) -> Block {
        let mut seed = Sha256::new();
        seed.update(b"ddash-genesis");
        seed.update(self.network_id.to_be_bytes());
        seed.update(self.difficulty.to_be_bytes());
        seed.update(self.timestamp.to_be_bytes());
        seed.update((self.comment.len() as u32).to_be_bytes());
        seed.update(self.comment.as_bytes());
        Block {
            header: BlockHeader {
                parent_hash: [0u8; 32],
                height: 0,
                timestamp: self.timestamp,
                tx_merkle_root: seed.finalize().into(),
                difficulty: self.difficulty,
                nonce: 0,
                miner: Fingerprint::from_digest([0u8; 32]),
            },
            transactions: Vec::new(),
        }
    }

    pub fn genesis_hash(&self) -> [u8; 32] {
        self.genesis_block().hash()
    }
}
