//! Append-only block log: u32 length-prefixed canonical blocks in
//! acceptance order. Replay feeds them back through the chain's accept
//! path; a torn or undecodable tail record is truncated away so a crash
//! mid-append never poisons the chain.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::ledger::block::{Block, MAX_BLOCK_BYTES};

#[derive(Debug)]
pub struct ChainLog {
    path: PathBuf,
    file: File,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayStats {
    pub records: usize,
    pub truncated: bool,
}

impl ChainLog {
    pub fn open(path: impl Into<PathBuf>) -> std::io::Result<Self> {
        let path = path.into();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)?;
        Ok(ChainLog { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, block: &Block) -> std::io::Result<()> {
        let bytes = block
            .canonical_bytes()
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
        let mut record = Vec::with_capacity(4 + bytes.len());
        record.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        record.extend_from_slice(&bytes);
        self.file.write_all(&record)?;
        self.file.sync_data()
    }

    /// Read every intact record, handing blocks to `sink` in order. On a
    /// torn or undecodable tail the file is truncated back to the last
    /// good record and `truncated` is reported.
    pub fn replay(
        path: &Path,
        mut sink: impl FnMut(Block),
    ) -> std::io::Result<ReplayStats> {
        let mut stats = ReplayStats::default();
        let mut bytes = Vec::new();
        match File::open(path) {
            Ok(mut f) => {
                f.read_to_end(&mut bytes)?;
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(stats),
            Err(e) => return Err(e),
        }
        let mut at = 0usize;
        let mut good_end = 0usize;
        while at + 4 <= bytes.len() {
            let len = u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
            if len > MAX_BLOCK_BYTES || at + 4 + len > bytes.len() {
                break;
            }
            match Block::decode(&bytes[at + 4..at + 4 + len]) {
                Ok(block) => sink(block),
                Err(_) => break,
            }
            at += 4 + len;
            good_end = at;
            stats.records += 1;
        }
        if good_end != bytes.len() {
            stats.truncated = true;
            let f = OpenOptions::new().write(true).open(path)?;
            f.set_len(good_end as u64)?;
        }
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;
    use crate::identity::fingerprint;
    use crate::ledger::block::{mine_block, BlockHeader, MineOutcome};
    use crate::identity::Fingerprint;

    fn blocks(n: usize) -> Vec<Block> {
        let clock = FixedClock::at(1_700_000_000);
        let mut parent = BlockHeader {
            parent_hash: [0u8; 32],
            height: 0,
            timestamp: 1_699_999_999,
            tx_merkle_root: [0u8; 32],
            difficulty: 1,
            nonce: 0,
            miner: Fingerprint::from_digest([0u8; 32]),
        };
        let mut out = Vec::new();
        for _ in 0..n {
            let MineOutcome::Mined { block, .. } = mine_block(
                &parent,
                vec![],
                fingerprint(&[1u8; 32]).unwrap(),
                1,
                &clock,
                &|| false,
            )
            .unwrap() else {
                unreachable!()
            };
            parent = block.header.clone();
            out.push(block);
        }
        out
    }

    #[test]
    fn append_replay_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.log");
        let written = blocks(3);
        {
            let mut log = ChainLog::open(&path).unwrap();
            for b in &written {
                log.append(b).unwrap();
            }
        }
        let mut read = Vec::new();
        let stats = ChainLog::replay(&path, |b| read.push(b)).unwrap();
        assert_eq!(stats.records, 3);
        assert!(!stats.truncated);
        assert_eq!(read, written);
    }

    #[test]
    fn torn_tail_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.log");
        let written = blocks(2);
        {
            let mut log = ChainLog::open(&path).unwrap();
            for b in &written {
                log.append(b).unwrap();
            }
        }
        // simulate a crash mid-append: half a record at the tail
        let full = std::fs::read(&path).unwrap();
        let mut torn = full.clone();
        torn.extend_from_slice(&(200u32).to_be_bytes());
        torn.extend_from_slice(&[0xab; 60]);
        std::fs::write(&path, &torn).unwrap();

        let mut read = Vec::new();
        let stats = ChainLog::replay(&path, |b| read.push(b)).unwrap();
        assert_eq!(stats.records, 2);
        assert!(stats.truncated);
        assert_eq!(read, written);
        assert_eq!(std::fs::read(&path).unwrap(), full);
    }

    #[test]
    fn missing_log_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let stats = ChainLog::replay(&dir.path().join("absent.log"), |_| {
            panic!("no records expected")
        })
        .unwrap();
        assert_eq!(stats, ReplayStats::default());
    }
}
