//! Block structure, canonical hashing, the transaction merkle tree,
//! proof-of-work target math, and the nonce search.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::Clock;
use crate::identity::Fingerprint;
use crate::ledger::tx::{canonical_tx_bytes, decode_tx, validate_tx, RecordTransaction, TxCodecError, TxRejection};

pub const HEADER_LEN: usize = 128;
pub const MAX_BLOCK_BYTES: usize = 1_048_576;
pub const MAX_TIMESTAMP_DRIFT_SECS: u64 = 7200;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PowError {
    #[error("difficulty must be at least 1")]
    ZeroDifficulty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockHeader {
    pub parent_hash: [u8; 32],
    pub height: u64,
    pub timestamp: u64,
    pub tx_merkle_root: [u8; 32],
    pub difficulty: u64,
    pub nonce: u64,
    pub miner: Fingerprint,
}

impl BlockHeader {
    /// Fixed-order big-endian serialization, [`HEADER_LEN`] bytes.
    pub fn canonical_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..32].copy_from_slice(&self.parent_hash);
        out[32..40].copy_from_slice(&self.height.to_be_bytes());
        out[40..48].copy_from_slice(&self.timestamp.to_be_bytes());
        out[48..80].copy_from_slice(&self.tx_merkle_root);
        out[80..88].copy_from_slice(&self.difficulty.to_be_bytes());
        out[88..96].copy_from_slice(&self.nonce.to_be_bytes());
        out[96..128].copy_from_slice(self.miner.digest());
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != HEADER_LEN {
            return None;
        }
        Some(BlockHeader {
            parent_hash: bytes[0..32].try_into().unwrap(),
            height: u64::from_be_bytes(bytes[32..40].try_into().unwrap()),
            timestamp: u64::from_be_bytes(bytes[40..48].try_into().unwrap()),
            tx_merkle_root: bytes[48..80].try_into().unwrap(),
            difficulty: u64::from_be_bytes(bytes[80..88].try_into().unwrap()),
            nonce: u64::from_be_bytes(bytes[88..96].try_into().unwrap()),
            miner: Fingerprint::from_digest(bytes[96..128].try_into().unwrap()),
        })
    }
}

/// sha2-256 of the canonical header bytes.
pub fn block_hash(header: &BlockHeader) -> [u8; 32] {
    Sha256::digest(header.canonical_bytes()).into()
}

/// Binary SHA-256 merkle tree over transaction ids. The empty list hashes
/// to all zeroes; an odd level (including a single leaf) duplicates its
/// last node.
pub fn merkle_root(tx_ids: &[[u8; 32]]) -> [u8; 32] {
    if tx_ids.is_empty() {
        return [0u8; 32];
    }
    let mut level: Vec<[u8; 32]> = tx_ids.to_vec();
    let mut first = true;
    while level.len() > 1 || first {
        first = false;
        if level.len() % 2 == 1 {
            level.push(*level.last().unwrap());
        }
        level = level
            .chunks(2)
            .map(|pair| {
                let mut h = Sha256::new();
                h.update(pair[0]);
                h.update(pair[1]);
                h.finalize().into()
            })
            .collect();
    }
    level[0]
}

/// Comparison target for a difficulty: hashes below `floor(2^256 / d)`
/// win. Difficulty 1 admits every hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PowTarget(Option<[u8; 32]>);

impl PowTarget {
    pub fn for_difficulty(difficulty: u64) -> Result<Self, PowError> {
        match difficulty {
            0 => Err(PowError::ZeroDifficulty),
            1 => Ok(PowTarget(None)),
            d => Ok(PowTarget(Some(div_2_256(d)))),
        }
    }

    pub fn admits(&self, hash: &[u8; 32]) -> bool {
        match &self.0 {
            None => true,
            Some(target) => hash < target,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8; 32]> {
        self.0.as_ref()
    }
}

/// floor(2^256 / d) for d >= 2, which always fits in 32 bytes.
/// Byte-wise long division of the 33-byte value 0x01 00...00.
fn div_2_256(d: u64) -> [u8; 32] {
    let d = d as u128;
    let mut quotient = [0u8; 33];
    let mut remainder: u128 = 0;
    for (i, q) in quotient.iter_mut().enumerate() {
        let dividend = (remainder << 8) | if i == 0 { 1 } else { 0 };
        *q = (dividend / d) as u8;
        remainder = dividend % d;
    }
    debug_assert_eq!(quotient[0], 0);
    quotient[1..].try_into().unwrap()
}

/// True iff the header's hash meets its own difficulty target.
pub fn pow_valid(header: &BlockHeader) -> Result<bool, PowError> {
    let target = PowTarget::for_difficulty(header.difficulty)?;
    Ok(target.admits(&block_hash(header)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<RecordTransaction>,
}

impl Block {
    /// Header bytes, then a u32 transaction count, then each transaction
    /// length-prefixed with a u32.
    pub fn canonical_bytes(&self) -> Result<Vec<u8>, TxCodecError> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 + self.transactions.len() * 256);
        out.extend_from_slice(&self.header.canonical_bytes());
        out.extend_from_slice(&(self.transactions.len() as u32).to_be_bytes());
        for tx in &self.transactions {
            let bytes = canonical_tx_bytes(tx, true)?;
            out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
            out.extend_from_slice(&bytes);
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TxCodecError> {
        let err = TxCodecError::Malformed;
        if bytes.len() < HEADER_LEN + 4 {
            return Err(err("shorter than header"));
        }
        if bytes.len() > MAX_BLOCK_BYTES {
            return Err(err("exceeds block size cap"));
        }
        let header = BlockHeader::decode(&bytes[..HEADER_LEN]).ok_or(err("bad header"))?;
        let count =
            u32::from_be_bytes(bytes[HEADER_LEN..HEADER_LEN + 4].try_into().unwrap()) as usize;
        let mut at = HEADER_LEN + 4;
        let mut transactions = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            if at + 4 > bytes.len() {
                return Err(err("truncated transaction length"));
            }
            let len = u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
            at += 4;
            if at + len > bytes.len() {
                return Err(err("truncated transaction"));
            }
            transactions.push(decode_tx(&bytes[at..at + len])?);
            at += len;
        }
        if at != bytes.len() {
            return Err(err("trailing bytes"));
        }
        Ok(Block {
            header,
            transactions,
        })
    }

    pub fn hash(&self) -> [u8; 32] {
        block_hash(&self.header)
    }

    pub fn tx_ids(&self) -> Vec<[u8; 32]> {
        self.transactions.iter().map(super::tx::tx_id).collect()
    }
}

/// Typed rejection reasons from [`validate_block`].
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlockRejection {
    #[error("parent hash does not match")]
    ParentMismatch,
    #[error("height is not parent height + 1")]
    BadHeight,
    #[error("merkle root does not match transactions")]
    MerkleMismatch,
    #[error("proof of work does not meet the difficulty target")]
    InvalidPow,
    #[error("difficulty differs from chain configuration")]
    WrongDifficulty,
    #[error("timestamp precedes parent block")]
    TimestampBeforeParent,
    #[error("timestamp more than {MAX_TIMESTAMP_DRIFT_SECS}s in the future")]
    FutureTimestamp,
    #[error("block exceeds {MAX_BLOCK_BYTES} bytes")]
    Oversize,
    #[error("invalid transaction: {0}")]
    InvalidTransaction(TxRejection),
    #[error("block is already known")]
    AlreadyKnown,
    #[error("unencodable block")]
    Unencodable,
}

/// Validate a block against its parent header and the chain's fixed
/// difficulty. Transactions are checked individually (in parallel when
/// the `parallel` feature is on).
pub fn validate_block(
    block: &Block,
    parent: &BlockHeader,
    chain_difficulty: u64,
    clock: &dyn Clock,
) -> Result<(), BlockRejection> {
    let header = &block.header;
    if header.parent_hash != block_hash(parent) {
        return Err(BlockRejection::ParentMismatch);
    }
    if header.height != parent.height + 1 {
        return Err(BlockRejection::BadHeight);
    }
    if header.difficulty != chain_difficulty {
        return Err(BlockRejection::WrongDifficulty);
    }
    if header.timestamp < parent.timestamp {
        return Err(BlockRejection::TimestampBeforeParent);
    }
    if header.timestamp > clock.now_unix() + MAX_TIMESTAMP_DRIFT_SECS {
        return Err(BlockRejection::FutureTimestamp);
    }
    let encoded = block
        .canonical_bytes()
        .map_err(|_| BlockRejection::Unencodable)?;
    if encoded.len() > MAX_BLOCK_BYTES {
        return Err(BlockRejection::Oversize);
    }
    if header.tx_merkle_root != merkle_root(&block.tx_ids()) {
        return Err(BlockRejection::MerkleMismatch);
    }
    validate_all_txs(&block.transactions)?;
    if !pow_valid(header).map_err(|_| BlockRejection::WrongDifficulty)? {
        return Err(BlockRejection::InvalidPow);
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn validate_all_txs(txs: &[RecordTransaction]) -> Result<(), BlockRejection> {
    use rayon::prelude::*;
    txs.par_iter()
        .try_for_each(|tx| validate_tx(tx).map_err(BlockRejection::InvalidTransaction))
}

#[cfg(not(feature = "parallel"))]
fn validate_all_txs(txs: &[RecordTransaction]) -> Result<(), BlockRejection> {
    txs.iter()
        .try_for_each(|tx| validate_tx(tx).map_err(BlockRejection::InvalidTransaction))
}

/// Result of a mining attempt: either a solved block with the number of
/// nonce trials spent, or cancellation (head moved, mining switched off).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MineOutcome {
    Mined { block: Block, trials: u64 },
    Cancelled,
}

/// Nonces scanned between cancellation checks.
const MINE_WINDOW: u64 = 4096;
/// Parallel subdivision of a window; bounds trial overcounting.
#[cfg(feature = "parallel")]
const MINE_SUBCHUNK: u64 = 256;

/// Search for a valid nonce from a random starting point, assembling the
/// block for `parent` + `txs`. `cancel` is polled between windows.
pub fn mine_block(
    parent: &BlockHeader,
    txs: Vec<RecordTransaction>,
    miner: Fingerprint,
    difficulty: u64,
    clock: &dyn Clock,
    cancel: &dyn Fn() -> bool,
) -> Result<MineOutcome, PowError> {
    let target = PowTarget::for_difficulty(difficulty)?;
    let ids: Vec<[u8; 32]> = txs.iter().map(super::tx::tx_id).collect();
    let mut header = BlockHeader {
        parent_hash: block_hash(parent),
        height: parent.height + 1,
        timestamp: clock.now_unix().max(parent.timestamp),
        tx_merkle_root: merkle_root(&ids),
        difficulty,
        nonce: 0,
        miner,
    };
    let start: u64 = rand::random();
    let mut trials: u64 = 0;
    let mut offset: u64 = 0;
    loop {
        let window_start = start.wrapping_add(offset);
        match scan_window(&header, target, window_start, MINE_WINDOW) {
            WindowResult::Found { nonce, trials: t } => {
                trials += t;
                header.nonce = nonce;
                return Ok(MineOutcome::Mined {
                    block: Block {
                        header,
                        transactions: txs,
                    },
                    trials,
                });
            }
            WindowResult::Exhausted => trials += MINE_WINDOW,
        }
        offset = offset.wrapping_add(MINE_WINDOW);
        if cancel() {
            return Ok(MineOutcome::Cancelled);
        }
    }
}

#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowResult {
    Found { nonce: u64, trials: u64 },
    Exhausted,
}

fn try_nonce(header: &BlockHeader, target: PowTarget, nonce: u64) -> bool {
    let mut bytes = header.canonical_bytes();
    bytes[88..96].copy_from_slice(&nonce.to_be_bytes());
    let hash: [u8; 32] = Sha256::digest(bytes).into();
    target.admits(&hash)
}

fn scan_window(header: &BlockHeader, target: PowTarget, start: u64, len: u64) -> WindowResult {
    #[cfg(feature = "parallel")]
    {
        scan_window_parallel(header, target, start, len)
    }
    #[cfg(not(feature = "parallel"))]
    {
        scan_window_sequential(header, target, start, len)
    }
}

#[doc(hidden)]
pub fn scan_window_sequential(
    header: &BlockHeader,
    target: PowTarget,
    start: u64,
    len: u64,
) -> WindowResult {
    for i in 0..len {
        if try_nonce(header, target, start.wrapping_add(i)) {
            return WindowResult::Found {
                nonce: start.wrapping_add(i),
                trials: i + 1,
            };
        }
    }
    WindowResult::Exhausted
}

#[cfg(feature = "parallel")]
#[doc(hidden)]
pub fn scan_window_parallel(
    header: &BlockHeader,
    target: PowTarget,
    start: u64,
    len: u64,
) -> WindowResult {
    use rayon::prelude::*;
    use std::sync::atomic::{AtomicU64, Ordering};

    let trials = AtomicU64::new(0);
    let found = (0..len / MINE_SUBCHUNK)
        .into_par_iter()
        .find_map_any(|chunk| {
            let chunk_start = start.wrapping_add(chunk * MINE_SUBCHUNK);
            for i in 0..MINE_SUBCHUNK {
                if try_nonce(header, target, chunk_start.wrapping_add(i)) {
                    trials.fetch_add(i + 1, Ordering::Relaxed);
                    return Some(chunk_start.wrapping_add(i));
                }
            }
            trials.fetch_add(MINE_SUBCHUNK, Ordering::Relaxed);
            None
        });
    match found {
        Some(nonce) => WindowResult::Found {
            nonce,
            trials: trials.load(Ordering::Relaxed),
        },
        None => WindowResult::Exhausted,
    }
}
