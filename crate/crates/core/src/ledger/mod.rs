//! The proof-of-work ledger: signed record transactions, blocks, chain
//! state with fork choice and the checkout index, genesis configuration,
//! and the append-only block log.

mod block;
mod chain;
mod genesis;
mod log;
mod mempool;
mod tx;

pub use block::{
    block_hash, merkle_root, mine_block, pow_valid, validate_block, Block, BlockHeader,
    BlockRejection, MineOutcome, PowError, PowTarget, HEADER_LEN, MAX_BLOCK_BYTES,
    MAX_TIMESTAMP_DRIFT_SECS,
};
#[cfg(feature = "parallel")]
#[doc(hidden)]
pub use block::scan_window_parallel;
#[doc(hidden)]
pub use block::{scan_window_sequential, WindowResult};
pub use chain::{ChainEvent, ChainState, TxAdmission, TxLocation};
pub use genesis::{GenesisConfig, GenesisError};
pub use log::{ChainLog, ReplayStats};
pub use mempool::{Mempool, MEMPOOL_CAP};
pub use tx::{
    canonical_tx_bytes, decode_tx, tx_id, validate_tx, AccessPolicy, RecordTransaction,
    TxCodecError, TxRejection, MAX_DESCRIPTION_BYTES,
};
