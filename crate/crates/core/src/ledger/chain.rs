//! Chain state: block storage, cumulative-work fork choice, the content
//! id index answering `checkout`, the mempool, and orphan handling.

use std::collections::HashMap;
use std::sync::Arc;

use crate::clock::Clock;
use crate::ledger::block::{validate_block, Block, BlockRejection};
use crate::ledger::genesis::GenesisConfig;
use crate::ledger::mempool::Mempool;
use crate::ledger::tx::{tx_id, validate_tx, RecordTransaction, TxRejection};
use crate::store::ContentId;

/// Cap on blocks parked while waiting for their parent.
const ORPHAN_CAP: usize = 256;

/// What happened when a block was offered to the chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainEvent {
    /// The block extended the current head.
    Extended,
    /// The block displaced `depth` blocks of the previous head chain.
    Reorg { depth: u64 },
    /// Valid and stored, but on a branch with less work than the head.
    SideChained,
    /// Parent unknown; parked until the parent arrives.
    Orphaned,
    Rejected(BlockRejection),
}

/// Outcome of offering a transaction to the mempool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxAdmission {
    Admitted,
    AlreadyPending,
    AlreadyConfirmed,
}

/// Where a transaction lives on the head chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxLocation {
    pub block_hash: [u8; 32],
    pub height: u64,
    pub tx_index: usize,
}

#[derive(Debug, Clone)]
struct BlockEntry {
    block: Block,
    cumulative_work: u128,
}

pub struct ChainState {
    genesis: GenesisConfig,
    genesis_hash: [u8; 32],
    blocks: HashMap<[u8; 32], BlockEntry>,
    /// Head-chain hashes indexed by height; last entry is the head.
    head_chain: Vec<[u8; 32]>,
    /// ContentId -> chain-ordered transaction locations on the head chain.
    index: HashMap<ContentId, Vec<TxLocation>>,
    /// Transaction ids confirmed on the head chain.
    confirmed: HashMap<[u8; 32], TxLocation>,
    mempool: Mempool,
    orphans: HashMap<[u8; 32], Vec<Block>>,
    orphan_count: usize,
    clock: Arc<dyn Clock>,
    /// Events produced while reconnecting orphans inside an accept call.
    pending_events: Vec<([u8; 32], ChainEvent)>,
}

impl ChainState {
    pub fn new(genesis: GenesisConfig, clock: Arc<dyn Clock>) -> Self {
        let block = genesis.genesis_block();
        let hash = block.hash();
        let mut blocks = HashMap::new();
        blocks.insert(
            hash,
            BlockEntry {
                block,
                cumulative_work: genesis.difficulty as u128,
            },
        );
        ChainState {
            genesis,
            genesis_hash: hash,
            blocks,
            head_chain: vec![hash],
            index: HashMap::new(),
            confirmed: HashMap::new(),
            mempool: Mempool::new(),
            orphans: HashMap::new(),
            orphan_count: 0,
            clock,
            pending_events: Vec::new(),
        }
    }

    pub fn genesis(&self) -> &GenesisConfig {
        &self.genesis
    }

    pub fn genesis_hash(&self) -> [u8; 32] {
        self.genesis_hash
    }

    pub fn head_hash(&self) -> [u8; 32] {
        *self.head_chain.last().expect("genesis always present")
    }

    pub fn head_block(&self) -> &Block {
        &self.blocks[&self.head_hash()].block
    }

    pub fn height(&self) -> u64 {
        self.head_chain.len() as u64 - 1
    }

    pub fn cumulative_work(&self) -> u128 {
        self.blocks[&self.head_hash()].cumulative_work
    }

    pub fn block(&self, hash: &[u8; 32]) -> Option<&Block> {
        self.blocks.get(hash).map(|e| &e.block)
    }

    pub fn block_at_height(&self, height: u64) -> Option<&Block> {
        let hash = self.head_chain.get(height as usize)?;
        self.block(hash)
    }

    pub fn is_on_head_chain(&self, hash: &[u8; 32]) -> bool {
        self.blocks
            .get(hash)
            .map(|e| {
                self.head_chain.get(e.block.header.height as usize) == Some(hash)
            })
            .unwrap_or(false)
    }

    pub fn mempool(&self) -> &Mempool {
        &self.mempool
    }

    pub fn is_confirmed(&self, txid: &[u8; 32]) -> Option<TxLocation> {
        self.confirmed.get(txid).copied()
    }

    /// Offer a transaction for mempool admission. Invalid transactions
    /// are rejected; duplicates and already-mined transactions are
    /// reported without error.
    pub fn admit_tx(&mut self, tx: RecordTransaction) -> Result<([u8; 32], TxAdmission), TxRejection> {
        validate_tx(&tx)?;
        let id = tx_id(&tx);
        if self.confirmed.contains_key(&id) {
            return Ok((id, TxAdmission::AlreadyConfirmed));
        }
        if !self.mempool.insert(id, tx) {
            return Ok((id, TxAdmission::AlreadyPending));
        }
        Ok((id, TxAdmission::Admitted))
    }

    /// Pending transactions for a block template, FIFO, respecting the
    /// block byte budget.
    pub fn mempool_snapshot(&self, max_bytes: usize) -> Vec<RecordTransaction> {
        let mut out = Vec::new();
        let mut budget = max_bytes;
        for (_, tx) in self.mempool.iter_fifo() {
            let cost = crate::ledger::tx::canonical_tx_bytes(tx, true)
                .map(|b| b.len() + 4)
                .unwrap_or(usize::MAX);
            if cost > budget {
                break;
            }
            budget -= cost;
            out.push(tx.clone());
        }
        out
    }

    /// Offer a block. Applies greatest-cumulative-work fork choice with a
    /// smaller-hash tie break, maintains the content index, and recycles
    /// displaced transactions through the mempool on reorgs.
    pub fn accept_block(&mut self, block: Block) -> ChainEvent {
        let event = self.accept_inner(block);
        // connecting a parent may unlock parked orphans
        if !matches!(event, ChainEvent::Rejected(_) | ChainEvent::Orphaned) {
            self.connect_orphans();
        }
        event
    }

    /// Events generated for orphans connected during `accept_block`, in
    /// processing order. Callers that log events should drain these.
    pub fn drain_pending_events(&mut self) -> Vec<([u8; 32], ChainEvent)> {
        std::mem::take(&mut self.pending_events)
    }

    fn accept_inner(&mut self, block: Block) -> ChainEvent {
        let hash = block.hash();
        if self.blocks.contains_key(&hash) {
            return ChainEvent::Rejected(BlockRejection::AlreadyKnown);
        }
        let Some(parent) = self.blocks.get(&block.header.parent_hash) else {
            self.park_orphan(block);
            return ChainEvent::Orphaned;
        };
        let parent_work = parent.cumulative_work;
        if let Err(reason) = validate_block(
            &block,
            &parent.block.header,
            self.genesis.difficulty,
            self.clock.as_ref(),
        ) {
            return ChainEvent::Rejected(reason);
        }

        let work = parent_work + block.header.difficulty as u128;
        let old_head = self.head_hash();
        let old_work = self.cumulative_work();
        self.blocks.insert(
            hash,
            BlockEntry {
                block,
                cumulative_work: work,
            },
        );

        let wins = work > old_work || (work == old_work && hash < old_head);
        if !wins {
            return ChainEvent::SideChained;
        }
        if self.blocks[&hash].block.header.parent_hash == old_head {
            self.extend_head(hash);
            ChainEvent::Extended
        } else {
            let depth = self.reorg_to(hash);
            ChainEvent::Reorg { depth }
        }
    }

    fn extend_head(&mut self, hash: [u8; 32]) {
        let block = self.blocks[&hash].block.clone();
        self.head_chain.push(hash);
        self.index_block(&block, hash);
    }

    /// Switch the head to `new_head`, rebuilding the content index from
    /// the new head chain and returning displaced transactions to the
    /// mempool. Returns the number of displaced blocks.
    fn reorg_to(&mut self, new_head: [u8; 32]) -> u64 {
        let new_chain = self.chain_to_genesis(new_head);
        let fork_height = self
            .head_chain
            .iter()
            .zip(new_chain.iter())
            .take_while(|(old, new)| old == new)
            .count();
        let displaced: Vec<[u8; 32]> = self.head_chain[fork_height..].to_vec();
        let depth = displaced.len() as u64;

        self.head_chain = new_chain;
        self.rebuild_index();

        // displaced transactions go back to the mempool unless the new
        // chain already confirmed them
        for hash in displaced {
            let txs = self.blocks[&hash].block.transactions.clone();
            for tx in txs {
                let id = tx_id(&tx);
                if !self.confirmed.contains_key(&id) && validate_tx(&tx).is_ok() {
                    self.mempool.insert(id, tx);
                }
            }
        }
        // and anything newly confirmed leaves the mempool
        let confirmed: Vec<[u8; 32]> = self.confirmed.keys().copied().collect();
        for id in confirmed {
            self.mempool.remove(&id);
        }
        depth
    }

    fn chain_to_genesis(&self, tip: [u8; 32]) -> Vec<[u8; 32]> {
        let mut chain = Vec::new();
        let mut cursor = tip;
        loop {
            chain.push(cursor);
            if cursor == self.genesis_hash {
                break;
            }
            cursor = self.blocks[&cursor].block.header.parent_hash;
        }
        chain.reverse();
        chain
    }

    fn index_block(&mut self, block: &Block, hash: [u8; 32]) {
        for (tx_index, tx) in block.transactions.iter().enumerate() {
            let location = TxLocation {
                block_hash: hash,
                height: block.header.height,
                tx_index,
            };
            self.index.entry(tx.content_id).or_default().push(location);
            self.confirmed.insert(tx_id(tx), location);
            self.mempool.remove(&tx_id(tx));
        }
    }

    fn rebuild_index(&mut self) {
        self.index.clear();
        self.confirmed.clear();
        let chain = self.head_chain.clone();
        for hash in chain {
            let block = self.blocks[&hash].block.clone();
            self.index_block(&block, hash);
        }
    }

    /// Independent reconstruction of the content index by walking the head
    /// chain; used to cross-check the incrementally maintained index.
    pub fn rebuilt_index_snapshot(&self) -> HashMap<ContentId, Vec<TxLocation>> {
        let mut index: HashMap<ContentId, Vec<TxLocation>> = HashMap::new();
        for hash in &self.head_chain {
            let block = &self.blocks[hash].block;
            for (tx_index, tx) in block.transactions.iter().enumerate() {
                index.entry(tx.content_id).or_default().push(TxLocation {
                    block_hash: *hash,
                    height: block.header.height,
                    tx_index,
                });
            }
        }
        index
    }

    pub fn index_snapshot(&self) -> HashMap<ContentId, Vec<TxLocation>> {
        self.index.clone()
    }

    fn park_orphan(&mut self, block: Block) {
        if self.orphan_count >= ORPHAN_CAP {
            return;
        }
        self.orphan_count += 1;
        self.orphans
            .entry(block.header.parent_hash)
            .or_default()
            .push(block);
    }

    fn connect_orphans(&mut self) {
        let mut ready: Vec<[u8; 32]> = self
            .orphans
            .keys()
            .filter(|parent| self.blocks.contains_key(*parent))
            .copied()
            .collect();
        while let Some(parent) = ready.pop() {
            let Some(children) = self.orphans.remove(&parent) else {
                continue;
            };
            self.orphan_count -= children.len();
            for child in children {
                let hash = child.hash();
                let event = self.accept_inner(child);
                self.pending_events.push((hash, event));
                if self.orphans.contains_key(&hash) {
                    ready.push(hash);
                }
            }
        }
    }

    /// All head-chain transactions recording `id`, in chain order.
    pub fn checkout(&self, id: &ContentId) -> Vec<RecordTransaction> {
        let Some(locations) = self.index.get(id) else {
            return Vec::new();
        };
        locations
            .iter()
            .map(|loc| self.blocks[&loc.block_hash].block.transactions[loc.tx_index].clone())
            .collect()
    }

    /// Head-chain locations for `id`, for callers that need block context.
    pub fn checkout_locations(&self, id: &ContentId) -> Vec<TxLocation> {
        self.index.get(id).cloned().unwrap_or_default()
    }

    /// Exponentially spaced head-chain hashes, newest first, always ending
    /// at genesis; the remote finds the latest common ancestor.
    pub fn locator(&self) -> Vec<[u8; 32]> {
        let mut out = Vec::new();
        let head = self.height();
        let mut step: u64 = 1;
        let mut height = head;
        loop {
            out.push(self.head_chain[height as usize]);
            if height == 0 {
                break;
            }
            if out.len() >= 8 {
                step *= 2;
            }
            height = height.saturating_sub(step);
        }
        out
    }

    /// Serve a locator: head-chain blocks after the latest locator entry
    /// found on the head chain, capped at `limit`. Genesis is never served
    /// (the handshake guarantees the peer has it).
    pub fn blocks_after(&self, locator: &[[u8; 32]], limit: usize) -> Vec<Block> {
        let mut start_height = 1u64;
        for hash in locator {
            if self.is_on_head_chain(hash) {
                start_height = self.blocks[hash].block.header.height + 1;
                break;
            }
        }
        self.head_chain
            .iter()
            .skip(start_height as usize)
            .take(limit)
            .map(|hash| self.blocks[hash].block.clone())
            .collect()
    }
}
