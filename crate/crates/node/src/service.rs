//! Single-writer wrapper around the chain state: every mutation (mined
//! blocks, gossiped blocks, replayed blocks, mempool admissions) funnels
//! through here, which also appends accepted blocks to the chain log and
//! fans out chain events to subscribers.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};

use ddash_core::clock::Clock;
use ddash_core::ledger::{
    Block, ChainEvent, ChainLog, ChainState, GenesisConfig, RecordTransaction, TxAdmission,
    TxRejection,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainEventRecord {
    pub block_hash: [u8; 32],
    pub height: u64,
    pub event: ChainEvent,
}

const EVENT_LOG_CAP: usize = 2048;

pub struct ChainService {
    state: RwLock<ChainState>,
    log: Mutex<Option<ChainLog>>,
    /// Bumped whenever the head changes; miners watch this to abort.
    generation: AtomicU64,
    events: Mutex<Vec<ChainEventRecord>>,
    subscribers: Mutex<Vec<mpsc::Sender<ChainEventRecord>>>,
}

impl ChainService {
    pub fn new(genesis: GenesisConfig, clock: Arc<dyn Clock>, log: Option<ChainLog>) -> Self {
        ChainService {
            state: RwLock::new(ChainState::new(genesis, clock)),
            log: Mutex::new(log),
            generation: AtomicU64::new(0),
            events: Mutex::new(Vec::new()),
            subscribers: Mutex::new(Vec::new()),
        }
    }

    pub fn read(&self) -> RwLockReadGuard<'_, ChainState> {
        self.state.read().expect("chain lock poisoned")
    }

    /// Attach (or replace) the append-only log; used after replaying an
    /// existing log so replayed blocks are not re-appended.
    pub fn attach_log(&self, log: ChainLog) {
        *self.log.lock().expect("log lock poisoned") = Some(log);
    }

    pub fn generation(&self) -> u64 {
        self.generation.load(Ordering::Acquire)
    }

    /// Offer a block through the single-writer path. Stored blocks are
    /// appended to the chain log in acceptance order.
    pub fn submit_block(&self, block: Block) -> ChainEvent {
        let hash = block.hash();
        let height = block.header.height;
        let mut state = self.state.write().expect("chain lock poisoned");
        let event = state.accept_block(block.clone());
        let mut records = vec![ChainEventRecord {
            block_hash: hash,
            height,
            event: event.clone(),
        }];
        for (orphan_hash, orphan_event) in state.drain_pending_events() {
            let orphan_height = state
                .block(&orphan_hash)
                .map(|b| b.header.height)
                .unwrap_or(0);
            records.push(ChainEventRecord {
                block_hash: orphan_hash,
                height: orphan_height,
                event: orphan_event,
            });
        }
        let mut log = self.log.lock().expect("log lock poisoned");
        for record in &records {
            let stored = matches!(
                record.event,
                ChainEvent::Extended | ChainEvent::Reorg { .. } | ChainEvent::SideChained
            );
            if stored {
                if let Some(log) = log.as_mut() {
                    if let Some(block) = state.block(&record.block_hash) {
                        if let Err(e) = log.append(block) {
                            log::error!("chain log append failed: {e}");
                        }
                    }
                }
            }
            if matches!(
                record.event,
                ChainEvent::Extended | ChainEvent::Reorg { .. }
            ) {
                self.generation.fetch_add(1, Ordering::Release);
            }
        }
        drop(log);
        drop(state);
        self.publish_events(records);
        event
    }

    /// Replay path: accept without logging (the block came from the log).
    pub fn replay_block(&self, block: Block) -> ChainEvent {
        let mut state = self.state.write().expect("chain lock poisoned");
        let event = state.accept_block(block);
        state.drain_pending_events();
        if matches!(event, ChainEvent::Extended | ChainEvent::Reorg { .. }) {
            self.generation.fetch_add(1, Ordering::Release);
        }
        event
    }

    pub fn admit_tx(
        &self,
        tx: RecordTransaction,
    ) -> Result<([u8; 32], TxAdmission), TxRejection> {
        let mut state = self.state.write().expect("chain lock poisoned");
        state.admit_tx(tx)
    }

    pub fn subscribe(&self) -> mpsc::Receiver<ChainEventRecord> {
        let (tx, rx) = mpsc::channel();
        self.subscribers
            .lock()
            .expect("subscribers lock poisoned")
            .push(tx);
        rx
    }

    /// Recent chain events, oldest first (bounded).
    pub fn recent_events(&self) -> Vec<ChainEventRecord> {
        self.events.lock().expect("events lock poisoned").clone()
    }

    fn publish_events(&self, records: Vec<ChainEventRecord>) {
        let mut events = self.events.lock().expect("events lock poisoned");
        for record in &records {
            events.push(record.clone());
        }
        let overflow = events.len().saturating_sub(EVENT_LOG_CAP);
        if overflow > 0 {
            events.drain(..overflow);
        }
        drop(events);
        let mut subscribers = self.subscribers.lock().expect("subscribers lock poisoned");
        subscribers.retain(|sub| {
            records
                .iter()
                .all(|record| sub.send(record.clone()).is_ok())
        });
    }
}
