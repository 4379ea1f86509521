//! Pending valid transactions, FIFO-ordered with FIFO eviction beyond the
//! capacity cap.

use std::collections::{HashMap, VecDeque};

use crate::ledger::tx::RecordTransaction;

pub const MEMPOOL_CAP: usize = 10_000;

#[derive(Debug, Default)]
pub struct Mempool {
    by_id: HashMap<[u8; 32], RecordTransaction>,
    order: VecDeque<[u8; 32]>,
}

impl Mempool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert an already-validated transaction. Returns false when the id
    /// is already pending. Evicts the oldest entry beyond capacity.
    pub fn insert(&mut self, id: [u8; 32], tx: RecordTransaction) -> bool {
        if self.by_id.contains_key(&id) {
            return false;
        }
        self.by_id.insert(id, tx);
        self.order.push_back(id);
        while self.by_id.len() > MEMPOOL_CAP {
            if let Some(evicted) = self.order.pop_front() {
                self.by_id.remove(&evicted);
            }
        }
        true
    }

    pub fn remove(&mut self, id: &[u8; 32]) -> Option<RecordTransaction> {
        let removed = self.by_id.remove(id);
        if removed.is_some() {
            self.order.retain(|queued| queued != id);
        }
        removed
    }

    pub fn contains(&self, id: &[u8; 32]) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn get(&self, id: &[u8; 32]) -> Option<&RecordTransaction> {
        self.by_id.get(id)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    /// Pending transactions in arrival order.
    pub fn iter_fifo(&self) -> impl Iterator<Item = (&[u8; 32], &RecordTransaction)> {
        self.order.iter().filter_map(|id| Some((id, self.by_id.get(id)?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::Identity;
    use crate::ledger::tx::{tx_id, AccessPolicy, RecordTransaction};
    use crate::store::ContentId;

    fn tx(n: u64) -> ([u8; 32], RecordTransaction) {
        let identity = Identity::from_secret_bytes(&[1u8; 32]);
        let tx = RecordTransaction::build_signed(
            ContentId::for_payload(&n.to_be_bytes()),
            AccessPolicy::Public,
            "t",
            n,
            &identity,
        )
        .unwrap();
        (tx_id(&tx), tx)
    }

    #[test]
    fn duplicate_ids_do_not_double_insert() {
        let mut pool = Mempool::new();
        let (id, t) = tx(1);
        assert!(pool.insert(id, t.clone()));
        assert!(!pool.insert(id, t));
        assert_eq!(pool.len(), 1);
    }

    #[test]
    fn fifo_order_and_eviction() {
        let mut pool = Mempool::new();
        for n in 0..5 {
            let (id, t) = tx(n);
            pool.insert(id, t);
        }
        let timestamps: Vec<u64> = pool.iter_fifo().map(|(_, t)| t.timestamp).collect();
        assert_eq!(timestamps, vec![0, 1, 2, 3, 4]);
    }
}
