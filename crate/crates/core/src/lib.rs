//! Core building blocks for a ddash node: a content-addressed blob store
//! with Merkle-DAG chunking, signing and encryption identities, and the
//! proof-of-work ledger of signed asset records.
//!
//! Everything here is deterministic and network-free; the `ddash-node`
//! crate composes these pieces into a running daemon.

pub mod clock;
pub mod identity;
pub mod ledger;
pub mod store;

pub use clock::{Clock, SystemClock};
pub use store::ContentId;
