//! The ddash node: peer-to-peer gossip and sync over a length-framed TCP
//! protocol, a single-writer chain service, the daemon composition root,
//! and the loopback JSON control protocol the CLI drives.

mod control;
pub mod node;
pub mod peer;
pub mod service;
pub mod wire;

pub use node::{
    CheckoutFailure, CheckoutReport, Node, NodeConfig, NodeError, PublishAccess, PublishReceipt,
    RecordView, SanityReport, StartError, StartOptions, DEFAULT_CONTROL_PORT, DEFAULT_LISTEN_PORT,
};
pub use peer::{ConnectError, FetchError, FrameTap, HandshakeRejection, PeerInfo, PeerManager};
pub use service::{ChainEventRecord, ChainService};
