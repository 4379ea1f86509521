//! Shared helpers for multi-node integration tests.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use ddash_core::clock::SystemClock;
use ddash_core::identity::{fingerprint, Fingerprint, Identity};
use ddash_core::ledger::{
    mine_block, AccessPolicy, Block, GenesisConfig, MineOutcome, RecordTransaction,
};
use ddash_core::store::ContentId;
use ddash_node::{Node, NodeConfig, StartOptions};

pub const TEST_NETWORK_ID: u32 = 4828;
pub const TEST_DIFFICULTY: u64 = 1000;

pub fn write_genesis(dir: &Path, difficulty: u64, comment: &str) -> PathBuf {
    let genesis = GenesisConfig {
        network_id: TEST_NETWORK_ID,
        difficulty,
        timestamp: 1_505_088_000,
        comment: comment.to_string(),
    };
    let path = dir.join(format!("genesis-{comment}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&genesis).unwrap()).unwrap();
    path
}

pub fn node_config(root: &Path, name: &str, genesis: &Path) -> NodeConfig {
    let mut cfg = NodeConfig::new(root.join(name));
    cfg.genesis_path = Some(genesis.to_path_buf());
    cfg.listen_port = 0;
    cfg.control_port = 0;
    cfg
}

pub fn start_node(root: &Path, name: &str, genesis: &Path) -> Node {
    Node::start(node_config(root, name, genesis)).unwrap()
}

pub fn start_node_with(root: &Path, name: &str, genesis: &Path, options: StartOptions) -> Node {
    Node::start_with(node_config(root, name, genesis), options).unwrap()
}

/// Mine one block on the node's current head and submit + broadcast it.
pub fn mine_one(node: &Node, txs: Vec<RecordTransaction>) -> Block {
    let (parent, difficulty) = {
        let chain = node.chain().read();
        (
            chain.head_block().header.clone(),
            chain.genesis().difficulty,
        )
    };
    let MineOutcome::Mined { block, .. } = mine_block(
        &parent,
        txs,
        fingerprint(&[0xaa; 32]).unwrap(),
        difficulty,
        &SystemClock,
        &|| false,
    )
    .unwrap() else {
        unreachable!("uncancelled mining solves");
    };
    node.submit_block(block.clone());
    block
}

pub fn sample_identity(seed: u8) -> Identity {
    Identity::from_secret_bytes(&[seed; 32])
}

pub fn now_unix() -> u64 {
    use ddash_core::clock::Clock;
    SystemClock.now_unix()
}

pub fn public_record(seed: u8, payload: &[u8], description: &str) -> RecordTransaction {
    RecordTransaction::build_signed(
        ContentId::for_payload(payload),
        AccessPolicy::Public,
        description,
        now_unix(),
        &sample_identity(seed),
    )
    .unwrap()
}

pub fn restricted_record(seed: u8, payload: &[u8], recipients: Vec<Fingerprint>) -> RecordTransaction {
    RecordTransaction::build_signed(
        ContentId::for_payload(payload),
        AccessPolicy::restricted(recipients),
        "restricted record",
        now_unix(),
        &sample_identity(seed),
    )
    .unwrap()
}

/// Poll until `cond` holds or the timeout elapses; returns whether it held.
pub fn wait_until(timeout: Duration, mut cond: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + timeout;
    loop {
        if cond() {
            return true;
        }
        if Instant::now() >= deadline {
            return false;
        }
        std::thread::sleep(Duration::from_millis(25));
    }
}

pub fn heads_equal(nodes: &[&Node]) -> bool {
    let mut heads = nodes
        .iter()
        .map(|n| n.chain().read().head_hash());
    let first = heads.next().unwrap();
    heads.all(|h| h == first)
}

/// Default start options plus a frame tap that appends every frame body to
/// a shared buffer.
pub fn tap_options(buffer: Arc<std::sync::Mutex<Vec<Vec<u8>>>>) -> StartOptions {
    let mut options = StartOptions::default();
    options.frame_tap = Some(Arc::new(move |_outbound, _remote, body: &[u8]| {
        buffer.lock().unwrap().push(body.to_vec());
    }));
    options
}
