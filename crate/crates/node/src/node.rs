//! Composition root: configuration, lifecycle, the publish/checkout flows,
//! mining control, and the background threads (listener, miner, control
//! server, housekeeping).

use std::net::{Ipv4Addr, SocketAddr, TcpListener, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use ddash_core::clock::{Clock, SystemClock};
use ddash_core::identity::{
    decrypt, encrypt_for, ContainerError, EncryptedContainer, Fingerprint, KeyEntry, Keyring,
    KeyringError,
};
use ddash_core::ledger::{
    mine_block, AccessPolicy, ChainEvent, ChainLog, GenesisConfig, GenesisError, MineOutcome,
    RecordTransaction, TxAdmission, TxCodecError, TxLocation, TxRejection, HEADER_LEN,
    MAX_BLOCK_BYTES,
};
use ddash_core::store::{ContentId, ContentIdError, ContentStore, StoreError};

use crate::peer::{ConnectError, FetchError, FrameTap, NetworkConfig, PeerInfo, PeerManager};
use crate::service::{ChainEventRecord, ChainService};

pub const DEFAULT_LISTEN_PORT: u16 = 30303;
pub const DEFAULT_CONTROL_PORT: u16 = 8545;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeConfig {
    pub data_dir: PathBuf,
    /// Defaults to `<data_dir>/genesis.json`.
    #[serde(default)]
    pub genesis_path: Option<PathBuf>,
    #[serde(default = "default_listen_port")]
    pub listen_port: u16,
    /// Control socket; always bound to loopback.
    #[serde(default = "default_control_port")]
    pub control_port: u16,
    #[serde(default)]
    pub static_peers: Vec<String>,
    #[serde(default)]
    pub mining_enabled: bool,
}

fn default_listen_port() -> u16 {
    DEFAULT_LISTEN_PORT
}

fn default_control_port() -> u16 {
    DEFAULT_CONTROL_PORT
}

impl NodeConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        NodeConfig {
            data_dir: data_dir.into(),
            genesis_path: None,
            listen_port: DEFAULT_LISTEN_PORT,
            control_port: DEFAULT_CONTROL_PORT,
            static_peers: Vec::new(),
            mining_enabled: false,
        }
    }

    pub fn load(path: &Path) -> Result<Self, StartError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text).map_err(StartError::Config)?)
    }

    pub fn genesis_path(&self) -> PathBuf {
        self.genesis_path
            .clone()
            .unwrap_or_else(|| self.data_dir.join("genesis.json"))
    }

    pub fn chain_log_path(&self) -> PathBuf {
        self.data_dir.join("chain.log")
    }
}

/// Knobs tests use; `Node::start` applies the defaults.
pub struct StartOptions {
    pub clock: Arc<dyn Clock>,
    pub frame_tap: Option<FrameTap>,
    /// Pause after each locally mined block so easy-difficulty chains do
    /// not grow unboundedly fast.
    pub mine_pacing: Duration,
}

impl Default for StartOptions {
    fn default() -> Self {
        StartOptions {
            clock: Arc::new(SystemClock),
            frame_tap: None,
            mine_pacing: Duration::from_millis(150),
        }
    }
}

#[derive(Debug, Error)]
pub enum StartError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Config(serde_json::Error),
    #[error("genesis: {0}")]
    Genesis(#[from] GenesisError),
    #[error("existing chain.log does not descend from the configured genesis")]
    GenesisMismatch,
    #[error("cannot bind port: {0}")]
    PortInUse(std::io::Error),
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("keyring: {0}")]
    Keyring(#[from] KeyringError),
}

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("keyring: {0}")]
    Keyring(#[from] KeyringError),
    #[error("container: {0}")]
    Container(#[from] ContainerError),
    #[error("transaction: {0}")]
    TxCodec(#[from] TxCodecError),
    #[error("transaction rejected: {0}")]
    TxRejected(#[from] TxRejection),
    #[error("content id: {0}")]
    ContentId(#[from] ContentIdError),
    #[error("content unavailable from store and peers")]
    Unavailable,
    #[error("connect: {0}")]
    Connect(#[from] ConnectError),
    #[error("cannot resolve peer address {0}")]
    BadPeerAddress(String),
}

impl NodeError {
    /// Stable machine-readable kind for the control protocol.
    pub fn kind(&self) -> &'static str {
        match self {
            NodeError::Io(_) => "io",
            NodeError::Store(StoreError::NotFound(_)) => "not_found",
            NodeError::Store(_) => "store",
            NodeError::Keyring(KeyringError::UnknownFingerprint(_)) => "unknown_recipient",
            NodeError::Keyring(KeyringError::NoSuchIndex(_))
            | NodeError::Keyring(KeyringError::NoSecret(_)) => "bad_index",
            NodeError::Keyring(_) => "keyring",
            NodeError::Container(ContainerError::NotRecipient(_)) => "not_recipient",
            NodeError::Container(ContainerError::Tamper) => "tamper",
            NodeError::Container(_) => "container",
            NodeError::TxCodec(_) => "validation",
            NodeError::TxRejected(_) => "validation",
            NodeError::ContentId(_) => "validation",
            NodeError::Unavailable => "unavailable",
            NodeError::Connect(_) => "connect",
            NodeError::BadPeerAddress(_) => "connect",
        }
    }
}

impl From<FetchError> for NodeError {
    fn from(e: FetchError) -> Self {
        match e {
            FetchError::Unavailable => NodeError::Unavailable,
            FetchError::Store(e) => NodeError::Store(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublishReceipt {
    pub content_id: ContentId,
    pub tx_id: [u8; 32],
}

#[derive(Debug, Clone, Serialize)]
pub struct RecordView {
    pub content_id: String,
    pub owner: String,
    pub owner_short: String,
    pub access: Vec<String>,
    pub public: bool,
    pub description: String,
    pub timestamp: u64,
    pub height: u64,
    pub tx_id: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckoutFailure {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct CheckoutReport {
    pub records: Vec<RecordView>,
    pub plaintext: Option<Vec<u8>>,
    pub failure: Option<CheckoutFailure>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SanityReport {
    pub store_ok: bool,
    pub height: u64,
    pub peer_count: usize,
    pub mining: bool,
}

impl SanityReport {
    pub fn healthy(&self) -> bool {
        self.store_ok
    }

    pub fn message(&self) -> String {
        if self.healthy() {
            "store and ledger appear to be running.".to_string()
        } else {
            "store is not reachable.".to_string()
        }
    }
}

#[derive(Debug, Clone)]
pub struct StagedEncryption {
    pub path: PathBuf,
    pub recipients: Vec<Fingerprint>,
    pub container_len: u64,
}

pub(crate) struct NodeInner {
    cfg: NodeConfig,
    genesis: GenesisConfig,
    clock: Arc<dyn Clock>,
    store: ContentStore,
    keyring: RwLock<Keyring>,
    chain: Arc<ChainService>,
    peers: PeerManager,
    mining: AtomicBool,
    shutdown: AtomicBool,
    listen_addr: SocketAddr,
    control_addr: SocketAddr,
    mine_pacing: Duration,
    miner: Fingerprint,
    threads: Mutex<Vec<JoinHandle<()>>>,
}

/// A running node. Shuts down (and joins its threads) on drop.
pub struct Node {
    inner: Arc<NodeInner>,
}

impl Node {
    pub fn start(cfg: NodeConfig) -> Result<Node, StartError> {
        Node::start_with(cfg, StartOptions::default())
    }

    pub fn start_with(cfg: NodeConfig, options: StartOptions) -> Result<Node, StartError> {
        std::fs::create_dir_all(&cfg.data_dir)?;
        let genesis = GenesisConfig::load(&cfg.genesis_path())?;
        let genesis_hash = genesis.genesis_hash();
        let store = ContentStore::open(cfg.data_dir.join("objects"))?;
        let keyring = Keyring::open(cfg.data_dir.join("keys"))?;

        let chain = Arc::new(ChainService::new(
            genesis.clone(),
            Arc::clone(&options.clock),
            None,
        ));
        // replay persisted blocks; a log whose first block does not attach
        // to this genesis is a different network's history
        let mut first_parent: Option<[u8; 32]> = None;
        let replay = ChainLog::replay(&cfg.chain_log_path(), |block| {
            if first_parent.is_none() {
                first_parent = Some(block.header.parent_hash);
            }
            chain.replay_block(block);
        })?;
        if let Some(parent) = first_parent {
            if parent != genesis_hash && chain.read().height() == 0 {
                return Err(StartError::GenesisMismatch);
            }
        }
        if replay.truncated {
            log::warn!("chain.log had a torn tail record; truncated");
        }
        if replay.records > 0 {
            log::info!(
                "replayed {} blocks, height {}",
                replay.records,
                chain.read().height()
            );
        }
        chain.attach_log(ChainLog::open(cfg.chain_log_path())?);

        // the ledger needs a signing identity from the first interaction
        if keyring.accounts()?.is_empty() {
            keyring.generate_identity()?;
        }
        let miner = keyring.accounts()?[0].fingerprint;

        let listener = TcpListener::bind((Ipv4Addr::UNSPECIFIED, cfg.listen_port))
            .map_err(StartError::PortInUse)?;
        let listen_addr = listener.local_addr()?;
        let control_listener = TcpListener::bind((Ipv4Addr::LOCALHOST, cfg.control_port))
            .map_err(StartError::PortInUse)?;
        let control_addr = control_listener.local_addr()?;

        let peers = PeerManager::new(
            NetworkConfig::new(genesis.network_id, genesis_hash, listen_addr.port()),
            Arc::clone(&chain),
            store.clone(),
            options.frame_tap,
        );

        let inner = Arc::new(NodeInner {
            mining: AtomicBool::new(cfg.mining_enabled),
            cfg,
            genesis,
            clock: options.clock,
            store,
            keyring: RwLock::new(keyring),
            chain,
            peers,
            shutdown: AtomicBool::new(false),
            listen_addr,
            control_addr,
            mine_pacing: options.mine_pacing,
            miner,
            threads: Mutex::new(Vec::new()),
        });

        let mut threads = Vec::new();
        {
            let peers = inner.peers.handle();
            threads.push(std::thread::spawn(move || peers.run_listener(listener)));
        }
        {
            let inner = Arc::clone(&inner);
            threads.push(std::thread::spawn(move || {
                crate::control::run_control_server(control_listener, inner)
            }));
        }
        {
            let inner = Arc::clone(&inner);
            threads.push(std::thread::spawn(move || inner.run_miner()));
        }
        {
            let inner = Arc::clone(&inner);
            threads.push(std::thread::spawn(move || inner.run_housekeeping()));
        }
        *inner.threads.lock().expect("threads lock") = threads;

        for peer in inner.cfg.static_peers.clone() {
            let inner = Arc::clone(&inner);
            std::thread::spawn(move || inner.dial_static_peer(&peer));
        }

        Ok(Node { inner })
    }

    pub fn shutdown(&self) {
        self.inner.shutdown.store(true, Ordering::SeqCst);
        self.inner.peers.shutdown();
        let threads = std::mem::take(&mut *self.inner.threads.lock().expect("threads lock"));
        for handle in threads {
            let _ = handle.join();
        }
    }

    pub fn listen_addr(&self) -> SocketAddr {
        self.inner.listen_addr
    }

    pub fn control_addr(&self) -> SocketAddr {
        self.inner.control_addr
    }

    pub fn chain(&self) -> &Arc<ChainService> {
        &self.inner.chain
    }

    pub fn store(&self) -> &ContentStore {
        &self.inner.store
    }

    pub fn events(&self) -> Vec<ChainEventRecord> {
        self.inner.chain.recent_events()
    }

    pub fn connect(&self, addr: &str) -> Result<u64, NodeError> {
        self.inner.connect(addr)
    }

    pub fn peers(&self) -> Vec<PeerInfo> {
        self.inner.peers.peers()
    }

    /// Offer an externally mined block, announcing it to peers when it is
    /// adopted. This is the same path the internal miner uses.
    pub fn submit_block(&self, block: ddash_core::ledger::Block) -> ChainEvent {
        let hash = block.hash();
        let event = self.inner.chain.submit_block(block);
        if matches!(event, ChainEvent::Extended | ChainEvent::Reorg { .. }) {
            self.inner.peers.broadcast_block(hash);
        }
        event
    }

    /// Admit a transaction to the mempool and gossip it when fresh.
    pub fn submit_tx(
        &self,
        tx: RecordTransaction,
    ) -> Result<([u8; 32], TxAdmission), NodeError> {
        let (tx_id, admission) = self.inner.chain.admit_tx(tx)?;
        if admission == TxAdmission::Admitted {
            self.inner.peers.broadcast_tx(tx_id);
        }
        Ok((tx_id, admission))
    }

    pub fn set_mining(&self, on: bool) {
        self.inner.set_mining(on);
    }

    pub fn mining(&self) -> bool {
        self.inner.mining.load(Ordering::SeqCst)
    }

    pub fn sanity_check(&self) -> SanityReport {
        self.inner.sanity_check()
    }

    pub fn publish(
        &self,
        path: &Path,
        access: PublishAccess,
        description: Option<String>,
        account_index: usize,
        key_index: usize,
    ) -> Result<PublishReceipt, NodeError> {
        self.inner
            .publish(path, access, description, account_index, key_index)
    }

    pub fn checkout_full(&self, id: &ContentId, try_decrypt: bool, key_index: usize) -> CheckoutReport {
        self.inner.checkout_full(id, try_decrypt, key_index)
    }

    pub fn encrypt_to_staging(
        &self,
        path: &Path,
        recipients: &[Fingerprint],
        key_index: usize,
    ) -> Result<StagedEncryption, NodeError> {
        self.inner.encrypt_to_staging(path, recipients, key_index)
    }

    pub fn publish_staged(
        &self,
        staged: &Path,
        description: Option<String>,
        account_index: usize,
    ) -> Result<PublishReceipt, NodeError> {
        self.inner.publish_staged(staged, description, account_index)
    }

    pub fn wait_for_confirmation(&self, tx_id: &[u8; 32], timeout: Duration) -> Option<TxLocation> {
        self.inner.wait_for_confirmation(tx_id, timeout)
    }

    pub fn set_key_dir(&self, path: &Path) -> Result<(), NodeError> {
        self.inner.set_key_dir(path)
    }

    pub fn list_keys(&self) -> Result<Vec<KeyEntry>, NodeError> {
        Ok(self.inner.keyring.read().expect("keyring lock").encryption_keys()?)
    }

    pub fn list_accounts(&self) -> Result<Vec<KeyEntry>, NodeError> {
        Ok(self.inner.keyring.read().expect("keyring lock").accounts()?)
    }
}

impl Drop for Node {
    fn drop(&mut self) {
        self.shutdown();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PublishAccess {
    Public,
    Restricted(Vec<Fingerprint>),
}

impl NodeInner {
    fn is_shut_down(&self) -> bool {
        self.shutdown.load(Ordering::SeqCst)
    }

    pub(crate) fn shutdown_flag(&self) -> &AtomicBool {
        &self.shutdown
    }

    pub(crate) fn set_mining(&self, on: bool) {
        self.mining.store(on, Ordering::SeqCst);
    }

    pub(crate) fn mining_enabled(&self) -> bool {
        self.mining.load(Ordering::SeqCst)
    }

    pub(crate) fn chain(&self) -> &Arc<ChainService> {
        &self.chain
    }

    pub(crate) fn peers(&self) -> &PeerManager {
        &self.peers
    }

    pub(crate) fn keyring(&self) -> &RwLock<Keyring> {
        &self.keyring
    }

    pub(crate) fn staging_dir(&self) -> PathBuf {
        self.cfg.data_dir.join("staging")
    }

    fn dial_static_peer(self: &Arc<Self>, peer: &str) {
        for attempt in 0..20u32 {
            if self.is_shut_down() {
                return;
            }
            match self.connect(peer) {
                Ok(_) => return,
                Err(e) => {
                    log::debug!("static peer {peer} attempt {attempt}: {e}");
                    std::thread::sleep(Duration::from_millis(500));
                }
            }
        }
        log::warn!("giving up on static peer {peer}");
    }

    pub(crate) fn connect(&self, addr: &str) -> Result<u64, NodeError> {
        let resolved = addr
            .to_socket_addrs()
            .map_err(|_| NodeError::BadPeerAddress(addr.to_string()))?
            .next()
            .ok_or_else(|| NodeError::BadPeerAddress(addr.to_string()))?;
        Ok(self.peers.connect(resolved)?)
    }

    pub(crate) fn sanity_check(&self) -> SanityReport {
        SanityReport {
            store_ok: self.store.object_count().is_ok(),
            height: self.chain.read().height(),
            peer_count: self.peers.session_count(),
            mining: self.mining_enabled(),
        }
    }

    fn run_miner(self: Arc<Self>) {
        let budget = MAX_BLOCK_BYTES - HEADER_LEN - 64;
        while !self.is_shut_down() {
            if !self.mining_enabled() {
                std::thread::sleep(Duration::from_millis(50));
                continue;
            }
            let (parent, txs, generation) = {
                let chain = self.chain.read();
                (
                    chain.head_block().header.clone(),
                    chain.mempool_snapshot(budget),
                    self.chain.generation(),
                )
            };
            let cancel = || {
                self.is_shut_down()
                    || !self.mining_enabled()
                    || self.chain.generation() != generation
            };
            match mine_block(
                &parent,
                txs,
                self.miner,
                self.genesis.difficulty,
                self.clock.as_ref(),
                &cancel,
            ) {
                Ok(MineOutcome::Mined { block, trials }) => {
                    let hash = block.hash();
                    match self.chain.submit_block(block) {
                        ChainEvent::Extended | ChainEvent::Reorg { .. } => {
                            log::info!(
                                "mined block {} after {trials} trials",
                                hex::encode(&hash[..8])
                            );
                            self.peers.broadcast_block(hash);
                        }
                        other => log::debug!("mined block not adopted: {other:?}"),
                    }
                    std::thread::sleep(self.mine_pacing);
                }
                Ok(MineOutcome::Cancelled) => continue,
                Err(e) => {
                    log::error!("mining failed: {e}");
                    std::thread::sleep(Duration::from_secs(1));
                }
            }
        }
    }

    fn run_housekeeping(self: Arc<Self>) {
        let mut tick: u64 = 0;
        while !self.is_shut_down() {
            std::thread::sleep(Duration::from_millis(250));
            tick += 1;
            if self.is_shut_down() {
                return;
            }
            if tick % 8 == 0 {
                self.peers.announce_head();
            }
            if tick % 64 == 0 {
                self.peers.ping_all();
            }
        }
    }

    pub(crate) fn publish(
        &self,
        path: &Path,
        access: PublishAccess,
        description: Option<String>,
        account_index: usize,
        key_index: usize,
    ) -> Result<PublishReceipt, NodeError> {
        let bytes = std::fs::read(path)?;
        let description = description.unwrap_or_else(|| file_name_of(path));
        match access {
            PublishAccess::Public => {
                let content_id = self.store.put_blob(&bytes)?;
                self.record_and_broadcast(content_id, AccessPolicy::Public, description, account_index)
            }
            PublishAccess::Restricted(recipients) => {
                let (encoded, slots) = self.encrypt_bytes(&bytes, &recipients, key_index)?;
                let content_id = self.store.put_blob(&encoded)?;
                self.record_and_broadcast(
                    content_id,
                    AccessPolicy::restricted(slots),
                    description,
                    account_index,
                )
            }
        }
    }

    /// Hybrid-encrypt `bytes` for the recipients plus the owner's own key
    /// (so publishers can always decrypt their own uploads). Returns the
    /// encoded container and the slot fingerprints.
    fn encrypt_bytes(
        &self,
        bytes: &[u8],
        recipients: &[Fingerprint],
        key_index: usize,
    ) -> Result<(Vec<u8>, Vec<Fingerprint>), NodeError> {
        let keyring = self.keyring.read().expect("keyring lock");
        let mut pubkeys = vec![keyring.encryption_public(key_index)?];
        for fp in recipients {
            pubkeys.push(keyring.resolve_encryption_public(fp)?);
        }
        drop(keyring);
        let container = encrypt_for(bytes, &pubkeys)?;
        let slots = container.slots.iter().map(|s| s.recipient).collect();
        Ok((container.encode(), slots))
    }

    pub(crate) fn encrypt_to_staging(
        &self,
        path: &Path,
        recipients: &[Fingerprint],
        key_index: usize,
    ) -> Result<StagedEncryption, NodeError> {
        let bytes = std::fs::read(path)?;
        let (encoded, slots) = self.encrypt_bytes(&bytes, recipients, key_index)?;
        let dir = self.staging_dir();
        std::fs::create_dir_all(&dir)?;
        let name = format!(
            "{}-{}.dde",
            file_name_of(path),
            hex::encode(&ContentId::for_payload(&encoded).digest()[..6])
        );
        let staged = dir.join(name);
        std::fs::write(&staged, &encoded)?;
        Ok(StagedEncryption {
            path: staged,
            recipients: slots,
            container_len: encoded.len() as u64,
        })
    }

    pub(crate) fn publish_staged(
        &self,
        staged: &Path,
        description: Option<String>,
        account_index: usize,
    ) -> Result<PublishReceipt, NodeError> {
        let bytes = std::fs::read(staged)?;
        let container = EncryptedContainer::decode(&bytes)?;
        let slots: Vec<Fingerprint> = container.slots.iter().map(|s| s.recipient).collect();
        let content_id = self.store.put_blob(&bytes)?;
        let description = description.unwrap_or_else(|| file_name_of(staged));
        self.record_and_broadcast(
            content_id,
            AccessPolicy::restricted(slots),
            description,
            account_index,
        )
    }

    fn record_and_broadcast(
        &self,
        content_id: ContentId,
        access: AccessPolicy,
        description: String,
        account_index: usize,
    ) -> Result<PublishReceipt, NodeError> {
        let account = self
            .keyring
            .read()
            .expect("keyring lock")
            .account(account_index)?;
        let tx = RecordTransaction::build_signed(
            content_id,
            access,
            description,
            self.clock.now_unix(),
            &account,
        )?;
        let (tx_id, admission) = self.chain.admit_tx(tx)?;
        if admission == TxAdmission::Admitted {
            self.peers.broadcast_tx(tx_id);
        }
        Ok(PublishReceipt { content_id, tx_id })
    }

    pub(crate) fn wait_for_confirmation(
        &self,
        tx_id: &[u8; 32],
        timeout: Duration,
    ) -> Option<TxLocation> {
        let deadline = Instant::now() + timeout;
        loop {
            if let Some(location) = self.chain.read().is_confirmed(tx_id) {
                return Some(location);
            }
            if Instant::now() >= deadline || self.is_shut_down() {
                return None;
            }
            std::thread::sleep(Duration::from_millis(25));
        }
    }

    pub(crate) fn checkout_full(
        &self,
        id: &ContentId,
        try_decrypt: bool,
        key_index: usize,
    ) -> CheckoutReport {
        let (records, locations) = {
            let chain = self.chain.read();
            (chain.checkout(id), chain.checkout_locations(id))
        };
        let mut report = CheckoutReport {
            records: records
                .iter()
                .zip(locations.iter())
                .map(|(tx, loc)| record_view(tx, loc))
                .collect(),
            plaintext: None,
            failure: None,
        };
        if report.records.is_empty() || !try_decrypt {
            return report;
        }

        let bytes = if self.store.has(id) {
            self.store.get(id).map_err(NodeError::Store)
        } else {
            self.peers.fetch_content(id).map_err(NodeError::from)
        };
        let bytes = match bytes {
            Ok(bytes) => bytes,
            Err(e) => {
                report.failure = Some(CheckoutFailure {
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                });
                return report;
            }
        };

        let newest = records.last().expect("non-empty records");
        match &newest.access {
            AccessPolicy::Public => report.plaintext = Some(bytes),
            AccessPolicy::Restricted(_) => {
                let outcome = self.decrypt_container(&bytes, key_index);
                match outcome {
                    Ok(plaintext) => report.plaintext = Some(plaintext),
                    Err(e) => {
                        report.failure = Some(CheckoutFailure {
                            kind: e.kind().to_string(),
                            message: e.to_string(),
                        })
                    }
                }
            }
        }
        report
    }

    fn decrypt_container(&self, bytes: &[u8], key_index: usize) -> Result<Vec<u8>, NodeError> {
        let container = EncryptedContainer::decode(bytes)?;
        let key = self
            .keyring
            .read()
            .expect("keyring lock")
            .encryption_key(key_index)?;
        Ok(decrypt(&container, &key)?)
    }

    pub(crate) fn set_key_dir(&self, path: &Path) -> Result<(), NodeError> {
        let new_ring = Keyring::open(path)?;
        *self.keyring.write().expect("keyring lock") = new_ring;
        Ok(())
    }
}

fn file_name_of(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn record_view(tx: &RecordTransaction, location: &TxLocation) -> RecordView {
    RecordView {
        content_id: tx.content_id.to_string(),
        owner: tx.owner.to_string(),
        owner_short: tx.owner.short_id(),
        access: match &tx.access {
            AccessPolicy::Public => Vec::new(),
            AccessPolicy::Restricted(list) => list.iter().map(|fp| fp.short_id()).collect(),
        },
        public: tx.access.is_public(),
        description: tx.description.clone(),
        timestamp: tx.timestamp,
        height: location.height,
        tx_id: hex::encode(ddash_core::ledger::tx_id(tx)),
    }
}
