//! Peer sessions: genesis-gated handshake, inventory gossip, chain sync,
//! and peer fetch of content objects.
//!
//! One reader thread per session; writes share the socket behind a mutex.
//! Nothing a peer sends enters local state without full validation: blocks
//! go through the chain's accept path, transactions through `validate_tx`,
//! and fetched objects are re-hashed against their id before persisting.

use std::collections::HashMap;
use std::io::Read;
use std::net::{IpAddr, Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use lru::LruCache;
use thiserror::Error;

use ddash_core::ledger::{decode_tx, ChainEvent, TxAdmission};
use ddash_core::store::{ContentId, ContentStore, ObjectKind, StoredObject};

use crate::service::ChainService;
use crate::wire::{
    read_frame, write_message, Hello, InvKind, PeerMessage, WireError, MAX_FRAME_LEN,
    PROTOCOL_VERSION, SYNC_BATCH,
};

/// Entries remembered by the duplicate-announcement cache.
const SEEN_CACHE_ENTRIES: usize = 65_536;
/// Keep BLOCKS frames comfortably under the 2 MiB frame cap.
const BLOCKS_FRAME_BUDGET: usize = (MAX_FRAME_LEN as usize) - MAX_OBJECT_OVERHEAD;
const MAX_OBJECT_OVERHEAD: usize = 4096;

#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub network_id: u32,
    pub genesis_hash: [u8; 32],
    pub advertised_port: u16,
    pub handshake_timeout: Duration,
    pub ban_duration: Duration,
    pub data_timeout: Duration,
}

impl NetworkConfig {
    pub fn new(network_id: u32, genesis_hash: [u8; 32], advertised_port: u16) -> Self {
        NetworkConfig {
            network_id,
            genesis_hash,
            advertised_port,
            handshake_timeout: Duration::from_secs(10),
            ban_duration: Duration::from_secs(600),
            data_timeout: Duration::from_secs(4),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HandshakeRejection {
    #[error("handshake timed out")]
    Timeout,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("protocol version mismatch")]
    VersionMismatch,
    #[error("network id mismatch")]
    NetworkMismatch,
    #[error("genesis mismatch")]
    GenesisMismatch,
}

#[derive(Debug, Error)]
pub enum ConnectError {
    #[error("peer is banned")]
    Banned,
    #[error("cannot reach peer: {0}")]
    Io(#[from] std::io::Error),
    #[error("handshake rejected: {0}")]
    Rejected(#[from] HandshakeRejection),
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("no connected peer could provide the object")]
    Unavailable,
    #[error("store failure: {0}")]
    Store(#[from] ddash_core::store::StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Handshaking,
    Active,
    Closed,
}

/// Direction + remote + frame body (type byte and payload, no length
/// prefix) for test taps capturing traffic.
pub type FrameTap = Arc<dyn Fn(bool, SocketAddr, &[u8]) + Send + Sync>;

pub struct Session {
    id: u64,
    remote_addr: SocketAddr,
    /// ip + advertised listen port; the ban key once hello is seen.
    advertised: Mutex<Option<(IpAddr, u16)>>,
    writer: Mutex<TcpStream>,
    reader_stream: TcpStream,
    state: Mutex<SessionState>,
    remote_head: Mutex<([u8; 32], u64)>,
    last_seen: Mutex<Instant>,
    sync_inflight: AtomicBool,
    /// Tip of the last received batch; prepended to the next locator so a
    /// long side-chain download makes progress past SYNC_BATCH blocks.
    sync_cursor: Mutex<Option<[u8; 32]>>,
}

impl Session {
    fn set_state(&self, state: SessionState) {
        *self.state.lock().expect("state lock") = state;
    }

    pub fn state(&self) -> SessionState {
        *self.state.lock().expect("state lock")
    }

    pub fn remote_addr(&self) -> SocketAddr {
        self.remote_addr
    }

    fn close(&self) {
        self.set_state(SessionState::Closed);
        let _ = self.reader_stream.shutdown(Shutdown::Both);
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct PeerInfo {
    pub addr: String,
    pub state: String,
    pub head_height: u64,
    pub head_hash: String,
}

pub struct PeerManager {
    inner: Arc<Shared>,
}

struct Shared {
    cfg: NetworkConfig,
    chain: Arc<ChainService>,
    store: ContentStore,
    sessions: Mutex<HashMap<u64, Arc<Session>>>,
    next_session: AtomicU64,
    seen: Mutex<LruCache<(u8, [u8; 32]), ()>>,
    bans: Mutex<HashMap<(IpAddr, u16), Instant>>,
    pending_data: Mutex<HashMap<(u64, ContentId), mpsc::SyncSender<Option<Vec<u8>>>>>,
    frame_tap: Mutex<Option<FrameTap>>,
    shutdown: AtomicBool,
}

impl PeerManager {
    pub fn new(
        cfg: NetworkConfig,
        chain: Arc<ChainService>,
        store: ContentStore,
        frame_tap: Option<FrameTap>,
    ) -> Self {
        PeerManager {
            inner: Arc::new(Shared {
                cfg,
                chain,
                store,
                sessions: Mutex::new(HashMap::new()),
                next_session: AtomicU64::new(1),
                seen: Mutex::new(LruCache::new(
                    std::num::NonZeroUsize::new(SEEN_CACHE_ENTRIES).unwrap(),
                )),
                bans: Mutex::new(HashMap::new()),
                pending_data: Mutex::new(HashMap::new()),
                frame_tap: Mutex::new(frame_tap),
                shutdown: AtomicBool::new(false),
            }),
        }
    }

    pub fn handle(&self) -> PeerManager {
        PeerManager {
            inner: Arc::clone(&self.inner),
        }
    }

    pub fn shutdown(&self) {
        self.inner.shutdown.store(true, Ordering::SeqCst);
        let sessions: Vec<Arc<Session>> = {
            let map = self.inner.sessions.lock().expect("sessions lock");
            map.values().cloned().collect()
        };
        for session in sessions {
            session.close();
        }
    }

    pub fn is_shut_down(&self) -> bool {
        self.inner.shutdown.load(Ordering::SeqCst)
    }

    /// Accept inbound connections until shutdown. The listener is polled
    /// non-blockingly so shutdown is prompt.
    pub fn run_listener(&self, listener: TcpListener) {
        listener
            .set_nonblocking(true)
            .expect("listener nonblocking");
        while !self.is_shut_down() {
            match listener.accept() {
                Ok((stream, addr)) => {
                    let manager = self.handle();
                    thread::spawn(move || {
                        if let Err(e) = manager.establish(stream, addr, false) {
                            log::debug!("inbound handshake with {addr} failed: {e}");
                        }
                    });
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    thread::sleep(Duration::from_millis(50));
                }
                Err(e) => {
                    log::warn!("listener accept error: {e}");
                    thread::sleep(Duration::from_millis(200));
                }
            }
        }
    }

    /// Dial and handshake a peer. Returns the session id once active.
    pub fn connect(&self, addr: SocketAddr) -> Result<u64, ConnectError> {
        if self.is_banned((addr.ip(), addr.port())) {
            return Err(ConnectError::Banned);
        }
        let stream = TcpStream::connect_timeout(&addr, Duration::from_secs(5))?;
        Ok(self.establish(stream, addr, true)?)
    }

    /// Shared handshake: both sides send HELLO first, then read and check
    /// the peer's. Any mismatch closes the socket.
    fn establish(
        &self,
        stream: TcpStream,
        addr: SocketAddr,
        outbound: bool,
    ) -> Result<u64, ConnectError> {
        stream.set_nodelay(true).ok();
        stream
            .set_read_timeout(Some(self.inner.cfg.handshake_timeout))
            .ok();

        let (head_hash, head_height) = {
            let chain = self.inner.chain.read();
            (chain.head_hash(), chain.height())
        };
        let our_hello = PeerMessage::Hello(Hello {
            version: PROTOCOL_VERSION,
            network_id: self.inner.cfg.network_id,
            genesis_hash: self.inner.cfg.genesis_hash,
            head_hash,
            head_height,
            listen_port: self.inner.cfg.advertised_port,
        });
        let mut writer = stream.try_clone().map_err(ConnectError::Io)?;
        self.tap(true, addr, &our_hello.encode()[4..]);
        write_message(&mut writer, &our_hello).map_err(|e| wire_to_connect(e))?;

        let mut reader = stream.try_clone().map_err(ConnectError::Io)?;
        let body = match read_frame(&mut reader) {
            Ok(body) => body,
            Err(WireError::Io(e))
                if matches!(
                    e.kind(),
                    std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                ) =>
            {
                let _ = stream.shutdown(Shutdown::Both);
                return Err(HandshakeRejection::Timeout.into());
            }
            Err(e) => {
                let _ = stream.shutdown(Shutdown::Both);
                return Err(wire_to_connect(e));
            }
        };
        self.tap(false, addr, &body);
        let hello = match PeerMessage::decode_body(&body) {
            Ok(PeerMessage::Hello(hello)) => hello,
            Ok(other) => {
                let _ = stream.shutdown(Shutdown::Both);
                return Err(HandshakeRejection::Protocol(format!(
                    "expected hello, got {other:?}"
                ))
                .into());
            }
            Err(e) => {
                let _ = stream.shutdown(Shutdown::Both);
                return Err(HandshakeRejection::Protocol(e.to_string()).into());
            }
        };

        let rejection = if hello.version != PROTOCOL_VERSION {
            Some(HandshakeRejection::VersionMismatch)
        } else if hello.network_id != self.inner.cfg.network_id {
            Some(HandshakeRejection::NetworkMismatch)
        } else if hello.genesis_hash != self.inner.cfg.genesis_hash {
            Some(HandshakeRejection::GenesisMismatch)
        } else {
            None
        };
        if let Some(rejection) = rejection {
            let _ = stream.shutdown(Shutdown::Both);
            return Err(rejection.into());
        }

        let advertised = (addr.ip(), hello.listen_port);
        if self.is_banned(advertised) {
            let _ = stream.shutdown(Shutdown::Both);
            return Err(ConnectError::Banned);
        }

        // handshake done: switch to blocking reads, register, start reader
        stream.set_read_timeout(None).ok();
        let id = self.inner.next_session.fetch_add(1, Ordering::SeqCst);
        let session = Arc::new(Session {
            id,
            remote_addr: addr,
            advertised: Mutex::new(Some(advertised)),
            writer: Mutex::new(writer),
            reader_stream: stream,
            state: Mutex::new(SessionState::Handshaking),
            remote_head: Mutex::new((hello.head_hash, hello.head_height)),
            last_seen: Mutex::new(Instant::now()),
            sync_inflight: AtomicBool::new(false),
            sync_cursor: Mutex::new(None),
        });
        session.set_state(SessionState::Active);
        self.inner
            .sessions
            .lock()
            .expect("sessions lock")
            .insert(id, Arc::clone(&session));
        log::info!(
            "session {id} active with {addr} ({}) height {}",
            if outbound { "outbound" } else { "inbound" },
            hello.head_height
        );

        let manager = self.handle();
        let reader_session = Arc::clone(&session);
        thread::spawn(move || manager.run_reader(reader_session));

        self.maybe_sync(&session, hello.head_hash, hello.head_height);
        Ok(id)
    }

    fn run_reader(&self, session: Arc<Session>) {
        let mut stream = match session.reader_stream.try_clone() {
            Ok(s) => s,
            Err(_) => return self.drop_session(&session),
        };
        loop {
            if self.is_shut_down() || session.state() == SessionState::Closed {
                break;
            }
            let body = match read_frame(&mut stream) {
                Ok(body) => body,
                Err(_) => break,
            };
            *session.last_seen.lock().expect("last_seen lock") = Instant::now();
            self.tap(false, session.remote_addr, &body);
            let message = match PeerMessage::decode_body(&body) {
                Ok(message) => message,
                Err(e) => {
                    log::debug!("session {}: undecodable frame: {e}", session.id);
                    continue;
                }
            };
            if !self.dispatch(&session, message) {
                break;
            }
        }
        self.drop_session(&session);
    }

    /// Handle one message; returns false to close the session.
    fn dispatch(&self, session: &Arc<Session>, message: PeerMessage) -> bool {
        match message {
            PeerMessage::Hello(_) => {
                log::debug!("session {}: unexpected hello", session.id);
                false
            }
            PeerMessage::Ping(n) => self.send(session, &PeerMessage::Pong(n)),
            PeerMessage::Pong(_) => true,
            PeerMessage::Inv { kind, ids } => {
                match kind {
                    InvKind::Block => self.handle_block_inv(session, &ids),
                    InvKind::Tx => self.handle_tx_inv(session, &ids),
                }
                true
            }
            PeerMessage::GetBlocks { locator, limit } => self.serve_blocks(session, &locator, limit),
            PeerMessage::Blocks(blocks) => self.handle_blocks(session, blocks),
            PeerMessage::Tx(bytes) => self.handle_tx(session, &bytes),
            PeerMessage::GetData(id) => self.serve_data(session, &id),
            PeerMessage::GetTx(id) => self.serve_tx(session, &id),
            PeerMessage::Data { id, object } => {
                let waiter = self
                    .inner
                    .pending_data
                    .lock()
                    .expect("pending lock")
                    .remove(&(session.id, id));
                if let Some(waiter) = waiter {
                    let _ = waiter.send(object);
                }
                true
            }
        }
    }

    fn handle_block_inv(&self, session: &Arc<Session>, ids: &[[u8; 32]]) {
        let unknown: Vec<&[u8; 32]> = {
            let chain = self.inner.chain.read();
            ids.iter().filter(|id| chain.block(id).is_none()).collect()
        };
        if unknown.is_empty() {
            return;
        }
        self.request_blocks(session);
    }

    fn handle_tx_inv(&self, session: &Arc<Session>, ids: &[[u8; 32]]) {
        for id in ids {
            let fresh = {
                let chain = self.inner.chain.read();
                !chain.mempool().contains(id) && chain.is_confirmed(id).is_none()
            };
            if fresh && self.mark_seen(1, *id) {
                self.send(session, &PeerMessage::GetTx(*id));
            }
        }
    }

    fn request_blocks(&self, session: &Arc<Session>) {
        if session.sync_inflight.swap(true, Ordering::SeqCst) {
            return;
        }
        let mut locator = Vec::new();
        if let Some(cursor) = *session.sync_cursor.lock().expect("cursor lock") {
            locator.push(cursor);
        }
        locator.extend(self.inner.chain.read().locator());
        self.send(
            session,
            &PeerMessage::GetBlocks {
                locator,
                limit: SYNC_BATCH,
            },
        );
    }

    fn serve_blocks(&self, session: &Arc<Session>, locator: &[[u8; 32]], limit: u16) -> bool {
        let limit = limit.min(SYNC_BATCH) as usize;
        let blocks = self.inner.chain.read().blocks_after(locator, limit);
        // split into frames under the cap
        let mut batch: Vec<ddash_core::ledger::Block> = Vec::new();
        let mut batch_bytes = 0usize;
        let mut ok = true;
        for block in blocks {
            let size = block.canonical_bytes().map(|b| b.len() + 4).unwrap_or(0);
            if !batch.is_empty() && batch_bytes + size > BLOCKS_FRAME_BUDGET {
                ok &= self.send(session, &PeerMessage::Blocks(std::mem::take(&mut batch)));
                batch_bytes = 0;
            }
            batch_bytes += size;
            batch.push(block);
        }
        ok && self.send(session, &PeerMessage::Blocks(batch))
    }

    fn handle_blocks(&self, session: &Arc<Session>, blocks: Vec<ddash_core::ledger::Block>) -> bool {
        let received = blocks.len();
        let batch_tip = blocks.last().map(|b| b.hash());
        let mut head_changed = false;
        let mut any_new = false;
        for block in blocks {
            let hash = block.hash();
            match self.inner.chain.submit_block(block) {
                ChainEvent::Extended | ChainEvent::Reorg { .. } => {
                    self.mark_seen(0, hash);
                    head_changed = true;
                    any_new = true;
                }
                ChainEvent::SideChained | ChainEvent::Orphaned => {
                    self.mark_seen(0, hash);
                    any_new = true;
                }
                ChainEvent::Rejected(ddash_core::ledger::BlockRejection::AlreadyKnown) => {}
                ChainEvent::Rejected(reason) => {
                    log::warn!(
                        "session {}: invalid block {}: {reason}; banning peer",
                        session.id,
                        hex::encode(hash)
                    );
                    self.penalize(session);
                    return false;
                }
            }
        }
        *session.sync_cursor.lock().expect("cursor lock") = batch_tip;
        session.sync_inflight.store(false, Ordering::SeqCst);
        if head_changed {
            let head = self.inner.chain.read().head_hash();
            self.announce(InvKind::Block, head, Some(session.id));
        }
        if received == SYNC_BATCH as usize {
            // a full batch means the peer likely has more
            self.request_blocks(session);
        } else {
            *session.sync_cursor.lock().expect("cursor lock") = None;
            // heads may still differ (fork of equal height); probe once
            // more, but only if this batch taught us something new
            let (remote_hash, _) = *session.remote_head.lock().expect("remote head lock");
            let remote_known = self.inner.chain.read().block(&remote_hash).is_some();
            if any_new && !remote_known {
                self.request_blocks(session);
            }
        }
        true
    }

    fn handle_tx(&self, session: &Arc<Session>, bytes: &[u8]) -> bool {
        let tx = match decode_tx(bytes) {
            Ok(tx) => tx,
            Err(e) => {
                log::debug!("session {}: undecodable tx: {e}", session.id);
                return true;
            }
        };
        match self.inner.chain.admit_tx(tx) {
            Ok((id, TxAdmission::Admitted)) => {
                self.mark_seen(1, id);
                self.announce(InvKind::Tx, id, Some(session.id));
            }
            Ok(_) => {}
            Err(reason) => {
                log::debug!("session {}: rejected tx: {reason}", session.id);
            }
        }
        true
    }

    fn serve_data(&self, session: &Arc<Session>, id: &ContentId) -> bool {
        let object = match self.inner.store.export_object(id) {
            Ok(wire) if wire.len() + MAX_OBJECT_OVERHEAD < MAX_FRAME_LEN as usize => Some(wire),
            _ => None,
        };
        self.send(session, &PeerMessage::Data { id: *id, object })
    }

    fn serve_tx(&self, session: &Arc<Session>, id: &[u8; 32]) -> bool {
        let bytes = {
            let chain = self.inner.chain.read();
            chain.mempool().get(id).map(|tx| {
                ddash_core::ledger::canonical_tx_bytes(tx, true).expect("encodable tx")
            })
        };
        match bytes {
            Some(bytes) => self.send(session, &PeerMessage::Tx(bytes)),
            None => true,
        }
    }

    /// Post-handshake / INV sync policy: pull when the remote is ahead, or
    /// equal-height with an unknown head (possible better fork).
    fn maybe_sync(&self, session: &Arc<Session>, remote_head: [u8; 32], remote_height: u64) {
        let (local_height, known) = {
            let chain = self.inner.chain.read();
            (chain.height(), chain.block(&remote_head).is_some())
        };
        if remote_height > local_height || (remote_height == local_height && !known) {
            self.request_blocks(session);
        }
    }

    /// Announce an inventory item to every active session except `except`.
    pub fn announce(&self, kind: InvKind, id: [u8; 32], except: Option<u64>) {
        let message = PeerMessage::Inv {
            kind,
            ids: vec![id],
        };
        for session in self.active_sessions() {
            if Some(session.id) == except {
                continue;
            }
            self.send(&session, &message);
        }
    }

    /// Gossip entry points for locally originated items (already validated
    /// and admitted by the caller).
    pub fn broadcast_tx(&self, txid: [u8; 32]) {
        self.mark_seen(1, txid);
        self.announce(InvKind::Tx, txid, None);
    }

    pub fn broadcast_block(&self, hash: [u8; 32]) {
        self.mark_seen(0, hash);
        self.announce(InvKind::Block, hash, None);
    }

    /// Fetch one object from any peer, verifying bytes against the id
    /// before persisting. Peers serving bad bytes are banned and the next
    /// peer is tried.
    fn fetch_object(&self, id: &ContentId) -> Result<StoredObject, FetchError> {
        if self.inner.store.has(id) {
            return Ok(self.inner.store.get_object(id)?);
        }
        for session in self.active_sessions() {
            let (tx, rx) = mpsc::sync_channel(1);
            self.inner
                .pending_data
                .lock()
                .expect("pending lock")
                .insert((session.id, *id), tx);
            if !self.send(&session, &PeerMessage::GetData(*id)) {
                self.take_pending(session.id, id);
                continue;
            }
            match rx.recv_timeout(self.inner.cfg.data_timeout) {
                Ok(Some(wire)) => match self.inner.store.import_object(id, &wire) {
                    Ok(object) => return Ok(object),
                    Err(e) => {
                        log::warn!(
                            "session {} served non-verifying bytes for {id}: {e}; banning",
                            session.id
                        );
                        self.penalize(&session);
                        continue;
                    }
                },
                Ok(None) => continue,
                Err(_) => {
                    self.take_pending(session.id, id);
                    continue;
                }
            }
        }
        Err(FetchError::Unavailable)
    }

    fn take_pending(&self, session_id: u64, id: &ContentId) {
        self.inner
            .pending_data
            .lock()
            .expect("pending lock")
            .remove(&(session_id, *id));
    }

    /// Fetch a full blob: the root object, then (for manifests) every
    /// missing child, reassembled and re-verified through the store.
    pub fn fetch_content(&self, id: &ContentId) -> Result<Vec<u8>, FetchError> {
        let root = self.fetch_object(id)?;
        if root.kind == ObjectKind::Manifest {
            let manifest = ddash_core::store::Manifest::decode(&root.payload)
                .map_err(FetchError::Store)?;
            for (_, child) in &manifest.children {
                if !self.inner.store.has(child) {
                    self.fetch_object(child)?;
                }
            }
        }
        Ok(self.inner.store.get(id)?)
    }

    pub fn peers(&self) -> Vec<PeerInfo> {
        self.active_sessions()
            .iter()
            .map(|session| {
                let (hash, height) = *session.remote_head.lock().expect("remote head lock");
                PeerInfo {
                    addr: session.remote_addr.to_string(),
                    state: match session.state() {
                        SessionState::Handshaking => "handshaking".into(),
                        SessionState::Active => "active".into(),
                        SessionState::Closed => "closed".into(),
                    },
                    head_height: height,
                    head_hash: hex::encode(hash),
                }
            })
            .collect()
    }

    pub fn session_count(&self) -> usize {
        self.active_sessions().len()
    }

    /// Periodic head re-announcement; keeps partitions converging even if
    /// an inventory frame was lost.
    pub fn announce_head(&self) {
        let head = self.inner.chain.read().head_hash();
        let message = PeerMessage::Inv {
            kind: InvKind::Block,
            ids: vec![head],
        };
        for session in self.active_sessions() {
            self.send(&session, &message);
        }
    }

    pub fn ping_all(&self) {
        let n = rand::random();
        for session in self.active_sessions() {
            self.send(&session, &PeerMessage::Ping(n));
        }
    }

    fn active_sessions(&self) -> Vec<Arc<Session>> {
        let map = self.inner.sessions.lock().expect("sessions lock");
        let mut sessions: Vec<Arc<Session>> = map
            .values()
            .filter(|s| s.state() == SessionState::Active)
            .cloned()
            .collect();
        sessions.sort_by_key(|s| s.id);
        sessions
    }

    /// True if newly marked, false if already seen.
    fn mark_seen(&self, kind: u8, id: [u8; 32]) -> bool {
        self.inner
            .seen
            .lock()
            .expect("seen lock")
            .put((kind, id), ())
            .is_none()
    }

    fn send(&self, session: &Arc<Session>, message: &PeerMessage) -> bool {
        let frame = message.encode();
        self.tap(true, session.remote_addr, &frame[4..]);
        let mut writer = session.writer.lock().expect("writer lock");
        match writer_write(&mut writer, &frame) {
            Ok(()) => true,
            Err(e) => {
                log::debug!("session {}: send failed: {e}", session.id);
                drop(writer);
                session.close();
                false
            }
        }
    }

    fn penalize(&self, session: &Arc<Session>) {
        let key = session
            .advertised
            .lock()
            .expect("advertised lock")
            .unwrap_or((session.remote_addr.ip(), session.remote_addr.port()));
        self.inner
            .bans
            .lock()
            .expect("bans lock")
            .insert(key, Instant::now() + self.inner.cfg.ban_duration);
        session.close();
    }

    fn is_banned(&self, key: (IpAddr, u16)) -> bool {
        let mut bans = self.inner.bans.lock().expect("bans lock");
        match bans.get(&key) {
            Some(expiry) if *expiry > Instant::now() => true,
            Some(_) => {
                bans.remove(&key);
                false
            }
            None => false,
        }
    }

    pub fn banned_count(&self) -> usize {
        let now = Instant::now();
        self.inner
            .bans
            .lock()
            .expect("bans lock")
            .values()
            .filter(|expiry| **expiry > now)
            .count()
    }

    fn drop_session(&self, session: &Arc<Session>) {
        session.close();
        self.inner
            .sessions
            .lock()
            .expect("sessions lock")
            .remove(&session.id);
        // fail any fetch waiting on this session
        let mut pending = self.inner.pending_data.lock().expect("pending lock");
        let stale: Vec<(u64, ContentId)> = pending
            .keys()
            .filter(|(sid, _)| *sid == session.id)
            .copied()
            .collect();
        for key in stale {
            if let Some(waiter) = pending.remove(&key) {
                let _ = waiter.send(None);
            }
        }
    }

    fn tap(&self, outbound: bool, remote: SocketAddr, body: &[u8]) {
        let tap = self.inner.frame_tap.lock().expect("tap lock");
        if let Some(tap) = tap.as_ref() {
            tap(outbound, remote, body);
        }
    }
}

fn writer_write(stream: &mut TcpStream, frame: &[u8]) -> std::io::Result<()> {
    use std::io::Write;
    stream.write_all(frame)?;
    stream.flush()
}

fn wire_to_connect(e: WireError) -> ConnectError {
    match e {
        WireError::Io(io) => ConnectError::Io(io),
        other => ConnectError::Rejected(HandshakeRejection::Protocol(other.to_string())),
    }
}

/// Read with the current socket timeout still applied; used by tests'
/// scripted peers.
pub fn read_frame_from(stream: &mut TcpStream) -> Result<Vec<u8>, WireError> {
    let mut reader: &mut dyn Read = stream;
    read_frame(&mut reader)
}
