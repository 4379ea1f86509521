//! Loopback control protocol: newline-delimited JSON, one request per
//! line, one JSON object per response. The CLI (interactive REPL and
//! one-shot subcommands) is a thin client of this surface. Byte-level
//! documentation lives in `docs/control.md`.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use ddash_core::identity::Fingerprint;
use ddash_core::store::ContentId;

use crate::node::{NodeError, NodeInner, PublishAccess};

/// How long `upload` waits for local mining to confirm the record before
/// answering `confirmed: false`.
const CONFIRM_WAIT: Duration = Duration::from_secs(15);

#[derive(Debug, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
enum Request {
    Ping,
    Sanity,
    SetKeyDir {
        path: PathBuf,
    },
    NewKey {
        #[serde(default)]
        kind: Option<String>,
    },
    ListKeys,
    ListAccounts,
    ImportKey {
        public_hex: String,
    },
    Encrypt {
        file: PathBuf,
        #[serde(default)]
        recipients: Vec<String>,
        #[serde(default)]
        key_index: usize,
    },
    Upload {
        #[serde(default)]
        file: Option<PathBuf>,
        #[serde(default)]
        staged: Option<PathBuf>,
        #[serde(default)]
        public: bool,
        #[serde(default)]
        recipients: Vec<String>,
        #[serde(default)]
        account_index: usize,
        #[serde(default)]
        key_index: usize,
        #[serde(default)]
        description: Option<String>,
    },
    Checkout {
        id: String,
        #[serde(default = "default_true")]
        decrypt: bool,
        #[serde(default)]
        key_index: usize,
        #[serde(default)]
        out: Option<PathBuf>,
    },
    Connect {
        addr: String,
    },
    Peers,
    Mine {
        on: bool,
    },
    Head,
}

fn default_true() -> bool {
    true
}

pub(crate) fn run_control_server(listener: TcpListener, node: Arc<NodeInner>) {
    listener
        .set_nonblocking(true)
        .expect("control listener nonblocking");
    while !node_shut_down(&node) {
        match listener.accept() {
            Ok((stream, _)) => {
                let node = Arc::clone(&node);
                std::thread::spawn(move || serve_connection(stream, node));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(50));
            }
            Err(e) => {
                log::warn!("control accept error: {e}");
                std::thread::sleep(Duration::from_millis(200));
            }
        }
    }
}

fn node_shut_down(node: &Arc<NodeInner>) -> bool {
    node.shutdown_flag().load(Ordering::SeqCst)
}

fn serve_connection(stream: TcpStream, node: Arc<NodeInner>) {
    stream
        .set_read_timeout(Some(Duration::from_millis(500)))
        .ok();
    let mut writer = match stream.try_clone() {
        Ok(w) => w,
        Err(_) => return,
    };
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    loop {
        if node_shut_down(&node) {
            return;
        }
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) => return,
            Ok(_) => {}
            Err(e)
                if matches!(
                    e.kind(),
                    std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut
                ) =>
            {
                continue;
            }
            Err(_) => return,
        }
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<Request>(&line) {
            Ok(request) => dispatch(&node, request),
            Err(e) => error_response("protocol", &format!("bad request: {e}")),
        };
        let mut text = response.to_string();
        text.push('\n');
        if writer.write_all(text.as_bytes()).is_err() {
            return;
        }
        let _ = writer.flush();
    }
}

fn error_response(kind: &str, message: &str) -> Value {
    json!({ "ok": false, "kind": kind, "error": message })
}

fn node_error(e: NodeError) -> Value {
    error_response(e.kind(), &e.to_string())
}

fn parse_fingerprints(hexes: &[String]) -> Result<Vec<Fingerprint>, Value> {
    hexes
        .iter()
        .map(|h| {
            Fingerprint::from_str(h)
                .map_err(|_| error_response("validation", &format!("bad fingerprint: {h}")))
        })
        .collect()
}

fn dispatch(node: &Arc<NodeInner>, request: Request) -> Value {
    match request {
        Request::Ping => json!({ "ok": true }),
        Request::Sanity => {
            let report = node.sanity_check();
            json!({
                "ok": true,
                "message": report.message(),
                "store_ok": report.store_ok,
                "height": report.height,
                "peer_count": report.peer_count,
                "mining": report.mining,
            })
        }
        Request::SetKeyDir { path } => match node.set_key_dir(&path) {
            Ok(()) => json!({ "ok": true, "key_dir": path }),
            Err(e) => node_error(e),
        },
        Request::NewKey { kind } => {
            let keyring = node.keyring().read().expect("keyring lock");
            let result = match kind.as_deref() {
                None | Some("key") | Some("encryption") => keyring.generate_encryption_key(),
                Some("account") | Some("sign") => keyring.generate_identity(),
                Some(other) => {
                    return error_response("validation", &format!("unknown key kind: {other}"))
                }
            };
            match result {
                Ok(entry) => json!({
                    "ok": true,
                    "index": entry.index,
                    "fingerprint": entry.fingerprint.to_string(),
                    "short_id": entry.fingerprint.short_id(),
                }),
                Err(e) => node_error(NodeError::Keyring(e)),
            }
        }
        Request::ListKeys => {
            let keyring = node.keyring().read().expect("keyring lock");
            match keyring.encryption_keys() {
                Ok(keys) => json!({
                    "ok": true,
                    "keys": keys.iter().map(|k| json!({
                        "index": k.index,
                        "fingerprint": k.fingerprint.to_string(),
                        "short_id": k.fingerprint.short_id(),
                        "imported": !k.has_secret,
                    })).collect::<Vec<_>>(),
                }),
                Err(e) => node_error(NodeError::Keyring(e)),
            }
        }
        Request::ListAccounts => {
            let keyring = node.keyring().read().expect("keyring lock");
            match keyring.accounts() {
                Ok(accounts) => json!({
                    "ok": true,
                    "accounts": accounts.iter().map(|a| json!({
                        "index": a.index,
                        "fingerprint": a.fingerprint.to_string(),
                        "short_id": a.fingerprint.short_id(),
                    })).collect::<Vec<_>>(),
                }),
                Err(e) => node_error(NodeError::Keyring(e)),
            }
        }
        Request::ImportKey { public_hex } => {
            let bytes = match hex::decode(public_hex.trim()) {
                Ok(b) if b.len() == 32 => <[u8; 32]>::try_from(b).unwrap(),
                _ => return error_response("validation", "public key must be 64 hex characters"),
            };
            let keyring = node.keyring().read().expect("keyring lock");
            match keyring.import_encryption_public(&bytes) {
                Ok(entry) => json!({
                    "ok": true,
                    "index": entry.index,
                    "fingerprint": entry.fingerprint.to_string(),
                    "short_id": entry.fingerprint.short_id(),
                }),
                Err(e) => node_error(NodeError::Keyring(e)),
            }
        }
        Request::Encrypt {
            file,
            recipients,
            key_index,
        } => {
            let recipients = match parse_fingerprints(&recipients) {
                Ok(fps) => fps,
                Err(response) => return response,
            };
            match node.encrypt_to_staging(&file, &recipients, key_index) {
                Ok(staged) => json!({
                    "ok": true,
                    "staged": staged.path,
                    "slots": staged.recipients.len(),
                    "recipients": staged.recipients.iter().map(|f| f.short_id()).collect::<Vec<_>>(),
                    "container_len": staged.container_len,
                }),
                Err(e) => node_error(e),
            }
        }
        Request::Upload {
            file,
            staged,
            public,
            recipients,
            account_index,
            key_index,
            description,
        } => {
            let receipt = if let Some(staged) = staged {
                node.publish_staged(&staged, description, account_index)
            } else if let Some(file) = file {
                let access = if public {
                    PublishAccess::Public
                } else {
                    match parse_fingerprints(&recipients) {
                        Ok(fps) => PublishAccess::Restricted(fps),
                        Err(response) => return response,
                    }
                };
                node.publish(&file, access, description, account_index, key_index)
            } else {
                return error_response("validation", "upload needs a file or a staged container");
            };
            match receipt {
                Ok(receipt) => {
                    // when mining locally, give the record a moment to land
                    // on the chain so a follow-up checkout sees it
                    let confirmed = if node.mining_enabled() {
                        node.wait_for_confirmation(&receipt.tx_id, CONFIRM_WAIT)
                    } else {
                        None
                    };
                    json!({
                        "ok": true,
                        "content_id": receipt.content_id.to_string(),
                        "tx_id": hex::encode(receipt.tx_id),
                        "confirmed": confirmed.is_some(),
                        "height": confirmed.map(|l| l.height),
                    })
                }
                Err(e) => node_error(e),
            }
        }
        Request::Checkout {
            id,
            decrypt,
            key_index,
            out,
        } => {
            let id = match ContentId::from_str(&id) {
                Ok(id) => id,
                Err(e) => return error_response("validation", &format!("bad content id: {e}")),
            };
            let report = node.checkout_full(&id, decrypt, key_index);
            let mut body = json!({
                "ok": true,
                "records": report.records,
                "plaintext_len": report.plaintext.as_ref().map(Vec::len),
            });
            if let Some(plaintext) = &report.plaintext {
                if let Some(out) = out {
                    if let Err(e) = std::fs::write(&out, plaintext) {
                        return error_response("io", &format!("cannot write {}: {e}", out.display()));
                    }
                    body["saved_to"] = json!(out);
                } else if plaintext.len() <= 4096 {
                    if let Ok(text) = std::str::from_utf8(plaintext) {
                        body["plaintext_utf8"] = json!(text);
                    }
                }
            }
            if let Some(failure) = &report.failure {
                body["failure"] = json!({ "kind": failure.kind, "error": failure.message });
            }
            body
        }
        Request::Connect { addr } => match node.connect(&addr) {
            Ok(session) => json!({ "ok": true, "session": session }),
            Err(e) => node_error(e),
        },
        Request::Peers => json!({ "ok": true, "peers": node.peers().peers() }),
        Request::Mine { on } => {
            node.set_mining(on);
            json!({ "ok": true, "mining": on })
        }
        Request::Head => {
            let chain = node.chain().read();
            json!({
                "ok": true,
                "height": chain.height(),
                "hash": hex::encode(chain.head_hash()),
            })
        }
    }
}
