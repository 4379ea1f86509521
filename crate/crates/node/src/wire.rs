//! Binary peer protocol. Every message is one frame:
//!
//! ```text
//! u32 length (big-endian, = 1 + payload length) | u8 type | payload
//! ```
//!
//! Frames are capped at [`MAX_FRAME_LEN`]. Payload layouts are fixed-order
//! big-endian; see `docs/wire.md` for the byte-level reference and golden
//! frames.

use std::io::{Read, Write};

use thiserror::Error;

use ddash_core::ledger::Block;
use ddash_core::store::{ContentId, MULTIHASH_LEN};

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_FRAME_LEN: u32 = 2 * 1024 * 1024;
/// Blocks served per GET_BLOCKS response.
pub const SYNC_BATCH: u16 = 128;

const TYPE_HELLO: u8 = 0;
const TYPE_INV: u8 = 1;
const TYPE_GET_BLOCKS: u8 = 2;
const TYPE_BLOCKS: u8 = 3;
const TYPE_TX: u8 = 4;
const TYPE_GET_DATA: u8 = 5;
const TYPE_DATA: u8 = 6;
const TYPE_PING: u8 = 7;
const TYPE_PONG: u8 = 8;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("frame of {0} bytes exceeds the 2 MiB cap")]
    Oversize(u32),
    #[error("empty frame")]
    Empty,
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("malformed {0} payload")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hello {
    pub version: u32,
    pub network_id: u32,
    pub genesis_hash: [u8; 32],
    pub head_hash: [u8; 32],
    pub head_height: u64,
    pub listen_port: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvKind {
    Block,
    Tx,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PeerMessage {
    Hello(Hello),
    Inv { kind: InvKind, ids: Vec<[u8; 32]> },
    GetBlocks { locator: Vec<[u8; 32]>, limit: u16 },
    Blocks(Vec<Block>),
    Tx(Vec<u8>),
    /// Request a content object by id; `Tx` bodies are requested with
    /// [`PeerMessage::GetTx`].
    GetData(ContentId),
    /// Content object response; `None` payload means "don't have it".
    Data {
        id: ContentId,
        object: Option<Vec<u8>>,
    },
    GetTx([u8; 32]),
    Ping(u64),
    Pong(u64),
}

impl PeerMessage {
    fn type_byte(&self) -> u8 {
        match self {
            PeerMessage::Hello(_) => TYPE_HELLO,
            PeerMessage::Inv { .. } => TYPE_INV,
            PeerMessage::GetBlocks { .. } => TYPE_GET_BLOCKS,
            PeerMessage::Blocks(_) => TYPE_BLOCKS,
            PeerMessage::Tx(_) => TYPE_TX,
            PeerMessage::GetData(_) | PeerMessage::GetTx(_) => TYPE_GET_DATA,
            PeerMessage::Data { .. } => TYPE_DATA,
            PeerMessage::Ping(_) => TYPE_PING,
            PeerMessage::Pong(_) => TYPE_PONG,
        }
    }

    fn payload(&self) -> Vec<u8> {
        match self {
            PeerMessage::Hello(h) => {
                let mut out = Vec::with_capacity(82);
                out.extend_from_slice(&h.version.to_be_bytes());
                out.extend_from_slice(&h.network_id.to_be_bytes());
                out.extend_from_slice(&h.genesis_hash);
                out.extend_from_slice(&h.head_hash);
                out.extend_from_slice(&h.head_height.to_be_bytes());
                out.extend_from_slice(&h.listen_port.to_be_bytes());
                out
            }
            PeerMessage::Inv { kind, ids } => {
                let mut out = Vec::with_capacity(3 + ids.len() * 32);
                out.push(match kind {
                    InvKind::Block => 0,
                    InvKind::Tx => 1,
                });
                out.extend_from_slice(&(ids.len() as u16).to_be_bytes());
                for id in ids {
                    out.extend_from_slice(id);
                }
                out
            }
            PeerMessage::GetBlocks { locator, limit } => {
                let mut out = Vec::with_capacity(4 + locator.len() * 32);
                out.extend_from_slice(&(locator.len() as u16).to_be_bytes());
                for hash in locator {
                    out.extend_from_slice(hash);
                }
                out.extend_from_slice(&limit.to_be_bytes());
                out
            }
            PeerMessage::Blocks(blocks) => {
                let mut out = Vec::new();
                out.extend_from_slice(&(blocks.len() as u16).to_be_bytes());
                for block in blocks {
                    let bytes = block.canonical_bytes().expect("encodable block");
                    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
                    out.extend_from_slice(&bytes);
                }
                out
            }
            PeerMessage::Tx(bytes) => bytes.clone(),
            PeerMessage::GetData(id) => {
                let mut out = vec![0u8];
                out.extend_from_slice(id.as_bytes());
                out
            }
            PeerMessage::GetTx(id) => {
                let mut out = vec![1u8];
                out.extend_from_slice(id);
                out
            }
            PeerMessage::Data { id, object } => {
                let mut out = Vec::with_capacity(36 + object.as_ref().map_or(0, Vec::len));
                out.extend_from_slice(id.as_bytes());
                match object {
                    Some(bytes) => {
                        out.push(1);
                        out.extend_from_slice(bytes);
                    }
                    None => out.push(0),
                }
                out
            }
            PeerMessage::Ping(n) | PeerMessage::Pong(n) => n.to_be_bytes().to_vec(),
        }
    }

    /// Full frame bytes, length prefix included.
    pub fn encode(&self) -> Vec<u8> {
        let payload = self.payload();
        let mut out = Vec::with_capacity(5 + payload.len());
        out.extend_from_slice(&(1 + payload.len() as u32).to_be_bytes());
        out.push(self.type_byte());
        out.extend_from_slice(&payload);
        out
    }

    /// Decode a frame body (type byte + payload, no length prefix).
    pub fn decode_body(body: &[u8]) -> Result<Self, WireError> {
        let (&type_byte, payload) = body.split_first().ok_or(WireError::Empty)?;
        match type_byte {
            TYPE_HELLO => {
                if payload.len() != 82 {
                    return Err(WireError::Malformed("hello"));
                }
                Ok(PeerMessage::Hello(Hello {
                    version: u32::from_be_bytes(payload[0..4].try_into().unwrap()),
                    network_id: u32::from_be_bytes(payload[4..8].try_into().unwrap()),
                    genesis_hash: payload[8..40].try_into().unwrap(),
                    head_hash: payload[40..72].try_into().unwrap(),
                    head_height: u64::from_be_bytes(payload[72..80].try_into().unwrap()),
                    listen_port: u16::from_be_bytes(payload[80..82].try_into().unwrap()),
                }))
            }
            TYPE_INV => {
                if payload.len() < 3 {
                    return Err(WireError::Malformed("inv"));
                }
                let kind = match payload[0] {
                    0 => InvKind::Block,
                    1 => InvKind::Tx,
                    _ => return Err(WireError::Malformed("inv kind")),
                };
                let count = u16::from_be_bytes(payload[1..3].try_into().unwrap()) as usize;
                if payload.len() != 3 + count * 32 {
                    return Err(WireError::Malformed("inv length"));
                }
                let ids = payload[3..]
                    .chunks_exact(32)
                    .map(|c| c.try_into().unwrap())
                    .collect();
                Ok(PeerMessage::Inv { kind, ids })
            }
            TYPE_GET_BLOCKS => {
                if payload.len() < 2 {
                    return Err(WireError::Malformed("get_blocks"));
                }
                let count = u16::from_be_bytes(payload[0..2].try_into().unwrap()) as usize;
                if payload.len() != 2 + count * 32 + 2 {
                    return Err(WireError::Malformed("get_blocks length"));
                }
                let locator = payload[2..2 + count * 32]
                    .chunks_exact(32)
                    .map(|c| c.try_into().unwrap())
                    .collect();
                let limit =
                    u16::from_be_bytes(payload[2 + count * 32..].try_into().unwrap());
                Ok(PeerMessage::GetBlocks { locator, limit })
            }
            TYPE_BLOCKS => {
                if payload.len() < 2 {
                    return Err(WireError::Malformed("blocks"));
                }
                let count = u16::from_be_bytes(payload[0..2].try_into().unwrap()) as usize;
                let mut blocks = Vec::with_capacity(count.min(SYNC_BATCH as usize));
                let mut at = 2;
                for _ in 0..count {
                    if at + 4 > payload.len() {
                        return Err(WireError::Malformed("blocks length"));
                    }
                    let len =
                        u32::from_be_bytes(payload[at..at + 4].try_into().unwrap()) as usize;
                    at += 4;
                    if at + len > payload.len() {
                        return Err(WireError::Malformed("blocks truncated"));
                    }
                    let block = Block::decode(&payload[at..at + len])
                        .map_err(|_| WireError::Malformed("block body"))?;
                    blocks.push(block);
                    at += len;
                }
                if at != payload.len() {
                    return Err(WireError::Malformed("blocks trailing bytes"));
                }
                Ok(PeerMessage::Blocks(blocks))
            }
            TYPE_TX => Ok(PeerMessage::Tx(payload.to_vec())),
            TYPE_GET_DATA => match payload.split_first() {
                Some((0, rest)) if rest.len() == MULTIHASH_LEN => {
                    let id = ContentId::from_multihash(rest)
                        .map_err(|_| WireError::Malformed("get_data id"))?;
                    Ok(PeerMessage::GetData(id))
                }
                Some((1, rest)) if rest.len() == 32 => {
                    Ok(PeerMessage::GetTx(rest.try_into().unwrap()))
                }
                _ => Err(WireError::Malformed("get_data")),
            },
            TYPE_DATA => {
                if payload.len() < MULTIHASH_LEN + 1 {
                    return Err(WireError::Malformed("data"));
                }
                let id = ContentId::from_multihash(&payload[..MULTIHASH_LEN])
                    .map_err(|_| WireError::Malformed("data id"))?;
                let object = match payload[MULTIHASH_LEN] {
                    0 if payload.len() == MULTIHASH_LEN + 1 => None,
                    1 => Some(payload[MULTIHASH_LEN + 1..].to_vec()),
                    _ => return Err(WireError::Malformed("data flag")),
                };
                Ok(PeerMessage::Data { id, object })
            }
            TYPE_PING | TYPE_PONG => {
                if payload.len() != 8 {
                    return Err(WireError::Malformed("ping"));
                }
                let n = u64::from_be_bytes(payload.try_into().unwrap());
                Ok(match type_byte {
                    TYPE_PING => PeerMessage::Ping(n),
                    _ => PeerMessage::Pong(n),
                })
            }
            other => Err(WireError::UnknownType(other)),
        }
    }
}

/// Read one frame body (type byte + payload) from the stream.
pub fn read_frame(reader: &mut impl Read) -> Result<Vec<u8>, WireError> {
    let mut len_bytes = [0u8; 4];
    reader.read_exact(&mut len_bytes)?;
    let len = u32::from_be_bytes(len_bytes);
    if len == 0 {
        return Err(WireError::Empty);
    }
    if len > MAX_FRAME_LEN {
        return Err(WireError::Oversize(len));
    }
    let mut body = vec![0u8; len as usize];
    reader.read_exact(&mut body)?;
    Ok(body)
}

pub fn write_message(writer: &mut impl Write, message: &PeerMessage) -> Result<(), WireError> {
    writer.write_all(&message.encode())?;
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_hello_frame() {
        // frozen against the independent frame oracle
        let hello = PeerMessage::Hello(Hello {
            version: 1,
            network_id: 4828,
            genesis_hash: hex::decode(
                "c21156ac879f0f2bb420e405d375b87a42045d69a886641d5e0b3d61c601b3f8",
            )
            .unwrap()
            .try_into()
            .unwrap(),
            head_hash: [0u8; 32],
            head_height: 0,
            listen_port: 30303,
        });
        assert_eq!(
            hex::encode(hello.encode()),
            format!(
                "000000530000000001000012dcc21156ac879f0f2bb420e405d375b87a42045d69a886641d5e0b3d61c601b3f8{}765f",
                "0".repeat(80)
            )
        );
    }

    #[test]
    fn golden_ping_frame() {
        assert_eq!(
            hex::encode(PeerMessage::Ping(7).encode()),
            "00000009070000000000000007"
        );
    }

    #[test]
    fn roundtrip_every_variant() {
        let id = ContentId::for_payload(b"wire");
        let messages = vec![
            PeerMessage::Hello(Hello {
                version: 1,
                network_id: 4828,
                genesis_hash: [1; 32],
                head_hash: [2; 32],
                head_height: 9,
                listen_port: 30303,
            }),
            PeerMessage::Inv {
                kind: InvKind::Block,
                ids: vec![[3; 32], [4; 32]],
            },
            PeerMessage::Inv {
                kind: InvKind::Tx,
                ids: vec![],
            },
            PeerMessage::GetBlocks {
                locator: vec![[5; 32]],
                limit: 128,
            },
            PeerMessage::Blocks(vec![]),
            PeerMessage::Tx(vec![1, 2, 3]),
            PeerMessage::GetData(id),
            PeerMessage::GetTx([6; 32]),
            PeerMessage::Data { id, object: None },
            PeerMessage::Data {
                id,
                object: Some(vec![0, 9, 9]),
            },
            PeerMessage::Ping(1),
            PeerMessage::Pong(u64::MAX),
        ];
        for message in messages {
            let frame = message.encode();
            let body = &frame[4..];
            assert_eq!(PeerMessage::decode_body(body).unwrap(), message);
        }
    }

    #[test]
    fn oversize_frame_rejected() {
        let mut frame = Vec::new();
        frame.extend_from_slice(&(MAX_FRAME_LEN + 1).to_be_bytes());
        frame.push(TYPE_PING);
        let mut cursor = std::io::Cursor::new(frame);
        assert!(matches!(
            read_frame(&mut cursor),
            Err(WireError::Oversize(_))
        ));
    }

    #[test]
    fn decoder_never_panics_on_garbage() {
        use proptest::prelude::*;
        let mut runner = proptest::test_runner::TestRunner::default();
        runner
            .run(
                &proptest::collection::vec(any::<u8>(), 0..512),
                |bytes| {
                    let _ = PeerMessage::decode_body(&bytes);
                    Ok(())
                },
            )
            .unwrap();
    }
}
