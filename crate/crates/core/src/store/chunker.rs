//! Fixed-size chunking and the canonical manifest encoding.
//!
//! A blob at most [`CHUNK_SIZE`] bytes long is stored as a single leaf and
//! addressed by its own bytes. Anything larger is split into `CHUNK_SIZE`
//! chunks plus a final partial chunk, and the root object is a manifest
//! listing the children; the blob is then addressed by the manifest bytes.

use super::content_id::{ContentId, MULTIHASH_LEN};
use super::StoreError;

/// Leaf payload cap: 256 KiB.
pub const CHUNK_SIZE: usize = 262_144;
/// Manifests are flat (depth 2), so this bounds the supported blob size.
pub const MAX_CHUNKS: usize = 65_536;

/// Canonical serialization:
/// u32 child count, per child u32 leaf length + 34-byte multihash,
/// u64 total length footer. All integers big-endian.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub children: Vec<(u32, ContentId)>,
    pub total_len: u64,
}

impl Manifest {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.children.len() * (4 + MULTIHASH_LEN) + 8);
        out.extend_from_slice(&(self.children.len() as u32).to_be_bytes());
        for (len, id) in &self.children {
            out.extend_from_slice(&len.to_be_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        out.extend_from_slice(&self.total_len.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, StoreError> {
        let malformed = |what: &'static str| StoreError::MalformedManifest(what);
        if bytes.len() < 4 {
            return Err(malformed("truncated child count"));
        }
        let count = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        if count < 2 {
            return Err(malformed("fewer than two children"));
        }
        if count > MAX_CHUNKS {
            return Err(malformed("child count above limit"));
        }
        let expected = 4 + count * (4 + MULTIHASH_LEN) + 8;
        if bytes.len() != expected {
            return Err(malformed("length does not match child count"));
        }
        let mut children = Vec::with_capacity(count);
        let mut offset = 4;
        let mut sum = 0u64;
        for i in 0..count {
            let len = u32::from_be_bytes(bytes[offset..offset + 4].try_into().unwrap());
            let id = ContentId::from_multihash(&bytes[offset + 4..offset + 4 + MULTIHASH_LEN])
                .map_err(|_| malformed("bad child multihash"))?;
            if len as usize > CHUNK_SIZE || len == 0 {
                return Err(malformed("child length out of range"));
            }
            // only the final child may be a partial chunk
            if i + 1 < count && len as usize != CHUNK_SIZE {
                return Err(malformed("non-final child is not a full chunk"));
            }
            sum += len as u64;
            children.push((len, id));
            offset += 4 + MULTIHASH_LEN;
        }
        let total_len = u64::from_be_bytes(bytes[offset..offset + 8].try_into().unwrap());
        if total_len != sum {
            return Err(malformed("total length does not match children"));
        }
        Ok(Manifest {
            children,
            total_len,
        })
    }
}

/// Build the manifest for data known to span more than one chunk.
pub fn build_manifest(data: &[u8]) -> Manifest {
    debug_assert!(data.len() > CHUNK_SIZE);
    let children = chunk_ids(data)
        .into_iter()
        .zip(data.chunks(CHUNK_SIZE))
        .map(|(id, chunk)| (chunk.len() as u32, id))
        .collect();
    Manifest {
        children,
        total_len: data.len() as u64,
    }
}

/// Content ids of every chunk, in order.
pub fn chunk_ids(data: &[u8]) -> Vec<ContentId> {
    #[cfg(feature = "parallel")]
    {
        chunk_ids_parallel(data)
    }
    #[cfg(not(feature = "parallel"))]
    {
        chunk_ids_sequential(data)
    }
}

pub fn chunk_ids_sequential(data: &[u8]) -> Vec<ContentId> {
    data.chunks(CHUNK_SIZE).map(ContentId::for_payload).collect()
}

#[cfg(feature = "parallel")]
pub fn chunk_ids_parallel(data: &[u8]) -> Vec<ContentId> {
    use rayon::prelude::*;
    data.par_chunks(CHUNK_SIZE)
        .map(ContentId::for_payload)
        .collect()
}
