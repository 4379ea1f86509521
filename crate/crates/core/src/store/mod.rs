//! Content-addressed blob store with Merkle-DAG chunking.
//!
//! Objects live one file per object under the store directory, named by
//! their base58 content id. Each file carries a one-byte kind tag (leaf or
//! manifest), the payload, and a sha2-256 checksum over tag + payload, so
//! any on-disk mutation is caught at read time before bytes are served.

mod chunker;
mod content_id;

pub use chunker::{build_manifest, chunk_ids, chunk_ids_sequential, Manifest, CHUNK_SIZE, MAX_CHUNKS};
#[cfg(feature = "parallel")]
pub use chunker::chunk_ids_parallel;
pub use content_id::{ContentId, ContentIdError, MULTIHASH_LEN};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

const TAG_LEAF: u8 = 0x00;
const TAG_MANIFEST: u8 = 0x01;
const CHECKSUM_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("object {0} not found in store")]
    NotFound(ContentId),
    #[error("object {id} is corrupt: {reason}")]
    Corrupt { id: ContentId, reason: &'static str },
    #[error("malformed manifest: {0}")]
    MalformedManifest(&'static str),
    #[error("blob of {0} bytes exceeds the maximum storable size")]
    TooLarge(u64),
    #[error("store i/o failure: {0}")]
    Persistence(#[from] std::io::Error),
}

/// The two object kinds persisted by the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectKind {
    Leaf,
    Manifest,
}

impl ObjectKind {
    fn tag(self) -> u8 {
        match self {
            ObjectKind::Leaf => TAG_LEAF,
            ObjectKind::Manifest => TAG_MANIFEST,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            TAG_LEAF => Some(ObjectKind::Leaf),
            TAG_MANIFEST => Some(ObjectKind::Manifest),
            _ => None,
        }
    }
}

/// A decoded stored object: kind tag plus payload bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredObject {
    pub kind: ObjectKind,
    pub payload: Vec<u8>,
}

impl StoredObject {
    pub fn content_id(&self) -> ContentId {
        ContentId::for_payload(&self.payload)
    }

    /// Wire form exchanged between peers: tag byte + payload, no checksum.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + self.payload.len());
        out.push(self.kind.tag());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_wire(bytes: &[u8]) -> Option<Self> {
        let (&tag, payload) = bytes.split_first()?;
        Some(StoredObject {
            kind: ObjectKind::from_tag(tag)?,
            payload: payload.to_vec(),
        })
    }
}

/// Filesystem-backed content store. Handles are cheap to clone and safe to
/// share across threads: writes are idempotent temp-file + rename, reads
/// re-verify hashes before returning bytes.
#[derive(Debug, Clone)]
pub struct ContentStore {
    dir: PathBuf,
}

impl ContentStore {
    /// Open (creating if needed) a store rooted at `dir`.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ContentStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn object_path(&self, id: &ContentId) -> PathBuf {
        self.dir.join(id.to_string())
    }

    /// Store a blob, chunking through a manifest when it exceeds
    /// [`CHUNK_SIZE`]. Returns the root content id. Idempotent: re-putting
    /// identical data writes nothing new.
    pub fn put_blob(&self, data: &[u8]) -> Result<ContentId, StoreError> {
        ensure_storable(data.len() as u64)?;
        if data.len() <= CHUNK_SIZE {
            return self.put_object(ObjectKind::Leaf, data);
        }
        let manifest = build_manifest(data);
        self.put_chunks(data, &manifest)?;
        self.put_object(ObjectKind::Manifest, &manifest.encode())
    }

    #[cfg(feature = "parallel")]
    fn put_chunks(&self, data: &[u8], manifest: &Manifest) -> Result<(), StoreError> {
        use rayon::prelude::*;
        data.par_chunks(CHUNK_SIZE)
            .zip(manifest.children.par_iter())
            .try_for_each(|(chunk, (_, id))| {
                self.write_object(*id, ObjectKind::Leaf, chunk).map(|_| ())
            })
    }

    #[cfg(not(feature = "parallel"))]
    fn put_chunks(&self, data: &[u8], manifest: &Manifest) -> Result<(), StoreError> {
        data.chunks(CHUNK_SIZE)
            .zip(manifest.children.iter())
            .try_for_each(|(chunk, (_, id))| {
                self.write_object(*id, ObjectKind::Leaf, chunk).map(|_| ())
            })
    }

    fn put_object(&self, kind: ObjectKind, payload: &[u8]) -> Result<ContentId, StoreError> {
        let id = ContentId::for_payload(payload);
        self.write_object(id, kind, payload)?;
        Ok(id)
    }

    fn write_object(
        &self,
        id: ContentId,
        kind: ObjectKind,
        payload: &[u8],
    ) -> Result<ContentId, StoreError> {
        let path = self.object_path(&id);
        if path.exists() {
            return Ok(id);
        }
        let mut checksum = Sha256::new();
        checksum.update([kind.tag()]);
        checksum.update(payload);
        let mut tmp = tempfile::Builder::new()
            .prefix(".put-")
            .tempfile_in(&self.dir)?;
        tmp.write_all(&[kind.tag()])?;
        tmp.write_all(payload)?;
        tmp.write_all(&checksum.finalize())?;
        tmp.flush()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(id)
    }

    /// Load and verify one object, without reassembling manifests.
    pub fn get_object(&self, id: &ContentId) -> Result<StoredObject, StoreError> {
        let bytes = match fs::read(self.object_path(id)) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(*id))
            }
            Err(e) => return Err(e.into()),
        };
        let corrupt = |reason| StoreError::Corrupt { id: *id, reason };
        if bytes.len() < 1 + CHECKSUM_LEN {
            return Err(corrupt("file shorter than header"));
        }
        let (body, stored_sum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        let actual: [u8; 32] = Sha256::digest(body).into();
        if actual != stored_sum {
            return Err(corrupt("checksum mismatch"));
        }
        let kind = ObjectKind::from_tag(body[0]).ok_or_else(|| corrupt("unknown kind tag"))?;
        let payload = &body[1..];
        if ContentId::for_payload(payload) != *id {
            return Err(corrupt("payload does not hash to id"));
        }
        if kind == ObjectKind::Leaf && payload.len() > CHUNK_SIZE {
            return Err(corrupt("leaf exceeds chunk size"));
        }
        Ok(StoredObject {
            kind,
            payload: payload.to_vec(),
        })
    }

    /// Retrieve the full blob behind `id`, reassembling manifest children
    /// in order. Fails loudly on any integrity violation.
    pub fn get(&self, id: &ContentId) -> Result<Vec<u8>, StoreError> {
        let root = self.get_object(id)?;
        match root.kind {
            ObjectKind::Leaf => Ok(root.payload),
            ObjectKind::Manifest => {
                let manifest = Manifest::decode(&root.payload)?;
                let mut out = Vec::with_capacity(manifest.total_len as usize);
                for (len, child) in &manifest.children {
                    let obj = self.get_object(child)?;
                    if obj.kind != ObjectKind::Leaf {
                        return Err(StoreError::Corrupt {
                            id: *child,
                            reason: "manifest child is not a leaf",
                        });
                    }
                    if obj.payload.len() != *len as usize {
                        return Err(StoreError::Corrupt {
                            id: *child,
                            reason: "child length does not match manifest",
                        });
                    }
                    out.extend_from_slice(&obj.payload);
                }
                Ok(out)
            }
        }
    }

    /// Whether the object is locally persisted. Never touches the network.
    pub fn has(&self, id: &ContentId) -> bool {
        self.object_path(id).exists()
    }

    /// Import an object received from a peer (wire form: tag + payload),
    /// verifying it hashes to `id` before persisting.
    pub fn import_object(&self, id: &ContentId, wire: &[u8]) -> Result<StoredObject, StoreError> {
        let obj = StoredObject::from_wire(wire).ok_or(StoreError::Corrupt {
            id: *id,
            reason: "unparseable wire object",
        })?;
        if obj.content_id() != *id {
            return Err(StoreError::Corrupt {
                id: *id,
                reason: "wire payload does not hash to id",
            });
        }
        if obj.kind == ObjectKind::Leaf && obj.payload.len() > CHUNK_SIZE {
            return Err(StoreError::Corrupt {
                id: *id,
                reason: "leaf exceeds chunk size",
            });
        }
        if obj.kind == ObjectKind::Manifest {
            Manifest::decode(&obj.payload)?;
        }
        self.write_object(*id, obj.kind, &obj.payload)?;
        Ok(obj)
    }

    /// Export an object in wire form for serving to peers.
    pub fn export_object(&self, id: &ContentId) -> Result<Vec<u8>, StoreError> {
        Ok(self.get_object(id)?.to_wire())
    }

    /// Number of objects currently persisted.
    pub fn object_count(&self) -> Result<usize, StoreError> {
        let mut n = 0;
        for entry in fs::read_dir(&self.dir)? {
            let entry = entry?;
            if !entry.file_name().to_string_lossy().starts_with('.') {
                n += 1;
            }
        }
        Ok(n)
    }
}

/// True iff hashing `data` under the content-id scheme reproduces `id`.
pub fn verify(id: &ContentId, data: &[u8]) -> bool {
    ContentId::for_payload(data) == *id
}

fn ensure_storable(len: u64) -> Result<(), StoreError> {
    if len > CHUNK_SIZE as u64 * MAX_CHUNKS as u64 {
        return Err(StoreError::TooLarge(len));
    }
    Ok(())
}
