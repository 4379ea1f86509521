use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Multihash function code for SHA-256.
pub const MULTIHASH_SHA256: u8 = 0x12;
/// Digest length byte that follows the function code.
pub const MULTIHASH_DIGEST_LEN: u8 = 0x20;
/// Total encoded length: 2 prefix bytes + 32-byte digest.
pub const MULTIHASH_LEN: usize = 34;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContentIdError {
    #[error("content id is not valid base58: {0}")]
    Base58(String),
    #[error("content id has length {0}, expected {MULTIHASH_LEN}")]
    BadLength(usize),
    #[error("content id does not carry the sha2-256 multihash prefix")]
    BadPrefix,
}

/// Content-derived address of a stored object: the 2-byte sha2-256
/// multihash prefix followed by the 32-byte digest, rendered as
/// base58btc text. The prefix makes every rendered id start with "Qm".
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentId([u8; MULTIHASH_LEN]);

impl ContentId {
    /// Address the given payload bytes.
    pub fn for_payload(payload: &[u8]) -> Self {
        let digest: [u8; 32] = Sha256::digest(payload).into();
        Self::from_digest(digest)
    }

    pub fn from_digest(digest: [u8; 32]) -> Self {
        let mut bytes = [0u8; MULTIHASH_LEN];
        bytes[0] = MULTIHASH_SHA256;
        bytes[1] = MULTIHASH_DIGEST_LEN;
        bytes[2..].copy_from_slice(&digest);
        ContentId(bytes)
    }

    /// Parse the raw multihash form, validating the prefix.
    pub fn from_multihash(bytes: &[u8]) -> Result<Self, ContentIdError> {
        if bytes.len() != MULTIHASH_LEN {
            return Err(ContentIdError::BadLength(bytes.len()));
        }
        if bytes[0] != MULTIHASH_SHA256 || bytes[1] != MULTIHASH_DIGEST_LEN {
            return Err(ContentIdError::BadPrefix);
        }
        let mut out = [0u8; MULTIHASH_LEN];
        out.copy_from_slice(bytes);
        Ok(ContentId(out))
    }

    pub fn as_bytes(&self) -> &[u8; MULTIHASH_LEN] {
        &self.0
    }

    pub fn digest(&self) -> &[u8] {
        &self.0[2..]
    }
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&bs58::encode(&self.0).into_string())
    }
}

impl fmt::Debug for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentId({self})")
    }
}

impl FromStr for ContentId {
    type Err = ContentIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = bs58::decode(s)
            .into_vec()
            .map_err(|e| ContentIdError::Base58(e.to_string()))?;
        Self::from_multihash(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendered_ids_start_with_qm() {
        for payload in [&b""[..], b"a", b"hello world", &[0u8; 1000]] {
            let id = ContentId::for_payload(payload);
            assert!(id.to_string().starts_with("Qm"), "{id}");
        }
    }

    #[test]
    fn text_roundtrip() {
        let id = ContentId::for_payload(b"roundtrip");
        let back: ContentId = id.to_string().parse().unwrap();
        assert_eq!(id, back);
    }

    #[test]
    fn equal_content_equal_id() {
        assert_eq!(
            ContentId::for_payload(b"same"),
            ContentId::for_payload(b"same")
        );
        assert_ne!(
            ContentId::for_payload(b"same"),
            ContentId::for_payload(b"different")
        );
    }

    #[test]
    fn rejects_wrong_prefix_and_length() {
        let mut raw = *ContentId::for_payload(b"x").as_bytes();
        raw[0] = 0x13;
        assert_eq!(
            ContentId::from_multihash(&raw),
            Err(ContentIdError::BadPrefix)
        );
        assert_eq!(
            ContentId::from_multihash(&raw[..33]),
            Err(ContentIdError::BadLength(33))
        );
        assert!("not base58 !!".parse::<ContentId>().is_err());
    }
}
