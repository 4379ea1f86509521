//! Signed asset records: the ledger's transaction type, its canonical
//! byte serialization, and standalone validation.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::identity::{fingerprint, sign, verify_sig, Fingerprint, Identity, SIGNATURE_LEN};
use crate::store::{ContentId, MULTIHASH_LEN};

pub const MAX_DESCRIPTION_BYTES: usize = 1024;
pub const MAX_ACCESS_ENTRIES: usize = 4096;

const ACCESS_PUBLIC: u8 = 0x00;
const ACCESS_RESTRICTED: u8 = 0x01;

/// Who may read the asset: everyone, or a sorted duplicate-free list of
/// recipient key fingerprints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AccessPolicy {
    Public,
    Restricted(Vec<Fingerprint>),
}

impl AccessPolicy {
    /// Build a restricted policy, normalizing to sorted + deduplicated.
    pub fn restricted(mut recipients: Vec<Fingerprint>) -> Self {
        recipients.sort();
        recipients.dedup();
        AccessPolicy::Restricted(recipients)
    }

    pub fn is_public(&self) -> bool {
        matches!(self, AccessPolicy::Public)
    }
}

/// A signed ledger entry binding a content id to its owner, access policy,
/// description, and creation time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordTransaction {
    pub content_id: ContentId,
    pub owner: Fingerprint,
    pub access: AccessPolicy,
    pub description: String,
    pub timestamp: u64,
    pub owner_pubkey: [u8; 32],
    pub signature: [u8; SIGNATURE_LEN],
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TxCodecError {
    #[error("description exceeds {MAX_DESCRIPTION_BYTES} bytes")]
    OversizeDescription,
    #[error("access list exceeds {MAX_ACCESS_ENTRIES} entries")]
    OversizeAccessList,
    #[error("transaction bytes are malformed: {0}")]
    Malformed(&'static str),
}

/// Typed rejection reasons from [`validate_tx`].
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TxRejection {
    #[error("bad signature")]
    BadSignature,
    #[error("owner fingerprint does not match owner public key")]
    FingerprintMismatch,
    #[error("restricted access list is empty")]
    EmptyAccessList,
    #[error("access list is not sorted and duplicate-free")]
    MalformedAccessList,
    #[error("description exceeds {MAX_DESCRIPTION_BYTES} bytes")]
    OversizeDescription,
    #[error("malformed content id")]
    MalformedContentId,
}

impl RecordTransaction {
    /// Build and sign a record in one step.
    pub fn build_signed(
        content_id: ContentId,
        access: AccessPolicy,
        description: impl Into<String>,
        timestamp: u64,
        identity: &Identity,
    ) -> Result<Self, TxCodecError> {
        let mut tx = RecordTransaction {
            content_id,
            owner: identity.fingerprint(),
            access,
            description: description.into(),
            timestamp,
            owner_pubkey: identity.public_bytes(),
            signature: [0u8; SIGNATURE_LEN],
        };
        let unsigned = canonical_tx_bytes(&tx, false)?;
        tx.signature = sign(&unsigned, identity);
        Ok(tx)
    }
}

/// Deterministic serialization: content id, owner digest, access flag and
/// list, length-prefixed description, timestamp, owner public key, and
/// (optionally) the signature. All integers big-endian.
pub fn canonical_tx_bytes(
    tx: &RecordTransaction,
    include_signature: bool,
) -> Result<Vec<u8>, TxCodecError> {
    if tx.description.len() > MAX_DESCRIPTION_BYTES {
        return Err(TxCodecError::OversizeDescription);
    }
    let mut out = Vec::with_capacity(160 + tx.description.len());
    out.extend_from_slice(tx.content_id.as_bytes());
    out.extend_from_slice(tx.owner.digest());
    match &tx.access {
        AccessPolicy::Public => out.push(ACCESS_PUBLIC),
        AccessPolicy::Restricted(list) => {
            if list.len() > MAX_ACCESS_ENTRIES {
                return Err(TxCodecError::OversizeAccessList);
            }
            out.push(ACCESS_RESTRICTED);
            out.extend_from_slice(&(list.len() as u16).to_be_bytes());
            for fp in list {
                out.extend_from_slice(fp.digest());
            }
        }
    }
    out.extend_from_slice(&(tx.description.len() as u16).to_be_bytes());
    out.extend_from_slice(tx.description.as_bytes());
    out.extend_from_slice(&tx.timestamp.to_be_bytes());
    out.extend_from_slice(&tx.owner_pubkey);
    if include_signature {
        out.extend_from_slice(&tx.signature);
    }
    Ok(out)
}

/// Transaction id: sha2-256 over the signed canonical bytes.
pub fn tx_id(tx: &RecordTransaction) -> [u8; 32] {
    let bytes = canonical_tx_bytes(tx, true).expect("encodable transaction");
    Sha256::digest(bytes).into()
}

/// Strict inverse of [`canonical_tx_bytes`] with the signature included;
/// rejects trailing bytes.
pub fn decode_tx(bytes: &[u8]) -> Result<RecordTransaction, TxCodecError> {
    let err = TxCodecError::Malformed;
    let mut at = 0usize;
    let take = |at: &mut usize, n: usize| -> Result<&[u8], TxCodecError> {
        if *at + n > bytes.len() {
            return Err(err("truncated"));
        }
        let slice = &bytes[*at..*at + n];
        *at += n;
        Ok(slice)
    };

    let content_id = ContentId::from_multihash(take(&mut at, MULTIHASH_LEN)?)
        .map_err(|_| err("bad content id"))?;
    let owner = Fingerprint::from_digest(take(&mut at, 32)?.try_into().unwrap());
    let access = match take(&mut at, 1)?[0] {
        ACCESS_PUBLIC => AccessPolicy::Public,
        ACCESS_RESTRICTED => {
            let count = u16::from_be_bytes(take(&mut at, 2)?.try_into().unwrap()) as usize;
            let mut list = Vec::with_capacity(count.min(MAX_ACCESS_ENTRIES));
            if count > MAX_ACCESS_ENTRIES {
                return Err(TxCodecError::OversizeAccessList);
            }
            for _ in 0..count {
                list.push(Fingerprint::from_digest(
                    take(&mut at, 32)?.try_into().unwrap(),
                ));
            }
            AccessPolicy::Restricted(list)
        }
        _ => return Err(err("unknown access flag")),
    };
    let desc_len = u16::from_be_bytes(take(&mut at, 2)?.try_into().unwrap()) as usize;
    if desc_len > MAX_DESCRIPTION_BYTES {
        return Err(TxCodecError::OversizeDescription);
    }
    let description = std::str::from_utf8(take(&mut at, desc_len)?)
        .map_err(|_| err("description is not utf-8"))?
        .to_string();
    let timestamp = u64::from_be_bytes(take(&mut at, 8)?.try_into().unwrap());
    let owner_pubkey: [u8; 32] = take(&mut at, 32)?.try_into().unwrap();
    let signature: [u8; SIGNATURE_LEN] = take(&mut at, SIGNATURE_LEN)?.try_into().unwrap();
    if at != bytes.len() {
        return Err(err("trailing bytes"));
    }
    Ok(RecordTransaction {
        content_id,
        owner,
        access,
        description,
        timestamp,
        owner_pubkey,
        signature,
    })
}

/// Check every standalone invariant of a record transaction.
pub fn validate_tx(tx: &RecordTransaction) -> Result<(), TxRejection> {
    if ContentId::from_multihash(tx.content_id.as_bytes()).is_err() {
        return Err(TxRejection::MalformedContentId);
    }
    if tx.description.len() > MAX_DESCRIPTION_BYTES {
        return Err(TxRejection::OversizeDescription);
    }
    if let AccessPolicy::Restricted(list) = &tx.access {
        if list.is_empty() {
            return Err(TxRejection::EmptyAccessList);
        }
        if list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TxRejection::MalformedAccessList);
        }
    }
    match fingerprint(&tx.owner_pubkey) {
        Ok(fp) if fp == tx.owner => {}
        _ => return Err(TxRejection::FingerprintMismatch),
    }
    let unsigned =
        canonical_tx_bytes(tx, false).map_err(|_| TxRejection::OversizeDescription)?;
    match verify_sig(&unsigned, &tx.signature, &tx.owner_pubkey) {
        Ok(true) => Ok(()),
        _ => Err(TxRejection::BadSignature),
    }
}
