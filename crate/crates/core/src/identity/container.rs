//! Multi-recipient hybrid encryption envelope.
//!
//! Layout (all integers big-endian):
//!
//! ```text
//! "DDE1" | u16 slot_count | slots | 24-byte nonce | u64 ct_len | ciphertext
//! slot = 32-byte recipient fingerprint digest
//!      | 32-byte ephemeral X25519 public
//!      | 48-byte wrapped file key (32 key + 16 tag)
//! ```
//!
//! The body is XChaCha20-Poly1305 under a random 32-byte file key, with
//! everything before the nonce bound in as associated data. Each slot wraps
//! the file key under a key derived from an ephemeral X25519 agreement with
//! that recipient, so any listed recipient recovers the same plaintext and
//! nobody else authenticates.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{Key, XChaCha20Poly1305, XNonce};
use rand::rngs::OsRng;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;
use x25519_dalek::{PublicKey as X25519Public, StaticSecret};

use super::{fingerprint, EncryptionKey, Fingerprint};

pub const CONTAINER_MAGIC: [u8; 4] = *b"DDE1";
const SLOT_LEN: usize = 32 + 32 + 48;
const NONCE_LEN: usize = 24;
const TAG_LEN: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContainerError {
    #[error("recipient list is empty")]
    NoRecipients,
    #[error("container bytes are malformed: {0}")]
    Malformed(&'static str),
    #[error("key {0} is not a recipient of this container")]
    NotRecipient(String),
    #[error("authentication failed: container damaged or key not authorized")]
    Tamper,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecipientSlot {
    pub recipient: Fingerprint,
    pub ephemeral_public: [u8; 32],
    pub wrapped_key: [u8; 48],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedContainer {
    pub slots: Vec<RecipientSlot>,
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
}

impl EncryptedContainer {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.header_bytes();
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&(self.ciphertext.len() as u64).to_be_bytes());
        out.extend_from_slice(&self.ciphertext);
        out
    }

    /// Everything before the nonce; bound into the body AEAD as
    /// associated data so slot tampering is caught even for recipients
    /// whose own slot is intact.
    fn header_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 2 + self.slots.len() * SLOT_LEN);
        out.extend_from_slice(&CONTAINER_MAGIC);
        out.extend_from_slice(&(self.slots.len() as u16).to_be_bytes());
        for slot in &self.slots {
            out.extend_from_slice(slot.recipient.digest());
            out.extend_from_slice(&slot.ephemeral_public);
            out.extend_from_slice(&slot.wrapped_key);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ContainerError> {
        let err = ContainerError::Malformed;
        if bytes.len() < 6 {
            return Err(err("shorter than header"));
        }
        if bytes[..4] != CONTAINER_MAGIC {
            return Err(err("bad magic"));
        }
        let slot_count = u16::from_be_bytes(bytes[4..6].try_into().unwrap()) as usize;
        if slot_count == 0 {
            return Err(err("zero recipient slots"));
        }
        let slots_end = 6 + slot_count * SLOT_LEN;
        let fixed_end = slots_end + NONCE_LEN + 8;
        if bytes.len() < fixed_end {
            return Err(err("truncated"));
        }
        let mut slots = Vec::with_capacity(slot_count);
        for i in 0..slot_count {
            let at = 6 + i * SLOT_LEN;
            slots.push(RecipientSlot {
                recipient: Fingerprint::from_digest(bytes[at..at + 32].try_into().unwrap()),
                ephemeral_public: bytes[at + 32..at + 64].try_into().unwrap(),
                wrapped_key: bytes[at + 64..at + 112].try_into().unwrap(),
            });
        }
        let nonce: [u8; NONCE_LEN] = bytes[slots_end..slots_end + NONCE_LEN].try_into().unwrap();
        let ct_len =
            u64::from_be_bytes(bytes[slots_end + NONCE_LEN..fixed_end].try_into().unwrap());
        let ciphertext = &bytes[fixed_end..];
        if ciphertext.len() as u64 != ct_len {
            return Err(err("ciphertext length mismatch"));
        }
        if ct_len < TAG_LEN as u64 {
            return Err(err("ciphertext shorter than tag"));
        }
        Ok(EncryptedContainer {
            slots,
            nonce,
            ciphertext: ciphertext.to_vec(),
        })
    }
}

/// Wrap-key derivation: sha2-256 over the shared secret and both public
/// halves, so every slot authenticates its exact ephemeral/recipient pair.
fn wrap_key(shared: &[u8; 32], ephemeral_public: &[u8; 32], recipient_public: &[u8; 32]) -> Key {
    let mut h = Sha256::new();
    h.update(b"ddash-container-wrap-v1");
    h.update(shared);
    h.update(ephemeral_public);
    h.update(recipient_public);
    Key::from(<[u8; 32]>::from(h.finalize()))
}

/// Encrypt `plaintext` so each of `recipients` (deduplicated by
/// fingerprint) can decrypt it.
pub fn encrypt_for(
    plaintext: &[u8],
    recipients: &[[u8; 32]],
) -> Result<EncryptedContainer, ContainerError> {
    encrypt_for_with_rng(plaintext, recipients, &mut OsRng)
}

/// RNG-injectable variant used to build reproducible test vectors.
pub fn encrypt_for_with_rng(
    plaintext: &[u8],
    recipients: &[[u8; 32]],
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<EncryptedContainer, ContainerError> {
    let mut deduped: Vec<[u8; 32]> = Vec::new();
    let mut seen = Vec::new();
    for pubkey in recipients {
        let fp = fingerprint(pubkey).expect("key length fixed");
        if !seen.contains(&fp) {
            seen.push(fp);
            deduped.push(*pubkey);
        }
    }
    if deduped.is_empty() {
        return Err(ContainerError::NoRecipients);
    }

    let mut file_key = [0u8; 32];
    rng.fill_bytes(&mut file_key);
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);

    let mut slots = Vec::with_capacity(deduped.len());
    for pubkey in &deduped {
        let mut eph_secret_bytes = [0u8; 32];
        rng.fill_bytes(&mut eph_secret_bytes);
        let eph_secret = StaticSecret::from(eph_secret_bytes);
        let eph_public = X25519Public::from(&eph_secret);
        let shared = eph_secret.diffie_hellman(&X25519Public::from(*pubkey));
        let cipher = XChaCha20Poly1305::new(&wrap_key(
            shared.as_bytes(),
            eph_public.as_bytes(),
            pubkey,
        ));
        let wrapped = cipher
            .encrypt(&XNonce::from([0u8; NONCE_LEN]), file_key.as_slice())
            .expect("wrap never fails");
        slots.push(RecipientSlot {
            recipient: fingerprint(pubkey).expect("key length fixed"),
            ephemeral_public: *eph_public.as_bytes(),
            wrapped_key: wrapped.try_into().expect("wrapped key is 48 bytes"),
        });
    }

    let mut container = EncryptedContainer {
        slots,
        nonce,
        ciphertext: Vec::new(),
    };
    let cipher = XChaCha20Poly1305::new(&Key::from(file_key));
    container.ciphertext = cipher
        .encrypt(
            &XNonce::from(nonce),
            Payload {
                msg: plaintext,
                aad: &container.header_bytes(),
            },
        )
        .expect("encrypt never fails");
    Ok(container)
}

/// Recover the plaintext with one recipient key. The key's fingerprint
/// must match a slot, the slot's wrap must authenticate, and the body tag
/// must validate before any plaintext is released.
pub fn decrypt(
    container: &EncryptedContainer,
    key: &EncryptionKey,
) -> Result<Vec<u8>, ContainerError> {
    let fp = key.fingerprint();
    let slot = container
        .slots
        .iter()
        .find(|s| s.recipient == fp)
        .ok_or_else(|| ContainerError::NotRecipient(fp.short_id()))?;

    let shared = key
        .secret()
        .diffie_hellman(&X25519Public::from(slot.ephemeral_public));
    let cipher = XChaCha20Poly1305::new(&wrap_key(
        shared.as_bytes(),
        &slot.ephemeral_public,
        &key.public_bytes(),
    ));
    let file_key: [u8; 32] = cipher
        .decrypt(&XNonce::from([0u8; NONCE_LEN]), slot.wrapped_key.as_slice())
        .map_err(|_| ContainerError::Tamper)?
        .try_into()
        .map_err(|_| ContainerError::Tamper)?;

    let cipher = XChaCha20Poly1305::new(&Key::from(file_key));
    cipher
        .decrypt(
            &XNonce::from(container.nonce),
            Payload {
                msg: &container.ciphertext,
                aad: &container.header_bytes(),
            },
        )
        .map_err(|_| ContainerError::Tamper)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_single_recipient() {
        let a = EncryptionKey::generate();
        let container = encrypt_for(b"secret data", &[a.public_bytes()]).unwrap();
        assert_eq!(decrypt(&container, &a).unwrap(), b"secret data");
    }

    #[test]
    fn multi_recipient_and_exclusivity() {
        let (a, b, c) = (
            EncryptionKey::generate(),
            EncryptionKey::generate(),
            EncryptionKey::generate(),
        );
        let container =
            encrypt_for(b"shared", &[a.public_bytes(), b.public_bytes()]).unwrap();
        assert_eq!(decrypt(&container, &a).unwrap(), b"shared");
        assert_eq!(decrypt(&container, &b).unwrap(), b"shared");
        assert!(matches!(
            decrypt(&container, &c),
            Err(ContainerError::NotRecipient(_))
        ));
    }

    #[test]
    fn empty_recipient_list_rejected() {
        assert_eq!(
            encrypt_for(b"x", &[]).unwrap_err(),
            ContainerError::NoRecipients
        );
    }

    #[test]
    fn duplicate_recipients_collapse_to_one_slot() {
        let a = EncryptionKey::generate();
        let container = encrypt_for(b"x", &[a.public_bytes(), a.public_bytes()]).unwrap();
        assert_eq!(container.slots.len(), 1);
    }

    #[test]
    fn ciphertext_flip_is_tamper() {
        let a = EncryptionKey::generate();
        let mut container = encrypt_for(b"payload", &[a.public_bytes()]).unwrap();
        container.ciphertext[3] ^= 0x10;
        assert_eq!(decrypt(&container, &a).unwrap_err(), ContainerError::Tamper);
    }

    #[test]
    fn foreign_slot_flip_is_tamper_for_intact_recipient() {
        // a's own slot stays intact; damage to b's slot must still fail
        // a's decrypt because the header is bound into the body AEAD.
        let (a, b) = (EncryptionKey::generate(), EncryptionKey::generate());
        let mut container =
            encrypt_for(b"payload", &[a.public_bytes(), b.public_bytes()]).unwrap();
        let victim = container
            .slots
            .iter_mut()
            .find(|s| s.recipient == b.fingerprint())
            .unwrap();
        victim.wrapped_key[0] ^= 1;
        assert_eq!(decrypt(&container, &a).unwrap_err(), ContainerError::Tamper);
    }

    #[test]
    fn forged_slot_fingerprint_fails_authentication() {
        // An attacker can relabel a slot with c's fingerprint, but c's
        // unwrap must fail: the wrap key commits to the real recipient.
        let (a, c) = (EncryptionKey::generate(), EncryptionKey::generate());
        let mut container = encrypt_for(b"payload", &[a.public_bytes()]).unwrap();
        container.slots[0].recipient = c.fingerprint();
        assert_eq!(decrypt(&container, &c).unwrap_err(), ContainerError::Tamper);
    }

    #[test]
    fn encode_decode_roundtrip() {
        let (a, b) = (EncryptionKey::generate(), EncryptionKey::generate());
        let container =
            encrypt_for(b"roundtrip body", &[a.public_bytes(), b.public_bytes()]).unwrap();
        let decoded = EncryptedContainer::decode(&container.encode()).unwrap();
        assert_eq!(decoded, container);
        assert_eq!(decrypt(&decoded, &b).unwrap(), b"roundtrip body");
    }

    #[test]
    fn layout_sizes() {
        let (a, b) = (EncryptionKey::generate(), EncryptionKey::generate());
        let plaintext = vec![0x5au8; 1 << 20];
        let container = encrypt_for(&plaintext, &[a.public_bytes(), b.public_bytes()]).unwrap();
        assert_eq!(container.slots.len(), 2);
        assert_eq!(container.ciphertext.len(), plaintext.len() + TAG_LEN);
        let encoded = container.encode();
        assert_eq!(
            encoded.len(),
            4 + 2 + 2 * SLOT_LEN + NONCE_LEN + 8 + plaintext.len() + TAG_LEN
        );
    }
}
