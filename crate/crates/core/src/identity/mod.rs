//! Signing identities ("accounts"), encryption keys, fingerprints, and the
//! on-disk keyring. Signing uses Ed25519; encryption keys are X25519 and
//! feed the multi-recipient container in [`container`].

mod container;
mod keyring;

pub use container::{decrypt, encrypt_for, encrypt_for_with_rng, ContainerError, EncryptedContainer};
pub use keyring::{KeyEntry, Keyring, KeyringError};

use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::rngs::OsRng;
use sha2::{Digest, Sha256};
use thiserror::Error;
use x25519_dalek::{PublicKey as X25519Public, StaticSecret};

pub const SIGNATURE_LEN: usize = 64;
pub const PUBLIC_KEY_LEN: usize = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdentityError {
    #[error("public key has length {0}, expected {PUBLIC_KEY_LEN}")]
    BadKeyLength(usize),
    #[error("signature has length {0}, expected {SIGNATURE_LEN}")]
    BadSignatureLength(usize),
    #[error("fingerprint text is not 64 lowercase hex characters")]
    BadFingerprintText,
}

/// SHA-256 digest of a public key; the short id is the last 16 hex
/// characters, used anywhere a human reads or types an identity.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fingerprint([u8; 32]);

impl Fingerprint {
    pub fn from_digest(digest: [u8; 32]) -> Self {
        Fingerprint(digest)
    }

    pub fn digest(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn short_id(&self) -> String {
        let hex = self.to_string();
        hex[hex.len() - 16..].to_string()
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", self.short_id())
    }
}

impl FromStr for Fingerprint {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 64 || s.chars().any(|c| c.is_ascii_uppercase()) {
            return Err(IdentityError::BadFingerprintText);
        }
        let bytes = hex::decode(s).map_err(|_| IdentityError::BadFingerprintText)?;
        Ok(Fingerprint(bytes.try_into().unwrap()))
    }
}

/// Fingerprint a raw 32-byte public key.
pub fn fingerprint(pubkey: &[u8]) -> Result<Fingerprint, IdentityError> {
    if pubkey.len() != PUBLIC_KEY_LEN {
        return Err(IdentityError::BadKeyLength(pubkey.len()));
    }
    Ok(Fingerprint(Sha256::digest(pubkey).into()))
}

/// Ledger-signing identity (the paper-style "account").
#[derive(Clone)]
pub struct Identity {
    signing: SigningKey,
}

impl Identity {
    pub fn generate() -> Self {
        Identity {
            signing: SigningKey::generate(&mut OsRng),
        }
    }

    pub fn from_secret_bytes(secret: &[u8; 32]) -> Self {
        Identity {
            signing: SigningKey::from_bytes(secret),
        }
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn public_bytes(&self) -> [u8; 32] {
        self.signing.verifying_key().to_bytes()
    }

    pub fn fingerprint(&self) -> Fingerprint {
        fingerprint(&self.public_bytes()).expect("key length fixed")
    }
}

impl fmt::Debug for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Identity({})", self.fingerprint().short_id())
    }
}

/// X25519 keypair used for the hybrid-encryption containers (the
/// paper-style "key").
#[derive(Clone)]
pub struct EncryptionKey {
    secret: StaticSecret,
    public: X25519Public,
}

impl EncryptionKey {
    pub fn generate() -> Self {
        let secret = StaticSecret::random_from_rng(OsRng);
        let public = X25519Public::from(&secret);
        EncryptionKey { secret, public }
    }

    pub fn from_secret_bytes(secret: &[u8; 32]) -> Self {
        let secret = StaticSecret::from(*secret);
        let public = X25519Public::from(&secret);
        EncryptionKey { secret, public }
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.secret.to_bytes()
    }

    pub fn public_bytes(&self) -> [u8; 32] {
        *self.public.as_bytes()
    }

    pub fn fingerprint(&self) -> Fingerprint {
        fingerprint(&self.public_bytes()).expect("key length fixed")
    }

    pub(crate) fn secret(&self) -> &StaticSecret {
        &self.secret
    }
}

impl fmt::Debug for EncryptionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EncryptionKey({})", self.fingerprint().short_id())
    }
}

/// Sign a message, returning the detached 64-byte signature.
pub fn sign(message: &[u8], id: &Identity) -> [u8; SIGNATURE_LEN] {
    id.signing.sign(message).to_bytes()
}

/// Verify a detached signature. Malformed signature lengths are an error;
/// everything else (bad key bytes included) verifies as `false`.
pub fn verify_sig(message: &[u8], signature: &[u8], pubkey: &[u8; 32]) -> Result<bool, IdentityError> {
    if signature.len() != SIGNATURE_LEN {
        return Err(IdentityError::BadSignatureLength(signature.len()));
    }
    let sig = Signature::from_slice(signature).map_err(|_| {
        IdentityError::BadSignatureLength(signature.len())
    })?;
    let Ok(key) = VerifyingKey::from_bytes(pubkey) else {
        return Ok(false);
    };
    Ok(key.verify(message, &sig).is_ok())
}
