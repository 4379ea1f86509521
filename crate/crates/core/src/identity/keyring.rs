//! One file per key under the configured key directory. Secrets are hex
//! encoded with owner-only permissions; imported public keys (other
//! people's encryption keys) live alongside them so recipients can be
//! resolved by fingerprint.
//!
//! Naming: `sign-NNNN.sec` for accounts, `enc-NNNN.sec` for local
//! encryption keys, `enc-NNNN.pub` for imported public halves. Listing
//! order (and therefore the index a user types) is the numeric order.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{EncryptionKey, Fingerprint, Identity};

#[derive(Debug, Error)]
pub enum KeyringError {
    #[error("key directory i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("key file {0} is malformed")]
    Malformed(PathBuf),
    #[error("no key at index {0}")]
    NoSuchIndex(usize),
    #[error("key {0} has no local secret")]
    NoSecret(usize),
    #[error("no known key with fingerprint {0}")]
    UnknownFingerprint(String),
}

/// A listable key: its position, fingerprint, and whether the secret half
/// is locally held.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyEntry {
    pub index: usize,
    pub fingerprint: Fingerprint,
    pub has_secret: bool,
}

#[derive(Debug, Clone)]
pub struct Keyring {
    dir: PathBuf,
}

enum EncRecord {
    Secret(EncryptionKey),
    Public([u8; 32]),
}

impl EncRecord {
    fn public_bytes(&self) -> [u8; 32] {
        match self {
            EncRecord::Secret(k) => k.public_bytes(),
            EncRecord::Public(p) => *p,
        }
    }

    fn fingerprint(&self) -> Fingerprint {
        super::fingerprint(&self.public_bytes()).expect("key length fixed")
    }
}

impl Keyring {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, KeyringError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Keyring { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn generate_identity(&self) -> Result<KeyEntry, KeyringError> {
        let id = Identity::generate();
        let index = self.next_index("sign-")?;
        self.write_secret(
            &self.dir.join(format!("sign-{index:04}.sec")),
            &id.secret_bytes(),
        )?;
        Ok(KeyEntry {
            index,
            fingerprint: id.fingerprint(),
            has_secret: true,
        })
    }

    pub fn generate_encryption_key(&self) -> Result<KeyEntry, KeyringError> {
        let key = EncryptionKey::generate();
        let index = self.next_index("enc-")?;
        self.write_secret(
            &self.dir.join(format!("enc-{index:04}.sec")),
            &key.secret_bytes(),
        )?;
        Ok(KeyEntry {
            index,
            fingerprint: key.fingerprint(),
            has_secret: true,
        })
    }

    /// Register another user's encryption public key so it can be named
    /// as a recipient. Re-importing a known key returns its existing slot.
    pub fn import_encryption_public(&self, public: &[u8; 32]) -> Result<KeyEntry, KeyringError> {
        let fp = super::fingerprint(public).expect("key length fixed");
        for (index, record) in self.enc_records()? {
            if record.fingerprint() == fp {
                return Ok(KeyEntry {
                    index,
                    fingerprint: fp,
                    has_secret: matches!(record, EncRecord::Secret(_)),
                });
            }
        }
        let index = self.next_index("enc-")?;
        fs::write(
            self.dir.join(format!("enc-{index:04}.pub")),
            format!("{}\n", hex::encode(public)),
        )?;
        Ok(KeyEntry {
            index,
            fingerprint: fp,
            has_secret: false,
        })
    }

    /// Signing identities, in index order.
    pub fn accounts(&self) -> Result<Vec<KeyEntry>, KeyringError> {
        let mut out = Vec::new();
        for (index, path) in self.indexed_files("sign-", ".sec")? {
            let id = Identity::from_secret_bytes(&self.read_key_file(&path)?);
            out.push(KeyEntry {
                index,
                fingerprint: id.fingerprint(),
                has_secret: true,
            });
        }
        Ok(out)
    }

    /// Encryption keys (local and imported), in index order.
    pub fn encryption_keys(&self) -> Result<Vec<KeyEntry>, KeyringError> {
        Ok(self
            .enc_records()?
            .into_iter()
            .map(|(index, record)| KeyEntry {
                index,
                fingerprint: record.fingerprint(),
                has_secret: matches!(record, EncRecord::Secret(_)),
            })
            .collect())
    }

    pub fn account(&self, index: usize) -> Result<Identity, KeyringError> {
        let path = self.dir.join(format!("sign-{index:04}.sec"));
        if !path.exists() {
            return Err(KeyringError::NoSuchIndex(index));
        }
        Ok(Identity::from_secret_bytes(&self.read_key_file(&path)?))
    }

    pub fn encryption_key(&self, index: usize) -> Result<EncryptionKey, KeyringError> {
        match self.enc_record(index)? {
            EncRecord::Secret(key) => Ok(key),
            EncRecord::Public(_) => Err(KeyringError::NoSecret(index)),
        }
    }

    pub fn encryption_public(&self, index: usize) -> Result<[u8; 32], KeyringError> {
        Ok(self.enc_record(index)?.public_bytes())
    }

    /// Resolve a recipient fingerprint to its public key bytes.
    pub fn resolve_encryption_public(
        &self,
        fingerprint: &Fingerprint,
    ) -> Result<[u8; 32], KeyringError> {
        for (_, record) in self.enc_records()? {
            if record.fingerprint() == *fingerprint {
                return Ok(record.public_bytes());
            }
        }
        Err(KeyringError::UnknownFingerprint(fingerprint.short_id()))
    }

    fn enc_record(&self, index: usize) -> Result<EncRecord, KeyringError> {
        let sec = self.dir.join(format!("enc-{index:04}.sec"));
        if sec.exists() {
            return Ok(EncRecord::Secret(EncryptionKey::from_secret_bytes(
                &self.read_key_file(&sec)?,
            )));
        }
        let pb = self.dir.join(format!("enc-{index:04}.pub"));
        if pb.exists() {
            return Ok(EncRecord::Public(self.read_key_file(&pb)?));
        }
        Err(KeyringError::NoSuchIndex(index))
    }

    fn enc_records(&self) -> Result<Vec<(usize, EncRecord)>, KeyringError> {
        let mut out = Vec::new();
        for (index, path) in self.indexed_files("enc-", ".sec")? {
            out.push((
                index,
                EncRecord::Secret(EncryptionKey::from_secret_bytes(
                    &self.read_key_file(&path)?,
                )),
            ));
        }
        for (index, path) in self.indexed_files("enc-", ".pub")? {
            out.push((index, EncRecord::Public(self.read_key_file(&path)?)));
        }
        out.sort_by_key(|(index, _)| *index);
        Ok(out)
    }

    fn indexed_files(
        &self,
        prefix: &str,
        suffix: &str,
    ) -> Result<Vec<(usize, PathBuf)>, KeyringError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(stem) = name.strip_prefix(prefix).and_then(|s| s.strip_suffix(suffix)) {
                if let Ok(index) = stem.parse::<usize>() {
                    out.push((index, entry.path()));
                }
            }
        }
        out.sort_by_key(|(index, _)| *index);
        Ok(out)
    }

    fn next_index(&self, prefix: &str) -> Result<usize, KeyringError> {
        let mut next = 0;
        for suffix in [".sec", ".pub"] {
            if let Some((last, _)) = self.indexed_files(prefix, suffix)?.last() {
                next = next.max(last + 1);
            }
        }
        Ok(next)
    }

    fn read_key_file(&self, path: &Path) -> Result<[u8; 32], KeyringError> {
        let text = fs::read_to_string(path)?;
        let bytes =
            hex::decode(text.trim()).map_err(|_| KeyringError::Malformed(path.to_path_buf()))?;
        bytes
            .try_into()
            .map_err(|_| KeyringError::Malformed(path.to_path_buf()))
    }

    fn write_secret(&self, path: &Path, secret: &[u8; 32]) -> Result<(), KeyringError> {
        fs::write(path, format!("{}\n", hex::encode(secret)))?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            fs::set_permissions(path, fs::Permissions::from_mode(0o600))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring() -> (tempfile::TempDir, Keyring) {
        let dir = tempfile::tempdir().unwrap();
        let ring = Keyring::open(dir.path().join("keys")).unwrap();
        (dir, ring)
    }

    #[test]
    fn generated_keys_list_at_next_index() {
        let (_dir, ring) = ring();
        assert!(ring.encryption_keys().unwrap().is_empty());
        let first = ring.generate_encryption_key().unwrap();
        let second = ring.generate_encryption_key().unwrap();
        assert_eq!((first.index, second.index), (0, 1));
        let listed = ring.encryption_keys().unwrap();
        assert_eq!(listed, vec![first, second]);
    }

    #[test]
    fn accounts_and_keys_are_separate_sequences() {
        let (_dir, ring) = ring();
        ring.generate_encryption_key().unwrap();
        let account = ring.generate_identity().unwrap();
        assert_eq!(account.index, 0);
        assert_eq!(ring.accounts().unwrap().len(), 1);
        assert_eq!(ring.encryption_keys().unwrap().len(), 1);
    }

    #[test]
    fn import_and_resolve_by_fingerprint() {
        let (_dir, ring) = ring();
        ring.generate_encryption_key().unwrap();
        let foreign = EncryptionKey::generate();
        let entry = ring.import_encryption_public(&foreign.public_bytes()).unwrap();
        assert_eq!(entry.index, 1);
        assert!(!entry.has_secret);
        let resolved = ring
            .resolve_encryption_public(&foreign.fingerprint())
            .unwrap();
        assert_eq!(resolved, foreign.public_bytes());
        // re-import is a no-op
        let again = ring.import_encryption_public(&foreign.public_bytes()).unwrap();
        assert_eq!(again.index, 1);
        assert!(ring.encryption_key(1).is_err());
    }

    #[test]
    fn missing_index_errors() {
        let (_dir, ring) = ring();
        assert!(matches!(
            ring.account(3),
            Err(KeyringError::NoSuchIndex(3))
        ));
        assert!(matches!(
            ring.resolve_encryption_public(&super::super::fingerprint(&[9u8; 32]).unwrap()),
            Err(KeyringError::UnknownFingerprint(_))
        ));
    }

    #[test]
    fn secrets_survive_reload() {
        let (_dir, ring) = ring();
        let entry = ring.generate_identity().unwrap();
        let reloaded = ring.account(entry.index).unwrap();
        assert_eq!(reloaded.fingerprint(), entry.fingerprint);
    }

    #[cfg(unix)]
    #[test]
    fn secret_files_are_owner_only() {
        use std::os::unix::fs::PermissionsExt;
        let (_dir, ring) = ring();
        ring.generate_identity().unwrap();
        let path = ring.dir().join("sign-0000.sec");
        let mode = std::fs::metadata(path).unwrap().permissions().mode();
        assert_eq!(mode & 0o777, 0o600);
    }
}
