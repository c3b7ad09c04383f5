//! Key issuance for network participants.

use std::collections::BTreeMap;

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::LedgerError;

/// A participant's id and key pair.
#[derive(Debug, Clone)]
pub struct Identity {
    id: String,
    key: SigningKey,
}

impl Identity {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn public_key(&self) -> VerifyingKey {
        self.key.verifying_key()
    }

    pub fn signing_key(&self) -> &SigningKey {
        &self.key
    }

    pub fn sign(&self, message: &[u8]) -> [u8; 64] {
        self.key.sign(message).to_bytes()
    }
}

pub fn verify_signature(key: &VerifyingKey, message: &[u8], signature: &[u8; 64]) -> bool {
    key.verify_strict(message, &Signature::from_bytes(signature))
        .is_ok()
}

/// Generates key pairs and keeps the public directory.
#[derive(Debug, Clone)]
pub struct KeyAuthority {
    rng: ChaCha20Rng,
    directory: BTreeMap<String, VerifyingKey>,
}

impl KeyAuthority {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            directory: BTreeMap::new(),
        }
    }

    pub fn issue_identity(&mut self, id: &str) -> Result<Identity, LedgerError> {
        if self.directory.contains_key(id) {
            return Err(LedgerError::DuplicateId(id.to_owned()));
        }
        let mut secret = [0u8; 32];
        self.rng.fill_bytes(&mut secret);
        let key = SigningKey::from_bytes(&secret);
        self.directory.insert(id.to_owned(), key.verifying_key());
        Ok(Identity {
            id: id.to_owned(),
            key,
        })
    }

    pub fn directory(&self) -> &BTreeMap<String, VerifyingKey> {
        &self.directory
    }
}
