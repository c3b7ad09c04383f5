//! Transactions and their canonical encoding.

use sha2::{Digest, Sha256};

use super::identity::Identity;
use super::wire::{Reader, Writer};
use super::LedgerError;
use crate::codec::Blob;

pub type Hash = [u8; 32];

/// Digest of a transaction's full canonical bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TxId(pub Hash);

impl std::fmt::Display for TxId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in &self.0[..8] {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

pub fn sha256(bytes: &[u8]) -> Hash {
    Sha256::digest(bytes).into()
}

#[derive(Debug, Clone, PartialEq)]
pub enum TxBody {
    ModelUpload {
        blob: Vec<u8>,
        content_hash: Hash,
        samples: u64,
    },
    Aggregate {
        inputs: Vec<TxId>,
        weights: Vec<f64>,
        result: Vec<u8>,
        content_hash: Hash,
    },
}

impl TxBody {
    /// Blob this transaction makes available for retrieval.
    pub fn blob(&self) -> &[u8] {
        match self {
            TxBody::ModelUpload { blob, .. } => blob,
            TxBody::Aggregate { result, .. } => result,
        }
    }

    pub fn content_hash(&self) -> &Hash {
        match self {
            TxBody::ModelUpload { content_hash, .. } | TxBody::Aggregate { content_hash, .. } => {
                content_hash
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transaction {
    pub channel: String,
    pub body: TxBody,
    pub proposer: String,
    /// Distinguishes otherwise identical proposals.
    pub nonce: u64,
    pub signature: [u8; 64],
}

/// Metadata accompanying a model or knowledge-base upload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UploadMeta {
    pub channel: String,
    pub samples: u64,
    pub nonce: u64,
}

const TAG_UPLOAD: u8 = 0;
const TAG_AGGREGATE: u8 = 1;

impl Transaction {
    /// Bytes covered by the proposer signature.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        match &self.body {
            TxBody::ModelUpload { .. } => w.u8(TAG_UPLOAD),
            TxBody::Aggregate { .. } => w.u8(TAG_AGGREGATE),
        };
        w.str(&self.channel);
        match &self.body {
            TxBody::ModelUpload {
                blob,
                content_hash,
                samples,
            } => {
                w.bytes(blob).raw(content_hash).u64(*samples);
            }
            TxBody::Aggregate {
                inputs,
                weights,
                result,
                content_hash,
            } => {
                w.u32(inputs.len() as u32);
                for id in inputs {
                    w.raw(&id.0);
                }
                w.u32(weights.len() as u32);
                for &x in weights {
                    w.f64(x);
                }
                w.bytes(result).raw(content_hash);
            }
        }
        w.str(&self.proposer).u64(self.nonce);
        w.buf
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.signing_bytes();
        out.extend_from_slice(&self.signature);
        out
    }

    pub fn id(&self) -> TxId {
        TxId(sha256(&self.to_bytes()))
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, LedgerError> {
        let tag = r.u8()?;
        let channel = r.str()?;
        let body = match tag {
            TAG_UPLOAD => TxBody::ModelUpload {
                blob: r.bytes()?.to_vec(),
                content_hash: r.array()?,
                samples: r.u64()?,
            },
            TAG_AGGREGATE => {
                let n = r.count(32)?;
                let inputs = (0..n)
                    .map(|_| r.array().map(TxId))
                    .collect::<Result<_, _>>()?;
                let m = r.count(8)?;
                let weights = (0..m).map(|_| r.f64()).collect::<Result<_, _>>()?;
                TxBody::Aggregate {
                    inputs,
                    weights,
                    result: r.bytes()?.to_vec(),
                    content_hash: r.array()?,
                }
            }
            _ => return Err(LedgerError::Decode("unknown transaction kind")),
        };
        Ok(Self {
            channel,
            body,
            proposer: r.str()?,
            nonce: r.u64()?,
            signature: r.array()?,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LedgerError> {
        let mut r = Reader::new(bytes);
        let tx = Self::read(&mut r)?;
        r.finish()?;
        Ok(tx)
    }

    /// Signs the transaction in place with `identity`, which becomes the proposer.
    pub fn sign_with(mut self, identity: &Identity) -> Self {
        self.proposer = identity.id().to_owned();
        self.signature = identity.sign(&self.signing_bytes());
        self
    }
}

/// Signed upload of a serialized model or knowledge base.
pub fn create_upload_tx(
    blob: Vec<u8>,
    meta: UploadMeta,
    identity: &Identity,
) -> Result<Transaction, LedgerError> {
    Blob::parse(&blob).map_err(LedgerError::MalformedBlob)?;
    if meta.samples == 0 {
        return Err(LedgerError::InvalidMeta("sample count must be positive"));
    }
    let content_hash = sha256(&blob);
    Ok(Transaction {
        channel: meta.channel,
        body: TxBody::ModelUpload {
            blob,
            content_hash,
            samples: meta.samples,
        },
        proposer: String::new(),
        nonce: meta.nonce,
        signature: [0; 64],
    }
    .sign_with(identity))
}

/// Signed aggregate with caller-supplied inputs, weights and result.
pub fn create_aggregate_tx(
    channel: &str,
    inputs: Vec<TxId>,
    weights: Vec<f64>,
    result: Vec<u8>,
    nonce: u64,
    identity: &Identity,
) -> Transaction {
    let content_hash = sha256(&result);
    Transaction {
        channel: channel.to_owned(),
        body: TxBody::Aggregate {
            inputs,
            weights,
            result,
            content_hash,
        },
        proposer: String::new(),
        nonce,
        signature: [0; 64],
    }
    .sign_with(identity)
}
