//! Consortium ledger for model and knowledge-base exchange.
//!
//! Each task channel keeps its own hash-chained sequence of blocks. Blocks are
//! proposed round-robin by the validator set and committed once at least
//! `ceil(2n/3)` validators endorse them after revalidating every transaction.
//! Aggregates are checked by recomputing the weighted average from the
//! committed uploads they reference.

mod block;
mod fedavg;
mod identity;
mod tx;
mod wire;

use std::collections::{BTreeMap, BTreeSet};

use ed25519_dalek::VerifyingKey;
use thiserror::Error;

use crate::codec::{Blob, CodecError, KNOWLEDGE_MAGIC, MODEL_MAGIC};

pub use block::{Block, Endorsement};
pub use fedavg::{fedavg, fedavg_blobs, fedavg_knowledge, FedAvgError};
pub use identity::{verify_signature, Identity, KeyAuthority};
pub use tx::{
    create_aggregate_tx, create_upload_tx, sha256, Hash, Transaction, TxBody, TxId, UploadMeta,
};

/// Elementwise tolerance when comparing a declared aggregate with its recomputation.
pub const AGGREGATE_TOLERANCE: f64 = 1e-12;

/// Why a transaction failed validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TxReject {
    UnknownSigner,
    BadSignature,
    BadHash,
    BadAggregation,
    MissingInput,
    MalformedBlob,
    InvalidMeta,
    Duplicate,
    WrongChannel,
}

/// Why a block failed verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockFault {
    Height,
    Link,
    Proposer,
    Endorsement,
    Quorum,
    Empty,
    Transaction(TxReject),
}

/// First block that fails verification.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("channel {channel:?} height {height}: {fault:?}")]
pub struct ChainFault {
    pub channel: String,
    pub height: u64,
    pub fault: BlockFault,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LedgerError {
    #[error("identity {0:?} already issued")]
    DuplicateId(String),
    #[error("blob does not parse: {0}")]
    MalformedBlob(CodecError),
    #[error("invalid metadata: {0}")]
    InvalidMeta(&'static str),
    #[error("decode error: {0}")]
    Decode(&'static str),
    #[error("validator set must be non-empty, distinct and registered")]
    InvalidValidatorSet,
    #[error("{actual:?} is not the scheduled proposer ({expected:?})")]
    NotProposer { expected: String, actual: String },
    #[error("no valid transactions to propose")]
    NoValidTxs,
    #[error("{endorsements} endorsements, {quorum} needed")]
    QuorumNotReached { endorsements: usize, quorum: usize },
    #[error("nothing committed for this channel and kind")]
    NothingCommitted,
    #[error("transaction rejected: {0:?}")]
    Rejected(TxReject),
    #[error("aggregation failed: {0}")]
    FedAvg(#[from] FedAvgError),
    #[error(transparent)]
    Chain(#[from] ChainFault),
}

/// What a blob holds, read from its magic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlobKind {
    Model,
    Knowledge,
}

impl BlobKind {
    pub fn of(blob: &[u8]) -> Option<Self> {
        match blob.get(..4)? {
            m if m == MODEL_MAGIC => Some(BlobKind::Model),
            m if m == KNOWLEDGE_MAGIC => Some(BlobKind::Knowledge),
            _ => None,
        }
    }
}

/// A block plus the transactions the proposer left out.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub block: Block,
    pub excluded: Vec<(TxId, TxReject)>,
}

/// A validator taking part in a commit round; offline validators do not endorse.
#[derive(Debug, Clone, Copy)]
pub struct Validator<'a> {
    pub identity: &'a Identity,
    pub online: bool,
}

/// Position in the channel's block list, not the height the block claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Location {
    height: u64,
    index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    directory: BTreeMap<String, VerifyingKey>,
    validators: Vec<String>,
    channels: BTreeMap<String, Vec<Block>>,
    committed: BTreeMap<TxId, (String, Location)>,
    latest: BTreeMap<(String, BlobKind), TxId>,
}

impl Ledger {
    pub fn new(
        directory: BTreeMap<String, VerifyingKey>,
        validators: Vec<String>,
    ) -> Result<Self, LedgerError> {
        let distinct: BTreeSet<&String> = validators.iter().collect();
        if validators.is_empty()
            || distinct.len() != validators.len()
            || validators.iter().any(|v| !directory.contains_key(v))
        {
            return Err(LedgerError::InvalidValidatorSet);
        }
        Ok(Self {
            directory,
            validators,
            channels: BTreeMap::new(),
            committed: BTreeMap::new(),
            latest: BTreeMap::new(),
        })
    }

    /// Adds a late participant's public key.
    pub fn register(&mut self, id: &str, key: VerifyingKey) -> Result<(), LedgerError> {
        if self.directory.contains_key(id) {
            return Err(LedgerError::DuplicateId(id.to_owned()));
        }
        self.directory.insert(id.to_owned(), key);
        Ok(())
    }

    pub fn validators(&self) -> &[String] {
        &self.validators
    }

    /// `ceil(2n / 3)` for `n` validators.
    pub fn quorum(&self) -> usize {
        (2 * self.validators.len()).div_ceil(3)
    }

    pub fn scheduled_proposer(&self, height: u64) -> &str {
        &self.validators[(height % self.validators.len() as u64) as usize]
    }

    pub fn channels(&self) -> impl Iterator<Item = &str> {
        self.channels.keys().map(String::as_str)
    }

    pub fn blocks(&self, channel: &str) -> &[Block] {
        self.channels.get(channel).map_or(&[], Vec::as_slice)
    }

    pub fn next_height(&self, channel: &str) -> u64 {
        self.blocks(channel).len() as u64
    }

    pub fn tip_hash(&self, channel: &str) -> Hash {
        self.blocks(channel).last().map_or([0; 32], Block::hash)
    }

    pub fn transaction_count(&self) -> usize {
        self.committed.len()
    }

    pub fn transaction(&self, id: &TxId) -> Option<&Transaction> {
        let (channel, loc) = self.committed.get(id)?;
        Some(&self.channels[channel][loc.height as usize].transactions[loc.index])
    }

    fn committed_upload(&self, id: &TxId, channel: &str) -> Option<(&[u8], u64)> {
        match self.transaction(id) {
            Some(Transaction {
                channel: c,
                body: TxBody::ModelUpload { blob, samples, .. },
                ..
            }) if c == channel => Some((blob.as_slice(), *samples)),
            _ => None,
        }
    }

    /// Checks a transaction against the committed state.
    pub fn validate_transaction(&self, tx: &Transaction) -> Result<(), TxReject> {
        let key = self
            .directory
            .get(&tx.proposer)
            .ok_or(TxReject::UnknownSigner)?;
        if !verify_signature(key, &tx.signing_bytes(), &tx.signature) {
            return Err(TxReject::BadSignature);
        }
        if self.committed.contains_key(&tx.id()) {
            return Err(TxReject::Duplicate);
        }
        if sha256(tx.body.blob()) != *tx.body.content_hash() {
            return Err(TxReject::BadHash);
        }
        let parsed = Blob::parse(tx.body.blob()).map_err(|_| TxReject::MalformedBlob)?;
        match &tx.body {
            TxBody::ModelUpload { samples, .. } => {
                if *samples == 0 {
                    return Err(TxReject::InvalidMeta);
                }
                Ok(())
            }
            TxBody::Aggregate {
                inputs, weights, ..
            } => self.check_aggregate(&tx.channel, inputs, weights, &parsed),
        }
    }

    fn check_aggregate(
        &self,
        channel: &str,
        inputs: &[TxId],
        weights: &[f64],
        result: &Blob,
    ) -> Result<(), TxReject> {
        let distinct: BTreeSet<&TxId> = inputs.iter().collect();
        if inputs.is_empty() || distinct.len() != inputs.len() {
            return Err(TxReject::MissingInput);
        }
        let mut uploads = Vec::with_capacity(inputs.len());
        for id in inputs {
            uploads.push(
                self.committed_upload(id, channel)
                    .ok_or(TxReject::MissingInput)?,
            );
        }
        if weights.len() != inputs.len() {
            return Err(TxReject::BadAggregation);
        }
        for (&w, &(_, n)) in weights.iter().zip(&uploads) {
            if (w - n as f64).abs() > AGGREGATE_TOLERANCE * (n as f64).max(1.0) {
                return Err(TxReject::BadAggregation);
            }
        }
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        order.sort_by_key(|&k| inputs[k]);
        let blobs = order
            .iter()
            .map(|&k| Blob::parse(uploads[k].0))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| TxReject::MissingInput)?;
        let sorted_weights: Vec<f64> = order.iter().map(|&k| weights[k]).collect();
        let expected =
            fedavg_blobs(&blobs, &sorted_weights).map_err(|_| TxReject::BadAggregation)?;
        if !blobs_close(&expected, result) {
            return Err(TxReject::BadAggregation);
        }
        Ok(())
    }

    /// Builds the aggregate an honest device would propose over `inputs`.
    pub fn honest_aggregate(
        &self,
        channel: &str,
        inputs: &[TxId],
        nonce: u64,
        identity: &Identity,
    ) -> Result<Transaction, LedgerError> {
        let mut inputs = inputs.to_vec();
        inputs.sort();
        let mut blobs = Vec::with_capacity(inputs.len());
        let mut weights = Vec::with_capacity(inputs.len());
        for id in &inputs {
            let (blob, n) = self
                .committed_upload(id, channel)
                .ok_or(LedgerError::Rejected(TxReject::MissingInput))?;
            blobs.push(Blob::parse(blob).map_err(LedgerError::MalformedBlob)?);
            weights.push(n as f64);
        }
        let result = fedavg_blobs(&blobs, &weights)?.encode();
        Ok(create_aggregate_tx(
            channel, inputs, weights, result, nonce, identity,
        ))
    }

    /// Bundles the valid subset of `pending` into the next block of `channel`.
    pub fn propose_block(
        &self,
        channel: &str,
        pending: &[Transaction],
        proposer: &Identity,
    ) -> Result<Proposal, LedgerError> {
        let height = self.next_height(channel);
        let expected = self.scheduled_proposer(height);
        if proposer.id() != expected {
            return Err(LedgerError::NotProposer {
                expected: expected.to_owned(),
                actual: proposer.id().to_owned(),
            });
        }
        let mut included = Vec::new();
        let mut seen = BTreeSet::new();
        let mut excluded = Vec::new();
        for tx in pending {
            let id = tx.id();
            let verdict = if tx.channel != channel {
                Err(TxReject::WrongChannel)
            } else if !seen.insert(id) {
                Err(TxReject::Duplicate)
            } else {
                self.validate_transaction(tx)
            };
            match verdict {
                Ok(()) => included.push(tx.clone()),
                Err(reason) => excluded.push((id, reason)),
            }
        }
        if included.is_empty() {
            return Err(LedgerError::NoValidTxs);
        }
        Ok(Proposal {
            block: Block {
                height,
                prev_hash: self.tip_hash(channel),
                channel: channel.to_owned(),
                transactions: included,
                proposer: proposer.id().to_owned(),
                endorsements: Vec::new(),
            },
            excluded,
        })
    }

    /// Structural and transaction checks of a candidate block, endorsements aside.
    pub fn check_block(&self, block: &Block) -> Result<(), BlockFault> {
        if block.height != self.next_height(&block.channel) {
            return Err(BlockFault::Height);
        }
        if block.prev_hash != self.tip_hash(&block.channel) {
            return Err(BlockFault::Link);
        }
        if block.proposer != self.scheduled_proposer(block.height) {
            return Err(BlockFault::Proposer);
        }
        if block.transactions.is_empty() {
            return Err(BlockFault::Empty);
        }
        let mut seen = BTreeSet::new();
        for tx in &block.transactions {
            if tx.channel != block.channel {
                return Err(BlockFault::Transaction(TxReject::WrongChannel));
            }
            if !seen.insert(tx.id()) {
                return Err(BlockFault::Transaction(TxReject::Duplicate));
            }
            self.validate_transaction(tx)
                .map_err(BlockFault::Transaction)?;
        }
        Ok(())
    }

    fn check_endorsements(&self, block: &Block) -> Result<(), BlockFault> {
        let hash = block.hash();
        let mut seen = BTreeSet::new();
        for e in &block.endorsements {
            let key = self
                .validators
                .contains(&e.validator)
                .then(|| self.directory.get(&e.validator))
                .flatten()
                .ok_or(BlockFault::Endorsement)?;
            if !seen.insert(&e.validator) || !verify_signature(key, &hash, &e.signature) {
                return Err(BlockFault::Endorsement);
            }
        }
        if seen.len() < self.quorum() {
            return Err(BlockFault::Quorum);
        }
        Ok(())
    }

    /// A validator's endorsement, given only if the block revalidates.
    pub fn endorse(&self, block: &Block, validator: &Identity) -> Option<Endorsement> {
        if !self.validators.iter().any(|v| v == validator.id()) || self.check_block(block).is_err()
        {
            return None;
        }
        Some(Endorsement {
            validator: validator.id().to_owned(),
            signature: validator.sign(&block.hash()),
        })
    }

    /// Gathers endorsements in validator order and commits on quorum.
    pub fn endorse_and_commit(
        &mut self,
        mut block: Block,
        validators: &[Validator<'_>],
    ) -> Result<u64, LedgerError> {
        block.endorsements.clear();
        for id in &self.validators {
            if let Some(v) = validators
                .iter()
                .find(|v| v.online && v.identity.id() == id)
            {
                if let Some(e) = self.endorse(&block, v.identity) {
                    block.endorsements.push(e);
                }
            }
        }
        if block.endorsements.len() < self.quorum() {
            return Err(LedgerError::QuorumNotReached {
                endorsements: block.endorsements.len(),
                quorum: self.quorum(),
            });
        }
        let height = block.height;
        self.commit(block)?;
        Ok(height)
    }

    /// Appends an already endorsed block after full verification.
    pub fn commit(&mut self, block: Block) -> Result<(), ChainFault> {
        let fault = |fault| ChainFault {
            channel: block.channel.clone(),
            height: self.next_height(&block.channel),
            fault,
        };
        self.check_block(&block).map_err(fault)?;
        self.check_endorsements(&block).map_err(fault)?;
        self.apply(block);
        Ok(())
    }

    fn apply(&mut self, block: Block) {
        let channel = block.channel.clone();
        let height = self.next_height(&channel);
        for (index, tx) in block.transactions.iter().enumerate() {
            let id = tx.id();
            self.committed
                .insert(id, (channel.clone(), Location { height, index }));
            if let Some(kind) = BlobKind::of(tx.body.blob()) {
                self.latest.insert((channel.clone(), kind), id);
            }
        }
        self.channels.entry(channel).or_default().push(block);
    }

    /// Replays every channel from genesis, checking links, quorum and transactions.
    pub fn verify_chain(&self) -> Result<(), ChainFault> {
        let mut replica = self.empty_replica();
        for block in self.channels.values().flatten() {
            replica.commit(block.clone())?;
        }
        Ok(())
    }

    fn empty_replica(&self) -> Self {
        Self {
            directory: self.directory.clone(),
            validators: self.validators.clone(),
            channels: BTreeMap::new(),
            committed: BTreeMap::new(),
            latest: BTreeMap::new(),
        }
    }

    /// Latest committed blob of `kind` in `channel`; a pure read.
    pub fn retrieve_latest(&self, channel: &str, kind: BlobKind) -> Result<&[u8], LedgerError> {
        let id = self
            .latest
            .get(&(channel.to_owned(), kind))
            .ok_or(LedgerError::NothingCommitted)?;
        Ok(self
            .transaction(id)
            .expect("latest points at a committed tx")
            .body
            .blob())
    }

    /// Append-only file form: `u32 len | block bytes` per block, channels in order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = wire::Writer::default();
        for block in self.channels.values().flatten() {
            w.bytes(&block.to_bytes());
        }
        w.buf
    }

    /// Loads blocks without verifying them; call [`Ledger::verify_chain`] afterwards.
    pub fn from_bytes(
        bytes: &[u8],
        directory: BTreeMap<String, VerifyingKey>,
        validators: Vec<String>,
    ) -> Result<Self, LedgerError> {
        let mut ledger = Self::new(directory, validators)?;
        let mut r = wire::Reader::new(bytes);
        while !r.is_done() {
            ledger.apply(Block::from_bytes(r.bytes()?)?);
        }
        Ok(ledger)
    }

    /// Digest of the persisted form, for replica comparison.
    pub fn state_digest(&self) -> Hash {
        sha256(&self.to_bytes())
    }
}

fn blobs_close(a: &Blob, b: &Blob) -> bool {
    let same_shape = match (a, b) {
        (Blob::Model(x), Blob::Model(y)) => x.dims() == y.dims(),
        (Blob::Knowledge(x), Blob::Knowledge(y)) => x.vectors().shape() == y.vectors().shape(),
        _ => false,
    };
    same_shape
        && a.values()
            .iter()
            .zip(b.values())
            .all(|(x, y)| (x - y).abs() <= AGGREGATE_TOLERANCE)
}
