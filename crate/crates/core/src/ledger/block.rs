//! Blocks and their canonical encoding.

use super::tx::{sha256, Hash, Transaction};
use super::wire::{Reader, Writer};
use super::LedgerError;

/// A validator's signature over a block hash.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endorsement {
    pub validator: String,
    pub signature: [u8; 64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Hash,
    pub channel: String,
    pub transactions: Vec<Transaction>,
    pub proposer: String,
    pub endorsements: Vec<Endorsement>,
}

impl Block {
    /// Everything except the endorsements; this is what gets hashed.
    pub fn header_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.u64(self.height).raw(&self.prev_hash).str(&self.channel);
        w.u32(self.transactions.len() as u32);
        for tx in &self.transactions {
            w.bytes(&tx.to_bytes());
        }
        w.str(&self.proposer);
        w.buf
    }

    pub fn hash(&self) -> Hash {
        sha256(&self.header_bytes())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer {
            buf: self.header_bytes(),
        };
        w.u32(self.endorsements.len() as u32);
        for e in &self.endorsements {
            w.str(&e.validator).raw(&e.signature);
        }
        w.buf
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, LedgerError> {
        let height = r.u64()?;
        let prev_hash = r.array()?;
        let channel = r.str()?;
        let n = r.count(4)?;
        let mut transactions = Vec::with_capacity(n);
        for _ in 0..n {
            transactions.push(Transaction::from_bytes(r.bytes()?)?);
        }
        let proposer = r.str()?;
        let m = r.count(68)?;
        let mut endorsements = Vec::with_capacity(m);
        for _ in 0..m {
            endorsements.push(Endorsement {
                validator: r.str()?,
                signature: r.array()?,
            });
        }
        Ok(Self {
            height,
            prev_hash,
            channel,
            transactions,
            proposer,
            endorsements,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LedgerError> {
        let mut r = Reader::new(bytes);
        let b = Self::read(&mut r)?;
        r.finish()?;
        Ok(b)
    }
}
