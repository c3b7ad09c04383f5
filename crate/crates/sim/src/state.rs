//! Simulation state shared by the phases.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use semcom_core::codec::{decode_knowledge, decode_model, Sentence, Vocabulary};
use semcom_core::ledger::{BlobKind, Identity, KeyAuthority, Ledger, Validator};

use semcom_core::{ChannelModel, CodecParams};
use sha2::{Digest, Sha256};

use crate::config::{ChannelKind, DeviceProfile, ScenarioConfig, VALIDATOR_PREFIX};
use crate::report::{Event, MetricRow, Phase, RowBuilder, RunReport};
use crate::SimError;

/// Independent generator for one named activity of a run.
///
/// Streams are keyed by `(seed, label)` so adding draws to one activity never
/// shifts another.
pub fn stream(seed: u64, label: &str) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

/// A device that has joined the network.
#[derive(Debug, Clone)]
pub struct Device {
    pub profile: DeviceProfile,
    pub identity: Identity,
    /// Local copy of the latest committed model blob.
    pub model_blob: Option<Vec<u8>>,
    /// Local copy of the latest committed knowledge-base blob.
    pub knowledge_blob: Option<Vec<u8>>,
    /// Parameters assembled from the local blobs at the last sync.
    pub params: Option<CodecParams>,
}

#[derive(Debug)]
pub struct SimState {
    pub config: ScenarioConfig,
    pub rows: RowBuilder,
    pub authority: KeyAuthority,
    pub ledger: Ledger,
    pub validators: Vec<Identity>,
    pub devices: Vec<Device>,
    /// Model every participant starts the next round from.
    pub global: CodecParams,
    pub corpus: Vec<Sentence>,
    pub vocab: Vocabulary,
    pub report: RunReport,
    /// Set by a successful synchronization.
    pub synced: bool,
    nonce: u64,
}

impl SimState {
    /// Issues identities to validators and on-time devices and draws the
    /// initial shared model.
    pub fn new(config: ScenarioConfig) -> Result<Self, SimError> {
        config
            .validate()
            .map_err(crate::config::ConfigError::Parse)?;
        let seed = config.run.seed;
        let hash = config.hash();
        let mut authority = KeyAuthority::new(seed);
        let validators = (0..config.ledger.validators)
            .map(|k| authority.issue_identity(&format!("{VALIDATOR_PREFIX}{k}")))
            .collect::<Result<Vec<_>, _>>()?;
        let mut devices = Vec::new();
        for profile in config.devices.iter().filter(|d| !d.late) {
            devices.push(Device {
                identity: authority.issue_identity(&profile.id)?,
                profile: profile.clone(),
                model_blob: None,
                knowledge_blob: None,
                params: None,
            });
        }
        let ids = validators.iter().map(|v| v.id().to_owned()).collect();
        let ledger = Ledger::new(authority.directory().clone(), ids)?;
        let global = CodecParams::random(config.codec_dims(), &mut stream(seed, "init"))?;
        let vocab = Vocabulary::toy();
        let corpus = vocab.toy_sentences();
        Ok(Self {
            rows: RowBuilder {
                seed,
                config_hash: hash.clone(),
            },
            report: RunReport {
                seed,
                config_hash: hash,
                rows: Vec::new(),
                events: Vec::new(),
            },
            config,
            authority,
            ledger,
            validators,
            devices,
            global,
            corpus,
            vocab,
            synced: false,
            nonce: 0,
        })
    }

    pub fn push(&mut self, row: MetricRow) {
        self.report.rows.push(row);
    }

    pub fn log(&mut self, phase: Phase, round: Option<usize>, what: impl Into<String>) {
        self.report.events.push(Event {
            phase,
            round,
            what: what.into(),
        });
    }

    pub fn next_nonce(&mut self) -> u64 {
        self.nonce += 1;
        self.nonce
    }

    pub fn channel(&self) -> &str {
        &self.config.ledger.channel
    }

    pub fn device(&self, id: &str) -> Option<&Device> {
        self.devices.iter().find(|d| d.identity.id() == id)
    }

    /// Identity scheduled to propose the next block of the task channel.
    pub fn proposer(&self) -> &Identity {
        let id = self
            .ledger
            .scheduled_proposer(self.ledger.next_height(self.channel()));
        self.validators
            .iter()
            .find(|v| v.id() == id)
            .expect("schedule only names validators")
    }

    pub fn channel_model(&self) -> ChannelModel {
        match self.config.channel.model {
            ChannelKind::Awgn => ChannelModel::Awgn,
            ChannelKind::Rayleigh => ChannelModel::Rayleigh,
            ChannelKind::Rician => ChannelModel::Rician {
                factor: self.config.channel.rician_factor,
            },
        }
    }

    /// Sentence `k` of the evaluation set, cycling through the corpus.
    pub fn eval_sentences(&self) -> Vec<Sentence> {
        (0..self.config.run.eval_sentences)
            .map(|k| self.corpus[k % self.corpus.len()].clone())
            .collect()
    }
}

/// Validators with their configured availability.
pub fn validator_set<'a>(validators: &'a [Identity], offline: &[usize]) -> Vec<Validator<'a>> {
    validators
        .iter()
        .enumerate()
        .map(|(k, identity)| Validator {
            identity,
            online: !offline.contains(&k),
        })
        .collect()
}

/// Whether the latest knowledge-base blob was committed after the latest model.
pub fn knowledge_is_newer(ledger: &Ledger, channel: &str) -> bool {
    let mut last = (None, None);
    for (b, block) in ledger.blocks(channel).iter().enumerate() {
        for (t, tx) in block.transactions.iter().enumerate() {
            match BlobKind::of(tx.body.blob()) {
                Some(BlobKind::Model) => last.0 = Some((b, t)),
                Some(BlobKind::Knowledge) => last.1 = Some((b, t)),
                None => {}
            }
        }
    }
    match last {
        (Some(m), Some(k)) => k > m,
        (None, Some(_)) => true,
        _ => false,
    }
}

/// Working parameters from a model blob and an optional newer knowledge base.
pub fn assemble(
    model: &[u8],
    knowledge: Option<&[u8]>,
    knowledge_newer: bool,
) -> Result<CodecParams, SimError> {
    let mut params: CodecParams = decode_model(model)?;
    if let (Some(kb), true) = (knowledge, knowledge_newer) {
        params.knowledge = decode_knowledge(kb)?;
    }
    Ok(params)
}
