//! Update phase: local training, uploads, and an aggregate per round.

use semcom_core::auth::{sample_indices, sign_bundle};
use semcom_core::codec::{
    decode_knowledge, decode_model, encode_knowledge, encode_model, train, Blob, ChannelSpec,
    Sentence, TrainOptions, TrainingSchedule,
};
use semcom_core::ledger::{create_upload_tx, LedgerError, Transaction, UploadMeta};
use semcom_core::CodecParams;

use crate::config::{RoundKind, Sharding, Transport};
use crate::report::{transfer_bytes, Phase};
use crate::state::{stream, validator_set, SimState};
use crate::SimError;

/// Per-round byte totals by transport.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundBytes {
    pub conventional: usize,
    pub semantic: usize,
}

impl RoundBytes {
    pub fn total(&self) -> usize {
        self.conventional + self.semantic
    }

    fn add(&mut self, transport: Transport, bytes: usize) {
        match transport {
            Transport::Conventional => self.conventional += bytes,
            Transport::Semantic => self.semantic += bytes,
        }
    }
}

/// Bytes one device spends moving `blob` over its preferred transport.
///
/// The semantic transport carries the blob's scalars as symbols and signs a
/// sample of them, so the bundle is built for real to get its length.
pub fn blob_transfer_bytes(
    state: &SimState,
    device: usize,
    blob: &[u8],
    label: &str,
) -> Result<usize, SimError> {
    let dev = &state.devices[device];
    let values = Blob::parse(blob)?.values();
    let bundle = match dev.profile.transport {
        Transport::Conventional => 0,
        Transport::Semantic => {
            let mut rng = stream(state.config.run.seed, label);
            let size = state.config.verification.index_size.min(values.len());
            let set = sample_indices(values.len(), size, &mut rng)?;
            sign_bundle(&values, &set, dev.identity.signing_key(), dev.identity.id())?.wire_len()
        }
    };
    Ok(transfer_bytes(
        dev.profile.transport,
        blob.len(),
        values.len(),
        bundle,
    ))
}

fn shard(corpus: &[Sentence], sharding: Sharding, member: usize, members: usize) -> Vec<Sentence> {
    match sharding {
        Sharding::Replicated => corpus.to_vec(),
        Sharding::Disjoint => corpus
            .iter()
            .enumerate()
            .filter(|(k, _)| k % members == member)
            .map(|(_, s)| s.clone())
            .collect(),
    }
}

fn schedule(state: &SimState, kind: RoundKind) -> TrainingSchedule {
    let t = &state.config.training;
    match kind {
        RoundKind::Full => TrainingSchedule {
            semantic_epochs: t.semantic_epochs,
            channel_epochs: t.channel_epochs,
            knowledge_epochs: t.knowledge_epochs,
            whole_epochs: t.whole_epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
        },
        RoundKind::Knowledge => {
            TrainingSchedule::knowledge_only(t.kb_round_epochs, t.batch_size, t.learning_rate)
        }
    }
}

fn kind_name(kind: RoundKind) -> &'static str {
    match kind {
        RoundKind::Full => "full",
        RoundKind::Knowledge => "knowledge",
    }
}

/// Runs every configured federation round in order.
pub fn run_update_phase(state: &mut SimState) -> Result<(), SimError> {
    let rounds = state.config.federation.rounds.clone();
    for (round, kind) in rounds.into_iter().enumerate() {
        run_round(state, round, kind)?;
    }
    let channel = state.channel().to_owned();
    let height = state.ledger.blocks(&channel).len();
    let txs = state.ledger.transaction_count();
    let verified = state.ledger.verify_chain().is_ok();
    let r = &state.rows;
    let rows = [
        r.row(Phase::Update, "chain_blocks", height as f64)
            .detail(channel.clone()),
        r.row(Phase::Update, "chain_transactions", txs as f64),
        r.row(
            Phase::Update,
            "chain_verified",
            if verified { 1.0 } else { 0.0 },
        ),
    ];
    rows.into_iter().for_each(|row| state.push(row));
    Ok(())
}

/// One round. Ledger failures abort the round and are reported; other
/// failures end the run.
pub fn run_round(state: &mut SimState, round: usize, kind: RoundKind) -> Result<(), SimError> {
    let members: Vec<usize> = {
        let ids: Vec<&str> = state
            .config
            .participants()
            .iter()
            .map(|d| d.id.as_str())
            .collect();
        (0..state.devices.len())
            .filter(|&k| ids.contains(&state.devices[k].identity.id()))
            .collect()
    };
    if members.is_empty() {
        let row = state
            .rows
            .row(Phase::Update, "round_skipped", 0.0)
            .round(round)
            .detail("no participants");
        state.push(row);
        state.log(Phase::Update, Some(round), "skipped: no participants");
        return Ok(());
    }

    let seed = state.config.run.seed;
    let spec = ChannelSpec {
        model: state.channel_model(),
        snr_db: state.config.training.snr_db,
    };
    let sched = schedule(state, kind);
    let mut bytes = RoundBytes::default();
    let mut uploads: Vec<Transaction> = Vec::new();
    for (m, &k) in members.iter().enumerate() {
        let data = shard(
            &state.corpus,
            state.config.federation.sharding,
            m,
            members.len(),
        );
        if data.is_empty() {
            continue;
        }
        let id = state.devices[k].identity.id().to_owned();
        let mut local: CodecParams = state.global.clone();
        let mut rng = stream(seed, &format!("train/{round}/{id}"));
        let steps = train(
            &mut local,
            &data,
            &sched,
            &spec,
            &mut rng,
            &TrainOptions::default(),
        )?;
        if let (Some(first), Some(last)) = (steps.first(), steps.last()) {
            let row = state
                .rows
                .row(Phase::Update, "train_loss", last.loss)
                .round(round)
                .device(&id)
                .samples(steps.len())
                .detail(format!("first {}", first.loss));
            state.push(row);
        }
        let blob = match kind {
            RoundKind::Full => encode_model(&local),
            RoundKind::Knowledge => encode_knowledge(&local.knowledge),
        };
        let up_bytes = blob_transfer_bytes(state, k, &blob, &format!("upload/{round}/{id}"))?;
        bytes.add(state.devices[k].profile.transport, up_bytes);
        let meta = UploadMeta {
            channel: state.channel().to_owned(),
            samples: data.len() as u64,
            nonce: state.next_nonce(),
        };
        uploads.push(create_upload_tx(blob, meta, &state.devices[k].identity)?);
    }

    let aggregator = members[round % members.len()];
    match commit_round(state, &uploads, aggregator) {
        Ok(result) => {
            match kind {
                RoundKind::Full => state.global = decode_model(&result)?,
                RoundKind::Knowledge => state.global.knowledge = decode_knowledge(&result)?,
            }
            for &k in &members {
                let id = state.devices[k].identity.id().to_owned();
                let down =
                    blob_transfer_bytes(state, k, &result, &format!("download/{round}/{id}"))?;
                bytes.add(state.devices[k].profile.transport, down);
            }
            let r = &state.rows;
            let name = kind_name(kind);
            let rows = [
                r.row(
                    Phase::Update,
                    "round_committed_txs",
                    (uploads.len() + 1) as f64,
                )
                .round(round)
                .detail(name),
                r.row(Phase::Update, "round_bytes", bytes.total() as f64)
                    .round(round)
                    .detail(name),
                r.row(
                    Phase::Update,
                    "bytes_conventional",
                    bytes.conventional as f64,
                )
                .round(round)
                .detail(name),
                r.row(Phase::Update, "bytes_semantic", bytes.semantic as f64)
                    .round(round)
                    .detail(name),
            ];
            rows.into_iter().for_each(|row| state.push(row));
            state.log(
                Phase::Update,
                Some(round),
                format!("{name} round committed"),
            );
        }
        Err(e) => {
            let row = state
                .rows
                .row(Phase::Update, "round_aborted", 1.0)
                .round(round)
                .detail(e.to_string());
            state.push(row);
            state.log(Phase::Update, Some(round), format!("aborted: {e}"));
        }
    }
    Ok(())
}

/// Commits the uploads, then an honest aggregate of them in a second block,
/// and returns the aggregated blob.
fn commit_round(
    state: &mut SimState,
    uploads: &[Transaction],
    aggregator: usize,
) -> Result<Vec<u8>, LedgerError> {
    let channel = state.channel().to_owned();
    let proposal = state
        .ledger
        .propose_block(&channel, uploads, state.proposer())?;
    let excluded = proposal.excluded.len();
    let height = state.ledger.endorse_and_commit(
        proposal.block,
        &validator_set(&state.validators, &state.config.ledger.offline),
    )?;
    if excluded > 0 {
        let row = state
            .rows
            .row(Phase::Update, "txs_excluded", excluded as f64)
            .detail(format!("height {height}"));
        state.push(row);
    }
    let ids: Vec<_> = state.ledger.blocks(&channel)[height as usize]
        .transactions
        .iter()
        .map(Transaction::id)
        .collect();
    let nonce = state.next_nonce();
    let agg = state.ledger.honest_aggregate(
        &channel,
        &ids,
        nonce,
        &state.devices[aggregator].identity,
    )?;
    let proposal =
        state
            .ledger
            .propose_block(&channel, std::slice::from_ref(&agg), state.proposer())?;
    state.ledger.endorse_and_commit(
        proposal.block,
        &validator_set(&state.validators, &state.config.ledger.offline),
    )?;
    Ok(agg.body.blob().to_vec())
}
