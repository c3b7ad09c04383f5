//! Synchronization: every device, late joiners included, adopts the ledger's
//! latest model and knowledge base.

use semcom_core::ledger::{BlobKind, LedgerError};

use crate::report::Phase;
use crate::state::{assemble, knowledge_is_newer, Device, SimState};
use crate::SimError;

/// Registers late joiners, then copies the latest committed blobs to every device.
///
/// Fails with [`LedgerError::NothingCommitted`] when no model was ever
/// committed; a missing knowledge-base blob only means none was exchanged.
pub fn run_sync_phase(state: &mut SimState) -> Result<(), SimError> {
    let late: Vec<_> = state
        .config
        .devices
        .iter()
        .filter(|d| d.late && state.device(&d.id).is_none())
        .cloned()
        .collect();
    for profile in late {
        let identity = state.authority.issue_identity(&profile.id)?;
        state
            .ledger
            .register(identity.id(), identity.public_key())?;
        state.log(Phase::Sync, None, format!("{} joined", profile.id));
        state.devices.push(Device {
            profile,
            identity,
            model_blob: None,
            knowledge_blob: None,
            params: None,
        });
    }

    let channel = state.channel().to_owned();
    let model = match state.ledger.retrieve_latest(&channel, BlobKind::Model) {
        Ok(blob) => blob.to_vec(),
        Err(e) => {
            let row = state
                .rows
                .row(Phase::Sync, "sync_failed", 1.0)
                .detail(e.to_string());
            state.push(row);
            state.log(Phase::Sync, None, format!("failed: {e}"));
            state.synced = false;
            return Err(e.into());
        }
    };
    let knowledge = match state.ledger.retrieve_latest(&channel, BlobKind::Knowledge) {
        Ok(blob) => Some(blob.to_vec()),
        Err(LedgerError::NothingCommitted) => None,
        Err(e) => return Err(e.into()),
    };
    let newer = knowledge_is_newer(&state.ledger, &channel);
    let params = assemble(&model, knowledge.as_deref(), newer)?;

    for k in 0..state.devices.len() {
        let d = &mut state.devices[k];
        d.model_blob = Some(model.clone());
        d.knowledge_blob = knowledge.clone();
        d.params = Some(params.clone());
        let late = d.profile.late;
        let id = d.identity.id().to_owned();
        let row = state
            .rows
            .row(Phase::Sync, "synced", 1.0)
            .device(&id)
            .detail(if late { "late joiner" } else { "" });
        state.push(row);
    }
    state.global = params;
    state.synced = true;
    state.log(Phase::Sync, None, "synchronized");
    Ok(())
}
