//! Ordering rules for disclosing the sampled index set.

use super::AuthError;

/// How the index set reaches the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReleaseMode {
    /// Sent in clear, but only after the receiver acknowledged the payload.
    #[default]
    Delayed,
    /// Sent with the payload inside an envelope only the receiver can open.
    Encrypted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReleaseAction {
    SendPlain,
    SendEncrypted,
}

/// Control-channel state of one authenticated transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReleaseTranscript {
    pub payload_sent: bool,
    pub acknowledged: bool,
    pub released: bool,
}

impl ReleaseTranscript {
    pub fn send_payload(&mut self) {
        self.payload_sent = true;
    }

    /// Receiver confirms the payload; ignored until it was sent.
    pub fn acknowledge(&mut self) {
        self.acknowledged = self.payload_sent;
    }

    /// Decides and records the release under `mode`.
    pub fn release(&mut self, mode: ReleaseMode) -> Result<ReleaseAction, AuthError> {
        let action = schedule_index_release(mode, self)?;
        self.released = true;
        Ok(action)
    }
}

pub fn schedule_index_release(
    mode: ReleaseMode,
    t: &ReleaseTranscript,
) -> Result<ReleaseAction, AuthError> {
    if t.released {
        return Err(AuthError::AlreadyReleased);
    }
    match mode {
        ReleaseMode::Delayed if t.payload_sent && t.acknowledged => Ok(ReleaseAction::SendPlain),
        ReleaseMode::Delayed => Err(AuthError::PrematureRelease),
        ReleaseMode::Encrypted => Ok(ReleaseAction::SendEncrypted),
    }
}
