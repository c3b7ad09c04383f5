//! Scenario runner for the semantic-communication simulator.
//!
//! A run walks the three phases in a fixed order on a single deterministic
//! scheduler: federated update rounds on the ledger, synchronization of every
//! device to the latest committed blobs, and a communication sweep over SNR
//! and pruning points. Every random draw comes from a stream keyed by the run
//! seed, so `(seed, config)` fixes the report byte for byte.

pub mod config;
pub mod phases;
pub mod report;
pub mod state;
pub mod tools;

use semcom_core::auth::AuthError;
use semcom_core::codec::CodecError;
use semcom_core::dp::DpError;
use semcom_core::ledger::LedgerError;
use semcom_core::signal::SignalError;

pub use config::{load_config, ConfigError, DeviceProfile, ParseError, ScenarioConfig};
pub use report::{emit_report, MetricRow, RunReport};
pub use state::SimState;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("ledger: {0}")]
    Ledger(#[from] LedgerError),
    #[error("codec: {0}")]
    Codec(#[from] CodecError),
    #[error("signal: {0}")]
    Signal(#[from] SignalError),
    #[error("authentication: {0}")]
    Auth(#[from] AuthError),
    #[error("privacy: {0}")]
    Dp(#[from] DpError),
    #[error("communication requires a successful synchronization first")]
    NotSynced,
    #[error("{device} exceeded its capabilities ({symbols} symbols, {kb} knowledge vectors)")]
    Capability {
        device: String,
        symbols: usize,
        kb: usize,
    },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    /// Process exit code: 2 for configuration errors, 3 for runtime aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) => 2,
            _ => 3,
        }
    }
}

/// Prepares a state and runs update, sync and communication.
pub fn run(config: ScenarioConfig) -> Result<SimState, SimError> {
    let mut state = SimState::new(config)?;
    phases::run_update_phase(&mut state)?;
    phases::run_sync_phase(&mut state)?;
    phases::run_communication_phase(&mut state)?;
    Ok(state)
}

/// Update and sync only, leaving the state ready for a sweep.
pub fn prepare(config: ScenarioConfig) -> Result<SimState, SimError> {
    let mut state = SimState::new(config)?;
    phases::run_update_phase(&mut state)?;
    phases::run_sync_phase(&mut state)?;
    Ok(state)
}
