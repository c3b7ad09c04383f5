//! The three phases of a run, executed in order by [`crate::run`].

pub mod communication;
pub mod sync;
pub mod update;

pub use communication::{bleu_sweep, run_communication_phase, SweepPoint};
pub use sync::run_sync_phase;
pub use update::{run_round, run_update_phase};
