//! Building blocks for a secure, distributed semantic communication system:
//! fading channels, a desk-scale knowledge-base codec, probabilistic
//! authentication of lossy payloads, a consortium ledger with federated
//! averaging, and differential-privacy calibration.
//!
//! The channel and codec math is generic over [`Scalar`] (`f32` or `f64`);
//! the aliases below fix it to `f64`, which is also the wire precision.

// `!(x > 0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auth;
pub mod codec;
pub mod dp;
pub mod ledger;
pub mod scalar;
pub mod signal;

pub use scalar::Scalar;

pub type ComplexSignal = signal::ComplexSignal<f64>;
pub type ChannelModel = signal::ChannelModel<f64>;
pub type ChannelRealization = signal::ChannelRealization<f64>;
pub type CodecParams = codec::CodecParams<f64>;
pub type KnowledgeBase = codec::KnowledgeBase<f64>;
pub type Matrix = codec::Matrix<f64>;
pub type ChannelSpec = codec::ChannelSpec<f64>;

pub type ComplexSignal32 = signal::ComplexSignal<f32>;
pub type CodecParams32 = codec::CodecParams<f32>;
