//! Achievable symmetric rates for the K-user broadcast channel with delayed
//! state feedback.
//!
//! The crate covers two channel families:
//!
//! * the fading Gaussian broadcast channel, where the joint source-channel
//!   (JSC) scheme and the TDMA, MAT, quantized-MAT and genie-bound baselines
//!   are evaluated by Monte Carlo over i.i.d. Rayleigh fading ([`gbc`],
//!   [`optimizer`]);
//! * the erasure broadcast channel, where rate-region membership, the
//!   symmetric capacity and the phase-length allocation that achieves it are
//!   computed exactly ([`ebc`]).
//!
//! Randomness is counter based: sample `i` of stream `s` is a pure function of
//! `(seed, s, i)`, so results never depend on the number of worker threads.

// Negated comparisons such as `!(x > 0.0)` are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod ebc;
mod error;
pub mod gbc;
pub mod linalg;
pub mod montecarlo;
pub mod optimizer;
pub mod sweep;

pub use channel::{
    draw_channel, ChannelSample, ErasurePmf, GbcConfig, Mask, SampleStream, SymmetricDeltas,
};
pub use ebc::{EbcSchemeParams, MuAllocation};
pub use error::{Error, Result};
pub use gbc::{AlphaVector, BetaVector, RatePoint, Scheme};
pub use montecarlo::{McEstimate, McPlan, SampleBatch};
pub use optimizer::{BetaGrid, OptResult};
pub use sweep::{SweepOutput, SweepSpec};
