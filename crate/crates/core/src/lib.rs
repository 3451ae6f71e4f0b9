//! Channel-knowledge-map driven coordinated user scheduling for multi-cell
//! massive MIMO uplink.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: cell layout, grid partition and a spatially consistent
//!   clustered channel model.
//! - [`ckm`]: the grid map of statistical gains, cross-grid correlations and
//!   reliability flags.
//! - [`sched`]: two-stage scheduling (AES/GIS then inter-cell coordination),
//!   the robust variant that fuses map and instantaneous CSI, and baselines.
//! - [`eval`]: MMSE receivers, SINR, sum rate, exhaustive oracle and overhead
//!   accounting.
//! - [`experiment`]: seeded Monte-Carlo trials and CSV output.
//! - [`config`]: the flat `key = value` experiment file.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod ckm;
pub mod config;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod geometry;
pub mod overhead;
pub mod sched;

pub use channel::{correlation, ChannelVector};
pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scenario.md")]
    mod scenario {}
    #[doc = include_str!("../../../book/src/channel-map.md")]
    mod channel_map {}
    #[doc = include_str!("../../../book/src/scheduling.md")]
    mod scheduling {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
