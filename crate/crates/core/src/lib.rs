//! Condensing zero-range process on a ring: kinetic Monte Carlo, exact
//! ensembles, Markov-chain potential theory, and the Levy-type limit of the
//! condensate location.

// negated float comparisons below are deliberate: they reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod ensembles;
pub mod error;
pub mod harness;
pub mod kmc;
pub mod limit;
pub mod model;
pub mod oracle;
pub mod par;
pub mod potential;
pub mod rng;
pub mod stats;

pub use error::{Result, ZrpError};
pub use model::{
    classify, critical_constants, jump_rate, Configuration, JumpRateTable, ModelParams, Observables, ScaleMode,
    WellClass, WellPartition,
};
pub use par::Execution;
