//! Potential theory for finite reversible chains.

pub mod capacity;
pub mod chain;
pub mod linalg;
pub mod rates;
pub mod spectral;
pub mod trace;

pub use capacity::{dirichlet_form, generic_capacity, ring_capacity, ring_chain, ring_harmonic, CapacityResult};
pub use chain::ChainSpec;
pub use spectral::{spectral_gap, GapResult};
pub use trace::{restricted_chain, trace_chain, TraceChain};
