//! Kinetic Monte Carlo for the zero-range process and the processes built
//! on top of it: the trace on the wells, birth-death comparison chains and
//! the domination coupling.

pub mod birth_death;
pub mod coupling;
pub mod exit_probe;
pub mod sum_tree;
pub mod trace;
pub mod trajectory;

pub use birth_death::{bd_expected_hitting, BDChain};
pub use coupling::{
    branching, coupling_ensemble, coupling_run, sample_in_well0, CouplingEnsemble, CouplingReport, CouplingState,
    Driver, DriverEvent, IsolatedSite, ZrpDriver,
};
pub use exit_probe::{exit_event_probe, ExitProbe};
pub use sum_tree::SumTree;
pub use trace::{run_trace, TraceEntry, TraceOptions, TraceRecord};
pub use trajectory::{simulate, Audit, Event, EventLog, SimSummary, TrajectoryState, AUDIT_INTERVAL};
