//! Randomized and exhaustive checking of the reference datatype.

pub mod campaign;
pub mod catalog;
pub mod check;
pub mod config;
pub mod explore;
pub mod random;
pub mod replay;
pub mod shrink;
pub mod trace;

pub use campaign::{run_campaign, CampaignError, CampaignResult, Failure};
pub use check::{check_invariants, convergence_check, Coverage, Invariant, InvariantReport, Location, Violation};
pub use config::{Config, ConfigInvalid, OpMix};
pub use explore::{exhaustive_explore, explore_mode, Exploration, ExploreError, Limits, Program};
pub use random::random_execution;
pub use replay::{reexecute, replay, ReplayMismatch};
pub use shrink::{shrink, shrink_while, ShrinkError};
pub use trace::{GenRecord, GenResult, Trace, TraceStep};
