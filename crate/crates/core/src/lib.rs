//! A reference datatype that keeps referential integrity over a replicated
//! object store assuming only causal consistency, plus a deterministic
//! simulator and the randomized and exhaustive harness that checks it.

pub mod dot;
pub mod harness;
pub mod model;
pub mod refs;
pub mod scenario;
pub mod stability;
pub mod tracefile;

pub use harness::{check_invariants, convergence_check, random_execution, Config, Invariant, InvariantReport, Trace};
pub use model::clock::{Progress, VectorClock};
pub use model::effector::{CompositionMode, Effector, Event, MessageRef, Payload};
pub use model::ids::{AnnounceId, Attr, Dot, EventId, ObjectKey, RefId, ReplicaId};
pub use model::world::{Delivery, DeliveryError, Outcome, ReplicaState, Step, Stuck, World};
pub use refs::inref::{InRef, LastRefs};
pub use refs::object::ObjectRecord;
pub use refs::ops::{IgnoreSet, Op, PreconditionFailure};
pub use refs::outref::{OutRef, OutRefEntry, Reference};
