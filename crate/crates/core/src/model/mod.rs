//! Replicas, clocks, events and causal delivery.

pub mod clock;
pub mod effector;
pub mod ids;
pub mod world;
