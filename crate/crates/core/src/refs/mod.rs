//! The reference CRDT: inrefs, outrefs, objects and their operations.

pub mod inref;
pub mod object;
pub mod ops;
pub mod outref;
