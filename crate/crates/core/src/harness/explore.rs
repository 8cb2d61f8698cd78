//! Exhaustive small-scope exploration.
//!
//! A program fixes, per replica, the sequence of operations it invokes.
//! The explorer enumerates every interleaving of those invocations with
//! every causally deliverable message, depth first, merging identical
//! states. Every reached state is checked; terminal states (all
//! operations issued, everything delivered) are checked for convergence.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashSet};
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::check::{
    check_late_additions, check_quiesced, check_refinement, check_replica, check_unique_ids, Invariant,
    InvariantReport, Location, Violation,
};
use crate::model::effector::CompositionMode;
use crate::model::ids::{ObjectKey, ReplicaId};
use crate::model::world::World;
use crate::refs::inref::LastRefs;
use crate::refs::ops::{Op, PreconditionFailure};
use crate::stability::oracle_stable;

/// Default cap on distinct states per exploration.
pub const DEFAULT_MAX_STATES: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExploreError {
    #[error("program has {events} events, bound is {bound}")]
    BoundExceeded { events: usize, bound: usize },
    #[error("more than {limit} distinct states")]
    StateLimit { limit: usize },
    #[error("setup step {index} ({op}) failed: {failure}")]
    SetupFailed {
        index: usize,
        op: String,
        failure: PreconditionFailure,
    },
    #[error("setup could not quiesce: {0}")]
    SetupStuck(String),
    #[error("program uses replica {0} outside the world")]
    UnknownReplica(ReplicaId),
}

/// Operations run synchronously before exploration (each followed by
/// quiescence), then the operations whose interleavings are explored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Program {
    pub replicas: usize,
    pub setup: Vec<(ReplicaId, Op)>,
    pub events: Vec<(ReplicaId, Op)>,
}

impl Program {
    /// Explored operations grouped by replica, in program order.
    pub fn per_replica(&self) -> Vec<Vec<Op>> {
        let mut out = vec![Vec::new(); self.replicas];
        for (r, op) in &self.events {
            if let Some(ops) = out.get_mut(r.index()) {
                ops.push(op.clone());
            }
        }
        out
    }

    /// The world right after setup.
    pub fn setup_world(&self, mode: CompositionMode) -> Result<World, ExploreError> {
        if self.replicas == 0 {
            return Err(ExploreError::UnknownReplica(ReplicaId(0)));
        }
        if let Some((r, _)) = self
            .setup
            .iter()
            .chain(&self.events)
            .find(|(r, _)| r.index() >= self.replicas)
        {
            return Err(ExploreError::UnknownReplica(*r));
        }
        let mut world = World::new(self.replicas, mode);
        for (index, (r, op)) in self.setup.iter().enumerate() {
            if let Err(failure) = world.generate(*r, op.clone()) {
                return Err(ExploreError::SetupFailed {
                    index,
                    op: op.to_string(),
                    failure,
                });
            }
            world.quiesce().map_err(|e| ExploreError::SetupStuck(e.to_string()))?;
        }
        Ok(world)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    /// Maximum number of explored (non-setup) operations.
    pub bound: usize,
    pub max_states: usize,
}

impl Limits {
    pub fn new(bound: usize) -> Self {
        Self {
            bound,
            max_states: DEFAULT_MAX_STATES,
        }
    }
}

/// One explored state as shown to a visitor.
pub struct Visit<'a> {
    pub world: &'a World,
    /// Operations issued so far, per replica.
    pub issued: &'a [usize],
    pub depth: usize,
    pub terminal: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Exploration {
    pub report: InvariantReport,
    pub states: usize,
    pub terminal_states: usize,
    pub transitions: usize,
    /// Hashes of every reached state's replicas and issue counters.
    pub reachable: HashSet<u64>,
}

#[derive(Clone)]
struct Node {
    world: World,
    issued: Vec<usize>,
    /// Registered queries for which the oracle has held on this path.
    settled: BTreeSet<(ObjectKey, LastRefs)>,
    depth: usize,
}

fn hash_of(value: &impl Hash) -> u64 {
    let mut h = DefaultHasher::new();
    value.hash(&mut h);
    h.finish()
}

/// Mode-independent identity of a state: replica states and issue counters.
fn state_key(world: &World, issued: &[usize]) -> u64 {
    hash_of(&(world.replicas(), issued))
}

fn registered(world: &World) -> BTreeSet<(ObjectKey, LastRefs)> {
    world
        .replicas()
        .iter()
        .flat_map(|r| r.stability.queries.keys().cloned())
        .collect()
}

/// Explores `program` in one composition mode, calling `visit` on every
/// distinct state.
pub fn explore_mode(
    program: &Program,
    limits: Limits,
    mode: CompositionMode,
    mut visit: impl FnMut(&Visit<'_>),
) -> Result<Exploration, ExploreError> {
    if program.events.len() > limits.bound {
        return Err(ExploreError::BoundExceeded {
            events: program.events.len(),
            bound: limits.bound,
        });
    }
    let plan = program.per_replica();
    let world = program.setup_world(mode)?;
    let mut out = Exploration::default();
    let mut seen: HashSet<(u128, Vec<usize>, u64)> = HashSet::new();
    let root = Node {
        settled: BTreeSet::new(),
        issued: vec![0; program.replicas],
        world,
        depth: 0,
    };
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        let key = (node.world.fingerprint(), node.issued.clone(), hash_of(&node.settled));
        if !seen.insert(key) {
            continue;
        }
        out.states += 1;
        if out.states > limits.max_states {
            return Err(ExploreError::StateLimit {
                limit: limits.max_states,
            });
        }
        out.reachable.insert(state_key(&node.world, &node.issued));

        let mut children = Vec::new();
        for r in node.world.replica_ids() {
            if let Some(op) = plan[r.index()].get(node.issued[r.index()]) {
                let mut world = node.world.clone();
                let _ = world.generate(r, op.clone());
                let mut issued = node.issued.clone();
                issued[r.index()] += 1;
                children.push((r, world, issued));
            }
            for msg in node.world.outstanding(r) {
                if node.world.deliverable(r, msg) {
                    let mut world = node.world.clone();
                    let _ = world.deliver(r, msg);
                    children.push((r, world, node.issued.clone()));
                }
            }
        }
        let terminal = children.is_empty();
        visit(&Visit {
            world: &node.world,
            issued: &node.issued,
            depth: node.depth,
            terminal,
        });
        if terminal {
            out.terminal_states += 1;
            let at = Location::Explored(node.depth);
            check_quiesced(&node.world, at, &mut out.report);
            check_unique_ids(&node.world, &mut out.report);
            check_late_additions(&node.world, &mut out.report);
        }
        for (r, world, issued) in children {
            out.transitions += 1;
            let depth = node.depth + 1;
            let at = Location::Explored(depth);
            check_replica(&world, r, at, &mut out.report);
            check_refinement(&world, at, &mut out.report);
            let mut settled = node.settled.clone();
            for (t, last) in registered(&world) {
                let holds = oracle_stable(&world, t, &last);
                if holds {
                    settled.insert((t, last));
                } else if settled.contains(&(t, last.clone())) {
                    out.report.record(Violation {
                        invariant: Invariant::StablePersistence,
                        location: at,
                        replica: Some(r),
                        objects: vec![t],
                        detail: format!("oracle for ({t}, {last}) held earlier on this path and no longer does"),
                    });
                }
            }
            stack.push(Node {
                world,
                issued,
                settled,
                depth,
            });
        }
    }
    Ok(out)
}

/// Counts of one full exploration in both modes.
#[derive(Debug, Clone, Default)]
pub struct ExploreSummary {
    pub report: InvariantReport,
    pub causal_states: usize,
    pub atomic_states: usize,
    pub terminal_states: usize,
}

/// Explores `program` in pure-causal and atomic mode, checks I1 to I6,
/// stable⇒oracle and oracle persistence in every state of both, and
/// checks that atomic mode reaches nothing pure-causal mode cannot.
pub fn exhaustive_explore(program: &Program, limits: Limits) -> Result<ExploreSummary, ExploreError> {
    let causal = explore_mode(program, limits, CompositionMode::PureCausal, |_| {})?;
    let atomic = explore_mode(program, limits, CompositionMode::Atomic, |_| {})?;
    let mut report = causal.report;
    let missing = atomic.reachable.difference(&causal.reachable).count();
    if missing > 0 {
        report.record(Violation {
            invariant: Invariant::AtomicRefinement,
            location: Location::Trace,
            replica: None,
            objects: Vec::new(),
            detail: format!("{missing} atomic-mode states are unreachable in pure-causal mode"),
        });
    }
    report.merge(atomic.report);
    Ok(ExploreSummary {
        report,
        causal_states: causal.states,
        atomic_states: atomic.states,
        terminal_states: causal.terminal_states,
    })
}

/// Invariants the explorer evaluates.
pub const EXPLORED_INVARIANTS: [Invariant; 9] = [
    Invariant::I1,
    Invariant::I2,
    Invariant::I3,
    Invariant::I4,
    Invariant::I5,
    Invariant::I6,
    Invariant::StableRefinement,
    Invariant::StablePersistence,
    Invariant::AtomicRefinement,
];
