//! Strict replay of recorded traces and lenient re-execution of edited ones.

use std::collections::BTreeMap;

use thiserror::Error;

use super::trace::{GenRecord, GenResult, Trace, TraceStep};
use crate::model::effector::MessageRef;
use crate::model::ids::{AnnounceId, EventId};
use crate::model::world::{Delivery, Outcome, World};

/// The trace does not describe what the library does.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("replay mismatch at step {step}: {detail}")]
pub struct ReplayMismatch {
    pub step: usize,
    pub detail: String,
}

pub fn replay(trace: &Trace) -> Result<World, ReplayMismatch> {
    replay_with(trace, |_, _, _| {})
}

/// Replays `trace` step by step, calling `after` with the world, the step
/// index and the step once it has been applied.
pub fn replay_with(trace: &Trace, mut after: impl FnMut(&World, usize, &TraceStep)) -> Result<World, ReplayMismatch> {
    trace.config.validate().map_err(|e| ReplayMismatch {
        step: 0,
        detail: e.to_string(),
    })?;
    let mut world = World::new(trace.config.replicas, trace.config.mode);
    for (step, s) in trace.steps.iter().enumerate() {
        let fail = |detail: String| ReplayMismatch { step, detail };
        let replica = s.replica();
        if !world.contains_replica(replica) {
            return Err(fail(format!("unknown replica {replica}")));
        }
        match s {
            TraceStep::Generate(g) => {
                let got: GenResult = world.generate(replica, g.op.clone()).into();
                if got != g.result {
                    return Err(fail(format!("{} returned {got:?}, trace has {:?}", g.op, g.result)));
                }
                check_event_record(&world, g).map_err(fail)?;
            }
            TraceStep::Deliver { msg, .. } => {
                if world.is_applied(replica, *msg) {
                    return Err(fail(format!("{msg} already applied at {replica}")));
                }
                if !world.deliverable(replica, *msg) {
                    return Err(fail(format!("{msg} is not deliverable at {replica}")));
                }
                match world.deliver(replica, *msg) {
                    Ok(Delivery::Applied) => {}
                    other => return Err(fail(format!("delivery of {msg} to {replica}: {other:?}"))),
                }
            }
        }
        after(&world, step, s);
    }
    Ok(world)
}

fn check_event_record(world: &World, g: &GenRecord) -> Result<(), String> {
    match &g.result {
        GenResult::Ok(Outcome::Event { id }) => {
            let e = world.event(*id).ok_or_else(|| format!("event {id} missing"))?;
            if g.deps.as_ref() != Some(&e.deps) {
                return Err(format!("event {id} has deps {}, trace has {:?}", e.deps, g.deps));
            }
            if g.chain != e.summary() {
                return Err(format!("event {id} chain differs from the trace"));
            }
        }
        _ => {
            if g.deps.is_some() || !g.chain.is_empty() {
                return Err("non-event record carries deps or a chain".into());
            }
        }
    }
    Ok(())
}

/// Runs an edited trace, tolerating edits: generator results are taken
/// from the library, ids are remapped to what the new run produced, and
/// deliveries that no longer exist or are not deliverable are dropped.
/// The result is a strictly replayable trace.
pub fn reexecute(trace: &Trace) -> Trace {
    let mut world = World::new(trace.config.replicas, trace.config.mode);
    let mut events: BTreeMap<EventId, EventId> = BTreeMap::new();
    let mut announcements: BTreeMap<AnnounceId, AnnounceId> = BTreeMap::new();
    for s in &trace.steps {
        let replica = s.replica();
        if !world.contains_replica(replica) {
            continue;
        }
        match s {
            TraceStep::Generate(g) => {
                let got = world.generate(replica, g.op.clone());
                match (&g.result, got) {
                    (GenResult::Ok(Outcome::Event { id: old }), Ok(Outcome::Event { id: new })) => {
                        events.insert(*old, new);
                    }
                    (GenResult::Ok(Outcome::Announced { id: old }), Ok(Outcome::Announced { id: new })) => {
                        announcements.insert(*old, new);
                    }
                    _ => {}
                }
            }
            TraceStep::Deliver { msg, .. } => {
                let mapped = match *msg {
                    MessageRef::Effector { event, index } => {
                        events.get(&event).map(|&event| MessageRef::Effector { event, index })
                    }
                    MessageRef::Announce { id } => announcements.get(&id).map(|&id| MessageRef::Announce { id }),
                };
                let Some(msg) = mapped else { continue };
                if !world.is_applied(replica, msg) && world.deliverable(replica, msg) {
                    let _ = world.deliver(replica, msg);
                }
            }
        }
    }
    Trace::from_world(trace.seed, trace.config.clone(), &world)
}
