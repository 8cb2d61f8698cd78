//! The deterministic replicated world: replicas, the generator/effector
//! protocol and causal delivery of chained effectors.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::clock::Progress;
use super::effector::{CompositionMode, EffectorMessage, Event, MessageRef};
use super::ids::{AnnounceId, Attr, EventId, ObjectKey, ReplicaId};
use crate::refs::inref::LastRefs;
use crate::refs::object::ObjectRecord;
use crate::refs::ops::{self, LocalEffect, Op, Origin, PreconditionFailure};
use crate::stability::{condition_holds, ClockAnnouncement, ConditionReport, StabilityState};

/// What a successful `generate` produced.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Outcome {
    /// A replicated event (for `may-delete`, the query registration).
    Event {
        id: EventId,
    },
    Announced {
        id: AnnounceId,
    },
    Invoked {
        target: ObjectKey,
    },
    /// `may-delete` on an already registered query.
    Deletable {
        stable: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeliveryError {
    #[error("message {0} delivered twice to {1}")]
    DuplicateDelivery(MessageRef, ReplicaId),
    #[error("unknown message {0}")]
    UnknownMessage(MessageRef),
    #[error("unknown replica {0}")]
    UnknownReplica(ReplicaId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("message {msg} can never be delivered to {replica}")]
pub struct Stuck {
    pub replica: ReplicaId,
    pub msg: MessageRef,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    Applied,
    Buffered,
}

/// One recorded world transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step {
    Generate {
        replica: ReplicaId,
        op: Op,
        outcome: Result<Outcome, PreconditionFailure>,
    },
    Deliver {
        replica: ReplicaId,
        msg: MessageRef,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReplicaState {
    pub id: ReplicaId,
    pub objects: BTreeMap<ObjectKey, ObjectRecord>,
    pub progress: Progress,
    /// Announcements applied, per announcer (always a prefix).
    pub announcements: BTreeMap<ReplicaId, u64>,
    /// Creation handles this replica still holds.
    pub handles: BTreeSet<ObjectKey>,
    pub stability: StabilityState,
    pub buffer: Vec<MessageRef>,
    next_ref: u32,
    next_dot: u32,
    next_announce: u64,
    next_key: u32,
}

impl ReplicaState {
    fn new(id: ReplicaId) -> Self {
        Self {
            id,
            next_ref: 1,
            next_dot: 1,
            next_announce: 1,
            next_key: 1,
            ..Default::default()
        }
    }

    pub fn object(&self, key: ObjectKey) -> Option<&ObjectRecord> {
        self.objects.get(&key)
    }

    fn announced_from(&self, from: ReplicaId) -> u64 {
        self.announcements.get(&from).copied().unwrap_or(0)
    }

    pub fn may_delete(&self, target: ObjectKey, last: &LastRefs) -> Result<bool, PreconditionFailure> {
        if !self.objects.contains_key(&target) {
            return Err(PreconditionFailure::UnknownObject { key: target });
        }
        Ok(self.stability.is_stable(target, last))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Generated {
    Event(usize),
    Announce(usize),
}

/// Something a generator produced that other replicas must receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Generation {
    Event(EventId),
    Announce(AnnounceId),
}

#[derive(Debug, Clone)]
pub struct World {
    mode: CompositionMode,
    replicas: Vec<ReplicaState>,
    events: Vec<Event>,
    event_index: BTreeMap<EventId, usize>,
    announcements: Vec<ClockAnnouncement>,
    announce_index: BTreeMap<AnnounceId, usize>,
    order: Vec<Generated>,
    log: Vec<Step>,
}

impl World {
    pub fn new(replicas: usize, mode: CompositionMode) -> Self {
        assert!(
            replicas >= 1 && replicas <= u16::MAX as usize,
            "replica count out of range"
        );
        Self {
            mode,
            replicas: (0..replicas).map(|i| ReplicaState::new(ReplicaId(i as u16))).collect(),
            events: Vec::new(),
            event_index: BTreeMap::new(),
            announcements: Vec::new(),
            announce_index: BTreeMap::new(),
            order: Vec::new(),
            log: Vec::new(),
        }
    }

    pub fn mode(&self) -> CompositionMode {
        self.mode
    }

    pub fn replica_count(&self) -> usize {
        self.replicas.len()
    }

    pub fn replica_ids(&self) -> impl Iterator<Item = ReplicaId> {
        (0..self.replicas.len() as u16).map(ReplicaId)
    }

    pub fn replica(&self, id: ReplicaId) -> &ReplicaState {
        &self.replicas[id.index()]
    }

    pub fn replicas(&self) -> &[ReplicaState] {
        &self.replicas
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn event(&self, id: EventId) -> Option<&Event> {
        self.event_index.get(&id).map(|&i| &self.events[i])
    }

    pub fn announcements(&self) -> &[ClockAnnouncement] {
        &self.announcements
    }

    pub fn announcement(&self, id: AnnounceId) -> Option<&ClockAnnouncement> {
        self.announce_index.get(&id).map(|&i| &self.announcements[i])
    }

    /// Events and announcements in generation order.
    pub fn generations(&self) -> impl Iterator<Item = Generation> + '_ {
        self.order.iter().map(|g| match *g {
            Generated::Event(i) => Generation::Event(self.events[i].id),
            Generated::Announce(i) => Generation::Announce(self.announcements[i].id),
        })
    }

    pub fn generation_count(&self) -> usize {
        self.order.len()
    }

    pub fn nth_generation(&self, n: usize) -> Option<Generation> {
        self.order.get(n).map(|g| match *g {
            Generated::Event(i) => Generation::Event(self.events[i].id),
            Generated::Announce(i) => Generation::Announce(self.announcements[i].id),
        })
    }

    /// Every transition since the world was created.
    pub fn log(&self) -> &[Step] {
        &self.log
    }

    pub fn contains_replica(&self, id: ReplicaId) -> bool {
        id.index() < self.replicas.len()
    }

    /// A key never used by `replica` before (keys are minted locally).
    pub fn fresh_key(&mut self, replica: ReplicaId) -> ObjectKey {
        let rep = &mut self.replicas[replica.index()];
        loop {
            let key = ObjectKey::new(replica, rep.next_key);
            rep.next_key += 1;
            if !rep.objects.contains_key(&key) {
                return key;
            }
        }
    }

    /// Runs the generator of `op` at `replica`. On success the effector
    /// chain is applied there immediately and becomes outstanding for all
    /// other replicas.
    pub fn generate(&mut self, replica: ReplicaId, op: Op) -> Result<Outcome, PreconditionFailure> {
        let outcome = self.generate_inner(replica, &op);
        self.log.push(Step::Generate {
            replica,
            op,
            outcome: outcome.clone(),
        });
        outcome
    }

    fn generate_inner(&mut self, replica: ReplicaId, op: &Op) -> Result<Outcome, PreconditionFailure> {
        let rep = &self.replicas[replica.index()];
        match op {
            Op::Invoke { source, attr } => {
                return ops::invoke(&rep.objects, *source, attr).map(|target| Outcome::Invoked { target });
            }
            Op::Announce => {
                return Ok(Outcome::Announced {
                    id: self.announce(replica),
                })
            }
            Op::MayDelete { target, last } => {
                let obj = rep
                    .objects
                    .get(target)
                    .ok_or(PreconditionFailure::UnknownObject { key: *target })?;
                let last = last.resolve(obj);
                if let Some(q) = rep.stability.query(*target, &last) {
                    return Ok(Outcome::Deletable { stable: q.is_stable() });
                }
            }
            _ => {}
        }
        let origin = Origin {
            replica,
            objects: &rep.objects,
            handles: &rep.handles,
            next_ref: rep.next_ref,
            next_dot: rep.next_dot,
        };
        let plan = origin.plan(op, |t, l| rep.stability.is_stable(t, l))?;

        let rep = &mut self.replicas[replica.index()];
        rep.next_ref += plan.refs_used;
        rep.next_dot += plan.dots_used;
        match plan.local {
            LocalEffect::None => {}
            LocalEffect::GrantHandle(k) => {
                rep.handles.insert(k);
            }
            LocalEffect::ReleaseHandle(k) => {
                rep.handles.remove(&k);
            }
        }
        let id = EventId {
            replica,
            seq: rep.progress.clock.get(replica) + 1,
        };
        let event = Event {
            id,
            op: op.clone(),
            deps: rep.progress.clone(),
            chain: plan.chain,
        };
        // The origin applies the whole chain atomically with the generator.
        for eff in &event.chain {
            ops::apply_effector(&mut rep.objects, eff);
            rep.stability.on_effector(eff.object, &eff.payload);
        }
        rep.progress.clock.set(replica, id.seq);
        self.event_index.insert(id, self.events.len());
        self.order.push(Generated::Event(self.events.len()));
        self.events.push(event);
        Ok(Outcome::Event { id })
    }

    fn announce(&mut self, replica: ReplicaId) -> AnnounceId {
        let n = self.replicas.len();
        let rep = &mut self.replicas[replica.index()];
        let mut reports = Vec::new();
        let queried: Vec<(ObjectKey, LastRefs)> = rep.stability.queries.keys().cloned().collect();
        for (target, last) in queried {
            // Reporting on a query gives up the creation handle for good.
            rep.handles.remove(&target);
            let holds = rep
                .objects
                .get(&target)
                .is_some_and(|o| condition_holds(o, &last, &rep.handles));
            reports.push(ConditionReport { target, last, holds });
        }
        let id = AnnounceId {
            replica,
            seq: rep.next_announce,
        };
        rep.next_announce += 1;
        let ann = ClockAnnouncement {
            id,
            clock: rep.progress.clone(),
            reports,
        };
        rep.stability.receive(&ann, n);
        rep.announcements.insert(replica, id.seq);
        self.announce_index.insert(id, self.announcements.len());
        self.order.push(Generated::Announce(self.announcements.len()));
        self.announcements.push(ann);
        id
    }

    pub fn invoke(&self, replica: ReplicaId, source: ObjectKey, attr: &Attr) -> Result<ObjectKey, PreconditionFailure> {
        ops::invoke(&self.replica(replica).objects, source, attr)
    }

    pub fn may_delete(
        &self,
        replica: ReplicaId,
        target: ObjectKey,
        last: &LastRefs,
    ) -> Result<bool, PreconditionFailure> {
        self.replica(replica).may_delete(target, last)
    }

    /// The message as seen on the wire, if it exists.
    pub fn message(&self, msg: MessageRef) -> Option<EffectorMessage<'_>> {
        match msg {
            MessageRef::Effector { event, index } => {
                let e = self.event(event)?;
                (index < e.message_count(self.mode)).then(|| EffectorMessage {
                    event,
                    chain_index: index,
                    effectors: e.message(self.mode, index),
                })
            }
            MessageRef::Announce { .. } => None,
        }
    }

    fn exists(&self, msg: MessageRef) -> bool {
        match msg {
            MessageRef::Effector { event, index } => {
                self.event(event).is_some_and(|e| index < e.message_count(self.mode))
            }
            MessageRef::Announce { id } => self.announce_index.contains_key(&id),
        }
    }

    /// Number of messages of `event` applied at `replica`.
    pub fn applied_prefix(&self, replica: ReplicaId, event: &Event) -> u32 {
        self.replica(replica)
            .progress
            .applied_prefix(event.id, event.message_count(self.mode))
    }

    pub fn is_applied(&self, replica: ReplicaId, msg: MessageRef) -> bool {
        match msg {
            MessageRef::Effector { event, index } => self
                .event(event)
                .is_some_and(|e| self.applied_prefix(replica, e) > index),
            MessageRef::Announce { id } => self.replica(replica).announced_from(id.replica) >= id.seq,
        }
    }

    /// Causal deliverability of a not-yet-applied message.
    pub fn deliverable(&self, replica: ReplicaId, msg: MessageRef) -> bool {
        let rep = self.replica(replica);
        match msg {
            MessageRef::Effector { event, index } => {
                let Some(e) = self.event(event) else { return false };
                index < e.message_count(self.mode)
                    && self.applied_prefix(replica, e) == index
                    && rep.progress.covers(&e.deps)
            }
            MessageRef::Announce { id } => {
                let Some(ann) = self.announcement(id) else { return false };
                rep.announced_from(id.replica) + 1 == id.seq && rep.progress.covers(&ann.clock)
            }
        }
    }

    /// Delivers `msg` to `replica`, buffering it when it is not yet
    /// deliverable. Buffered messages are re-examined after every
    /// application.
    pub fn deliver(&mut self, replica: ReplicaId, msg: MessageRef) -> Result<Delivery, DeliveryError> {
        if !self.contains_replica(replica) {
            return Err(DeliveryError::UnknownReplica(replica));
        }
        if !self.exists(msg) {
            return Err(DeliveryError::UnknownMessage(msg));
        }
        if self.is_applied(replica, msg) {
            return Err(DeliveryError::DuplicateDelivery(msg, replica));
        }
        if !self.deliverable(replica, msg) {
            let buffer = &mut self.replicas[replica.index()].buffer;
            if !buffer.contains(&msg) {
                buffer.push(msg);
            }
            return Ok(Delivery::Buffered);
        }
        self.apply(replica, msg);
        self.drain_buffer(replica);
        Ok(Delivery::Applied)
    }

    fn drain_buffer(&mut self, replica: ReplicaId) {
        loop {
            let buffer = &self.replicas[replica.index()].buffer;
            let Some(pos) = buffer.iter().position(|&m| self.deliverable(replica, m)) else {
                break;
            };
            let msg = self.replicas[replica.index()].buffer.remove(pos);
            self.apply(replica, msg);
        }
        let buffered = std::mem::take(&mut self.replicas[replica.index()].buffer);
        let kept = buffered.into_iter().filter(|&m| !self.is_applied(replica, m)).collect();
        self.replicas[replica.index()].buffer = kept;
    }

    /// Applies a deliverable message and records the step.
    fn apply(&mut self, replica: ReplicaId, msg: MessageRef) {
        debug_assert!(self.deliverable(replica, msg));
        let n = self.replicas.len();
        match msg {
            MessageRef::Effector { event, index } => {
                let e = &self.events[self.event_index[&event]];
                let count = e.message_count(self.mode);
                let rep = &mut self.replicas[replica.index()];
                for eff in e.message(self.mode, index) {
                    ops::apply_effector(&mut rep.objects, eff);
                    rep.stability.on_effector(eff.object, &eff.payload);
                }
                rep.progress.advance(event, index, count);
            }
            MessageRef::Announce { id } => {
                let ann = &self.announcements[self.announce_index[&id]];
                let rep = &mut self.replicas[replica.index()];
                rep.stability.receive(ann, n);
                rep.announcements.insert(id.replica, id.seq);
            }
        }
        self.log.push(Step::Deliver { replica, msg });
    }

    /// Messages not yet applied at `replica`, in generation order. Applying
    /// them in this order is always causally valid.
    pub fn outstanding(&self, replica: ReplicaId) -> Vec<MessageRef> {
        let mut out = Vec::new();
        for g in &self.order {
            match *g {
                Generated::Event(i) => {
                    let e = &self.events[i];
                    let from = self.applied_prefix(replica, e);
                    for index in from..e.message_count(self.mode) {
                        out.push(MessageRef::Effector { event: e.id, index });
                    }
                }
                Generated::Announce(i) => {
                    let id = self.announcements[i].id;
                    if self.replica(replica).announced_from(id.replica) < id.seq {
                        out.push(MessageRef::Announce { id });
                    }
                }
            }
        }
        out
    }

    /// Events with effectors not yet applied somewhere, with the first
    /// unapplied chain position (minimum over replicas).
    pub fn in_flight(&self) -> Vec<(EventId, u32)> {
        let mut out = Vec::new();
        for e in &self.events {
            let count = e.message_count(self.mode);
            let min = self
                .replica_ids()
                .map(|r| self.applied_prefix(r, e))
                .min()
                .unwrap_or(count);
            if min < count {
                let start = match self.mode {
                    CompositionMode::Atomic => 0,
                    CompositionMode::PureCausal => min,
                };
                out.push((e.id, start));
            }
        }
        out
    }

    pub fn is_quiescent(&self) -> bool {
        self.replica_ids().all(|r| self.outstanding(r).is_empty())
    }

    /// Delivers everything outstanding everywhere.
    pub fn quiesce(&mut self) -> Result<(), Stuck> {
        self.quiesce_with(|_, _| {})
    }

    /// Like [`World::quiesce`], calling `after` after each application.
    pub fn quiesce_with(&mut self, mut after: impl FnMut(&World, ReplicaId)) -> Result<(), Stuck> {
        for replica in self.replica_ids().collect::<Vec<_>>() {
            for msg in self.outstanding(replica) {
                if self.is_applied(replica, msg) {
                    continue;
                }
                if !self.deliverable(replica, msg) {
                    return Err(Stuck { replica, msg });
                }
                self.apply(replica, msg);
                after(self, replica);
            }
            self.replicas[replica.index()].buffer.clear();
        }
        Ok(())
    }

    /// Hash of the replicated and generated state, ignoring the step log.
    pub fn fingerprint(&self) -> u128 {
        let mut a = std::collections::hash_map::DefaultHasher::new();
        let mut b = std::collections::hash_map::DefaultHasher::new();
        0xa5a5_5a5a_u32.hash(&mut b);
        for h in [&mut a, &mut b] {
            self.mode.hash(h);
            self.replicas.hash(h);
            self.events.hash(h);
            self.announcements.hash(h);
            self.order.hash(h);
        }
        ((a.finish() as u128) << 64) | b.finish() as u128
    }

    /// Canonical serialized form of all replica states.
    pub fn serialize_state(&self) -> String {
        serde_json::to_string(&self.replicas).expect("replica state serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: u16) -> ReplicaId {
        ReplicaId(n)
    }

    fn setup() -> (World, ObjectKey, ObjectKey) {
        let mut w = World::new(2, CompositionMode::PureCausal);
        let a = w.fresh_key(r(0));
        let x = w.fresh_key(r(0));
        w.generate(r(0), Op::create(a, true, &["a"])).unwrap();
        w.generate(r(0), Op::create(x, true, &["x"])).unwrap();
        (w, a, x)
    }

    #[test]
    fn create_applies_at_origin_only() {
        let (w, a, _) = setup();
        assert!(w.replica(r(0)).object(a).is_some());
        assert!(w.replica(r(1)).object(a).is_none());
        assert_eq!(w.outstanding(r(1)).len(), 2);
        assert!(w.outstanding(r(0)).is_empty());
    }

    #[test]
    fn chain_positions_deliver_in_order() {
        let (mut w, a, x) = setup();
        w.quiesce().unwrap();
        let Outcome::Event { id } = w.generate(r(0), Op::init(a, "a", x)).unwrap() else {
            panic!()
        };
        let second = MessageRef::Effector { event: id, index: 1 };
        let first = MessageRef::Effector { event: id, index: 0 };
        assert!(!w.deliverable(r(1), second));
        assert!(w.deliverable(r(1), first));
        assert_eq!(w.deliver(r(1), second).unwrap(), Delivery::Buffered);
        assert_eq!(w.deliver(r(1), first).unwrap(), Delivery::Applied);
        // The buffered second message went in right after.
        assert!(w.is_applied(r(1), second));
        assert_eq!(
            w.deliver(r(1), first),
            Err(DeliveryError::DuplicateDelivery(first, r(1)))
        );
    }

    #[test]
    fn causal_dependencies_block_delivery() {
        let (mut w, a, _) = setup();
        let msg = MessageRef::Effector {
            event: EventId { replica: r(0), seq: 2 },
            index: 0,
        };
        // Event 2 depends on event 1 from the same origin.
        assert!(!w.deliverable(r(1), msg));
        w.quiesce().unwrap();
        assert!(w.replica(r(1)).object(a).is_some());
        assert!(w.is_quiescent());
    }

    #[test]
    fn quiesce_is_idempotent() {
        let (mut w, _, _) = setup();
        w.quiesce().unwrap();
        let before = w.fingerprint();
        let steps = w.log().len();
        w.quiesce().unwrap();
        assert_eq!(before, w.fingerprint());
        assert_eq!(steps, w.log().len());
    }

    #[test]
    fn empty_world_quiesce_is_noop() {
        let mut w = World::new(3, CompositionMode::Atomic);
        let fp = w.fingerprint();
        w.quiesce().unwrap();
        assert_eq!(fp, w.fingerprint());
    }

    #[test]
    fn atomic_mode_ships_one_message() {
        let mut w = World::new(2, CompositionMode::Atomic);
        let a = w.fresh_key(r(0));
        let x = w.fresh_key(r(0));
        w.generate(r(0), Op::create(a, true, &["a"])).unwrap();
        w.generate(r(0), Op::create(x, true, &[])).unwrap();
        let Outcome::Event { id } = w.generate(r(0), Op::init(a, "a", x)).unwrap() else {
            panic!()
        };
        assert_eq!(w.event(id).unwrap().message_count(CompositionMode::Atomic), 1);
        assert!(w.message(MessageRef::Effector { event: id, index: 1 }).is_none());
        assert_eq!(
            w.message(MessageRef::Effector { event: id, index: 0 })
                .unwrap()
                .effectors
                .len(),
            2
        );
    }
}
