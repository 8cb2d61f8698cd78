//! Detection of stable deletion conditions.
//!
//! A deletion query `(target, last)` asks whether `inref(target) ⊆ last`
//! holds now and can never again be falsified. Replicas gossip their
//! progress in [`ClockAnnouncement`]s; each announcement carries a condition
//! report for every query registered at the announcer. An observer runs a
//! two-phase detection per query:
//!
//! * **collecting**: wait for a `holds` report from every replica, then take
//!   the snapshot `S`, the least upper bound of the reported clocks;
//! * **confirming**: wait for a later `holds` report from every replica whose
//!   clock is exactly `S`. A report at any other clock restarts collection
//!   with that report; a failing report restarts collection from scratch.
//!
//! When every replica confirms at `S`, all of them passed through the same
//! causal cut with the condition true and nothing in flight, and from such
//! a cut no replica can mint a new reference to the target. The query is
//! then stable for good.
//!
//! [`oracle_stable`] is the omniscient counterpart used by the test harness.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::clock::{Progress, VectorClock};
use crate::model::effector::Payload;
use crate::model::ids::{AnnounceId, ObjectKey, ReplicaId};
use crate::model::world::World;
use crate::refs::inref::LastRefs;
use crate::refs::object::ObjectRecord;

/// Identifies a deletion query.
pub type QueryKey = (ObjectKey, LastRefs);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConditionReport {
    pub target: ObjectKey,
    pub last: LastRefs,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClockAnnouncement {
    pub id: AnnounceId,
    /// The announcer's applied progress when the announcement was made.
    pub clock: Progress,
    pub reports: Vec<ConditionReport>,
}

impl ClockAnnouncement {
    pub fn from(&self) -> ReplicaId {
        self.id.replica
    }
}

/// Latest announced clock of every replica, as known by one observer.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StableFrontier {
    latest: BTreeMap<ReplicaId, VectorClock>,
}

impl StableFrontier {
    pub fn record(&mut self, from: ReplicaId, clock: &VectorClock) {
        let entry = self.latest.entry(from).or_default();
        entry.merge(clock);
    }

    pub fn latest(&self, from: ReplicaId) -> Option<&VectorClock> {
        self.latest.get(&from)
    }

    /// Pointwise minimum over all `replicas`; zero until everyone announced.
    pub fn glb(&self, replicas: usize) -> VectorClock {
        let mut out: Option<VectorClock> = None;
        for r in 0..replicas {
            let c = match self.latest.get(&ReplicaId(r as u16)) {
                Some(c) => c.clone(),
                None => return VectorClock::new(),
            };
            out = Some(match out {
                None => c,
                Some(acc) => acc.meet(&c),
            });
        }
        out.unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Collecting,
    Confirming,
    Stable,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StabilityQuery {
    pub target: ObjectKey,
    pub last: LastRefs,
    pub phase: Phase,
    /// Collecting: latest `holds` clock per replica.
    collected: BTreeMap<ReplicaId, Progress>,
    /// Confirming: the snapshot every replica must confirm.
    snapshot: Option<Progress>,
    confirmed: BTreeSet<ReplicaId>,
    pub refutations: u32,
}

impl StabilityQuery {
    pub fn new(target: ObjectKey, last: LastRefs) -> Self {
        Self {
            target,
            last,
            phase: Phase::Collecting,
            collected: BTreeMap::new(),
            snapshot: None,
            confirmed: BTreeSet::new(),
            refutations: 0,
        }
    }

    pub fn is_stable(&self) -> bool {
        self.phase == Phase::Stable
    }

    pub fn snapshot(&self) -> Option<&Progress> {
        self.snapshot.as_ref()
    }

    /// Feeds one condition report received from `from`.
    pub fn observe(&mut self, from: ReplicaId, clock: &Progress, holds: bool, replicas: usize) {
        if self.phase == Phase::Stable {
            return;
        }
        if !holds {
            if self.phase == Phase::Confirming || !self.collected.is_empty() {
                self.refutations += 1;
            }
            self.restart();
            return;
        }
        match self.phase {
            Phase::Collecting => self.collect(from, clock, replicas),
            Phase::Confirming => {
                if Some(clock) == self.snapshot.as_ref() {
                    self.confirmed.insert(from);
                    if self.confirmed.len() == replicas {
                        self.phase = Phase::Stable;
                    }
                } else if self.snapshot.as_ref().is_some_and(|s| clock.covers(s)) {
                    // Activity since the snapshot: collect again, starting here.
                    self.restart();
                    self.collect(from, clock, replicas);
                }
                // A clock still below the snapshot is a stale report; wait.
            }
            Phase::Stable => {}
        }
    }

    fn collect(&mut self, from: ReplicaId, clock: &Progress, replicas: usize) {
        self.collected.insert(from, clock.clone());
        if self.collected.len() == replicas {
            let mut snapshot = Progress::new();
            for c in self.collected.values() {
                snapshot = lub(&snapshot, c);
            }
            self.snapshot = Some(snapshot);
            self.collected.clear();
            self.phase = Phase::Confirming;
        }
    }

    fn restart(&mut self) {
        self.phase = Phase::Collecting;
        self.collected.clear();
        self.snapshot = None;
        self.confirmed.clear();
    }
}

/// Least upper bound of two progress values.
fn lub(a: &Progress, b: &Progress) -> Progress {
    let mut out = a.clone();
    let origins: BTreeSet<ReplicaId> = b
        .clock
        .iter()
        .map(|(r, _)| r)
        .chain(b.partial.keys().copied())
        .collect();
    for origin in origins {
        let pb = b.position(origin);
        if pb > out.position(origin) {
            out.clock.set(origin, pb.events);
            if pb.prefix > 0 {
                out.partial.insert(origin, pb.prefix);
            } else {
                out.partial.remove(&origin);
            }
        }
    }
    out
}

/// Per-replica stability state: known queries and the progress frontier.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StabilityState {
    #[serde(with = "query_list")]
    pub queries: BTreeMap<QueryKey, StabilityQuery>,
    pub frontier: StableFrontier,
}

impl StabilityState {
    pub fn register(&mut self, target: ObjectKey, last: &LastRefs) {
        self.queries
            .entry((target, last.clone()))
            .or_insert_with(|| StabilityQuery::new(target, last.clone()));
    }

    pub fn query(&self, target: ObjectKey, last: &LastRefs) -> Option<&StabilityQuery> {
        self.queries.get(&(target, last.clone()))
    }

    pub fn is_stable(&self, target: ObjectKey, last: &LastRefs) -> bool {
        self.query(target, last).is_some_and(StabilityQuery::is_stable)
    }

    /// Applies an announcement (own or remote).
    pub fn receive(&mut self, ann: &ClockAnnouncement, replicas: usize) {
        self.frontier.record(ann.from(), &ann.clock.clock);
        for report in &ann.reports {
            if let Some(q) = self.queries.get_mut(&(report.target, report.last.clone())) {
                q.observe(ann.from(), &ann.clock, report.holds, replicas);
            }
        }
    }

    pub fn on_effector(&mut self, object: ObjectKey, payload: &Payload) {
        if let Payload::RegisterQuery { last } = payload {
            self.register(object, last);
        }
    }
}

// JSON object keys must be strings; queries are keyed by a tuple.
mod query_list {
    use super::{QueryKey, StabilityQuery};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(map: &BTreeMap<QueryKey, StabilityQuery>, s: S) -> Result<S::Ok, S::Error> {
        map.values().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<QueryKey, StabilityQuery>, D::Error> {
        let list = Vec::<StabilityQuery>::deserialize(d)?;
        Ok(list.into_iter().map(|q| ((q.target, q.last.clone()), q)).collect())
    }
}

/// The condition a replica reports for `(obj, last)`: not a root, listed
/// sources all ignored, and not reachable through this replica's handle
/// or through any source other than the object itself.
pub fn condition_holds(obj: &ObjectRecord, last: &LastRefs, handles: &BTreeSet<ObjectKey>) -> bool {
    !obj.root && obj.inref.within(last) && !obj.has_external_source() && !handles.contains(&obj.key)
}

/// Distributed detection result at `replica`.
pub fn stably_subset(world: &World, replica: ReplicaId, target: ObjectKey, last: &LastRefs) -> bool {
    world.replica(replica).stability.is_stable(target, last)
}

/// Omniscient check: the condition holds at every replica, nothing in
/// flight can add a pair outside `last`, and nothing anywhere can mint a
/// new reference to `target`.
pub fn oracle_stable(world: &World, target: ObjectKey, last: &LastRefs) -> bool {
    for rep in world.replicas() {
        let Some(obj) = rep.objects.get(&target) else {
            continue;
        };
        if obj.root || !obj.inref.within(last) || rep.handles.contains(&target) {
            return false;
        }
        // Surviving references outside `last`, at any source.
        for o in rep.objects.values() {
            if o.outgoing().any(|(_, r)| r.target == target && !last.contains(r.id)) {
                return false;
            }
        }
        // Reachability through a source other than the target itself means
        // future generators could still copy a reference to it.
        if obj.has_external_source() {
            return false;
        }
    }
    for (event, start) in world.in_flight() {
        for eff in world.event(event).map(|e| &e.chain[start as usize..]).unwrap_or(&[]) {
            if eff.object == target {
                if let Payload::InrefAdd { id, .. } = eff.payload {
                    if !last.contains(id) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ids::EventId;

    fn rid(n: u16) -> ReplicaId {
        ReplicaId(n)
    }

    fn progress_at(events: u64) -> Progress {
        let mut p = Progress::new();
        for seq in 1..=events {
            p.advance(EventId { replica: rid(0), seq }, 0, 1);
        }
        p
    }

    fn query() -> StabilityQuery {
        StabilityQuery::new(ObjectKey::new(rid(0), 1), LastRefs::empty())
    }

    #[test]
    fn two_rounds_at_equal_clocks_stabilize() {
        let mut q = query();
        let g = progress_at(3);
        for r in 0..3 {
            q.observe(rid(r), &g, true, 3);
        }
        assert_eq!(q.phase, Phase::Confirming);
        for r in 0..2 {
            q.observe(rid(r), &g, true, 3);
        }
        assert!(!q.is_stable());
        q.observe(rid(2), &g, true, 3);
        assert!(q.is_stable());
    }

    #[test]
    fn activity_between_rounds_restarts() {
        let mut q = query();
        for r in 0..2 {
            q.observe(rid(r), &progress_at(2), true, 2);
        }
        assert_eq!(q.phase, Phase::Confirming);
        q.observe(rid(0), &progress_at(3), true, 2);
        assert_eq!(q.phase, Phase::Collecting);
        q.observe(rid(1), &progress_at(3), true, 2);
        assert_eq!(q.phase, Phase::Confirming);
        q.observe(rid(0), &progress_at(3), true, 2);
        q.observe(rid(1), &progress_at(3), true, 2);
        assert!(q.is_stable());
    }

    #[test]
    fn failing_report_refutes() {
        let mut q = query();
        let g = progress_at(1);
        q.observe(rid(0), &g, true, 2);
        q.observe(rid(1), &g, true, 2);
        q.observe(rid(0), &g, false, 2);
        assert_eq!(q.phase, Phase::Collecting);
        assert_eq!(q.refutations, 1);
        // Stable is terminal.
        for _ in 0..2 {
            q.observe(rid(0), &g, true, 2);
            q.observe(rid(1), &g, true, 2);
        }
        assert!(q.is_stable());
        q.observe(rid(1), &g, false, 2);
        assert!(q.is_stable());
    }

    #[test]
    fn stale_report_in_confirming_is_ignored() {
        let mut q = query();
        q.observe(rid(0), &progress_at(1), true, 2);
        q.observe(rid(1), &progress_at(2), true, 2);
        assert_eq!(q.snapshot(), Some(&progress_at(2)));
        q.observe(rid(0), &progress_at(1), true, 2);
        assert_eq!(q.phase, Phase::Confirming);
    }

    #[test]
    fn frontier_glb_needs_everyone() {
        let mut f = StableFrontier::default();
        let mut c = VectorClock::new();
        c.set(rid(0), 4);
        f.record(rid(0), &c);
        assert!(f.glb(2).is_zero());
        let mut d = VectorClock::new();
        d.set(rid(0), 2);
        f.record(rid(1), &d);
        assert_eq!(f.glb(2).get(rid(0)), 2);
        assert_eq!(f.glb(1).get(rid(0)), 4);
    }
}
