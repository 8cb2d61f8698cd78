//! Invariant checking over replayed traces.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::replay::{replay_with, ReplayMismatch};
use super::trace::{Trace, TraceStep};
use crate::model::effector::{CompositionMode, Event, Payload};
use crate::model::ids::{EventId, ObjectKey, RefId, ReplicaId};
use crate::model::world::{Outcome, World};
use crate::refs::inref::LastRefs;
use crate::refs::ops::{IgnoreSet, Op};
use crate::stability::oracle_stable;

/// Announce rounds per replica the liveness check allows.
pub const LIVENESS_ROUNDS: usize = 2;

/// Violations kept per invariant; further ones are only counted.
const KEEP_PER_INVARIANT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Invariant {
    /// Referential integrity: held references point at live objects that list them.
    I1,
    /// Reference ids are minted once and introduced once.
    I2,
    /// Deleted objects were and stay unreferenced outside their ignore set.
    I3,
    /// `removed ⊆ added` in every inref.
    I4,
    /// Quiesced replicas agree.
    I5,
    /// Quiesced inrefs list exactly the surviving references.
    I6,
    /// Unreferenced objects are eventually found deletable.
    I7,
    /// Detected stability implies the omniscient oracle.
    StableRefinement,
    /// Once the oracle holds for a registered query it keeps holding.
    StablePersistence,
    /// Every state reachable in atomic mode is reachable in pure-causal mode.
    AtomicRefinement,
}

impl Invariant {
    pub const ALL: [Invariant; 10] = [
        Invariant::I1,
        Invariant::I2,
        Invariant::I3,
        Invariant::I4,
        Invariant::I5,
        Invariant::I6,
        Invariant::I7,
        Invariant::StableRefinement,
        Invariant::StablePersistence,
        Invariant::AtomicRefinement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Invariant::I1 => "I1",
            Invariant::I2 => "I2",
            Invariant::I3 => "I3",
            Invariant::I4 => "I4",
            Invariant::I5 => "I5",
            Invariant::I6 => "I6",
            Invariant::I7 => "I7",
            Invariant::StableRefinement => "stable=>oracle",
            Invariant::StablePersistence => "oracle-persists",
            Invariant::AtomicRefinement => "atomic<=causal",
        }
    }
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where a violation was observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Location {
    /// After trace step `n`.
    Step(usize),
    /// During forced quiescence after the trace.
    Quiescence,
    /// During the gossip rounds and deletions of the liveness check.
    Liveness,
    /// A property of the trace as a whole.
    Trace,
    /// A state of an exhaustive exploration, by path depth.
    Explored(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Step(n) => write!(f, "step {n}"),
            Location::Quiescence => f.write_str("quiescence"),
            Location::Liveness => f.write_str("liveness"),
            Location::Trace => f.write_str("whole trace"),
            Location::Explored(d) => write!(f, "explored state at depth {d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub invariant: Invariant,
    pub location: Location,
    pub replica: Option<ReplicaId>,
    pub objects: Vec<ObjectKey>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}", self.invariant, self.location)?;
        if let Some(r) = self.replica {
            write!(f, " on {r}")?;
        }
        if !self.objects.is_empty() {
            let keys: Vec<String> = self.objects.iter().map(ToString::to_string).collect();
            write!(f, " [{}]", keys.join(" "))?;
        }
        write!(f, ": {}", self.detail)
    }
}

/// What the checked traces actually exercised.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub traces: usize,
    pub steps: usize,
    pub events: usize,
    pub failed_ops: usize,
    /// Traces in which some replica state held a multi-valued outref.
    pub multi_valued_traces: usize,
    /// Successful `delete` generators inside the traces themselves.
    pub deletes: usize,
    /// Queries found stable inside the traces themselves.
    pub stable_queries: usize,
    /// Objects the liveness check registered, found deletable and deleted.
    pub liveness_deletes: usize,
}

impl Coverage {
    pub fn merge(&mut self, other: &Coverage) {
        self.traces += other.traces;
        self.steps += other.steps;
        self.events += other.events;
        self.failed_ops += other.failed_ops;
        self.multi_valued_traces += other.multi_valued_traces;
        self.deletes += other.deletes;
        self.stable_queries += other.stable_queries;
        self.liveness_deletes += other.liveness_deletes;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InvariantReport {
    counts: BTreeMap<Invariant, usize>,
    violations: Vec<Violation>,
    pub coverage: Coverage,
    /// A smaller trace failing the same invariant, when one was computed.
    pub shrunk: Option<Trace>,
}

impl InvariantReport {
    pub fn record(&mut self, v: Violation) {
        let n = self.counts.entry(v.invariant).or_default();
        *n += 1;
        if *n <= KEEP_PER_INVARIANT {
            self.violations.push(v);
        }
    }

    pub fn count(&self, inv: Invariant) -> usize {
        self.counts.get(&inv).copied().unwrap_or(0)
    }

    pub fn passed(&self, inv: Invariant) -> bool {
        self.count(inv) == 0
    }

    pub fn is_clean(&self) -> bool {
        self.counts.values().all(|&n| n == 0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    /// The first violation in report order.
    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }

    pub fn failed_invariants(&self) -> Vec<Invariant> {
        Invariant::ALL.into_iter().filter(|&i| !self.passed(i)).collect()
    }

    /// Associative merge of reports from independent executions.
    pub fn merge(&mut self, other: InvariantReport) {
        for v in other.violations {
            let kept = self.violations.iter().filter(|x| x.invariant == v.invariant).count();
            if kept < KEEP_PER_INVARIANT {
                self.violations.push(v);
            }
        }
        for (inv, n) in other.counts {
            *self.counts.entry(inv).or_default() += n;
        }
        self.coverage.merge(&other.coverage);
        if self.shrunk.is_none() {
            self.shrunk = other.shrunk;
        }
    }
}

impl InvariantReport {
    /// Pass/fail lines for `invariants` followed by the kept violations.
    pub fn render(&self, invariants: &[Invariant]) -> String {
        let mut out = String::new();
        for &inv in invariants {
            let n = self.count(inv);
            if n == 0 {
                out.push_str(&format!("{:<16} pass\n", inv.name()));
            } else {
                out.push_str(&format!("{:<16} FAIL ({n} violations)\n", inv.name()));
            }
        }
        for v in &self.violations {
            out.push_str(&format!("  {v}\n"));
        }
        out
    }
}

/// Invariants `check_invariants` evaluates on a trace.
pub const TRACE_INVARIANTS: [Invariant; 8] = [
    Invariant::I1,
    Invariant::I2,
    Invariant::I3,
    Invariant::I4,
    Invariant::I5,
    Invariant::I6,
    Invariant::I7,
    Invariant::StableRefinement,
];

impl fmt::Display for InvariantReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&Invariant::ALL))
    }
}

/// A `delete` event as the invariants see it.
struct Deletion<'a> {
    event: &'a Event,
    target: ObjectKey,
    last: &'a LastRefs,
}

fn deletions(world: &World) -> impl Iterator<Item = Deletion<'_>> {
    world.events().iter().filter_map(|e| match e.chain.last() {
        Some(eff) if matches!(e.op, Op::Delete { .. }) => match &eff.payload {
            Payload::MarkDeleted { last } => Some(Deletion {
                event: e,
                target: eff.object,
                last,
            }),
            _ => None,
        },
        _ => None,
    })
}

/// Per-state checks of one replica: I1, I3's state clause and I4.
pub fn check_replica(world: &World, replica: ReplicaId, at: Location, report: &mut InvariantReport) {
    let rep = world.replica(replica);
    let mut bad = |invariant, objects: Vec<ObjectKey>, detail: String| {
        report.record(Violation {
            invariant,
            location: at,
            replica: Some(replica),
            objects,
            detail,
        })
    };
    for (key, obj) in &rep.objects {
        for (attr, r) in obj.outgoing() {
            match rep.objects.get(&r.target) {
                None => bad(
                    Invariant::I1,
                    vec![*key, r.target],
                    format!("{key}.{attr} -> unknown {}", r.target),
                ),
                Some(t) if t.deleted => bad(
                    Invariant::I1,
                    vec![*key, r.target],
                    format!("{key}.{attr} -> deleted {} via {}", r.target, r.id),
                ),
                Some(t) if !t.inref.contains(*key, r.id) => bad(
                    Invariant::I1,
                    vec![*key, r.target],
                    format!("{key}.{attr} -> {} via {} is not listed in its inref", r.target, r.id),
                ),
                Some(_) => {}
            }
        }
        if !obj.inref.is_well_formed() {
            bad(
                Invariant::I4,
                vec![*key],
                format!("inref of {key} removes pairs it never added"),
            );
        }
    }
    for d in deletions(world) {
        if world.applied_prefix(replica, d.event) == 0 {
            continue;
        }
        if let Some(t) = rep.objects.get(&d.target) {
            if !t.inref.within(d.last) {
                bad(
                    Invariant::I3,
                    vec![d.target],
                    format!(
                        "inref of {} has pairs outside {} after {}",
                        d.target, d.last, d.event.id
                    ),
                );
            }
        }
    }
}

/// Every query any replica considers stable must satisfy the oracle now.
pub fn check_refinement(world: &World, at: Location, report: &mut InvariantReport) -> usize {
    let mut stable = 0;
    for rep in world.replicas() {
        for q in rep.stability.queries.values().filter(|q| q.is_stable()) {
            stable += 1;
            if !oracle_stable(world, q.target, &q.last) {
                report.record(Violation {
                    invariant: Invariant::StableRefinement,
                    location: at,
                    replica: Some(rep.id),
                    objects: vec![q.target],
                    detail: format!("({}, {}) is detected stable but the oracle disagrees", q.target, q.last),
                });
            }
        }
    }
    stable
}

fn has_multi_valued(world: &World, replica: ReplicaId) -> bool {
    world
        .replica(replica)
        .objects
        .values()
        .any(|o| o.attrs.values().any(|out| out.is_multi_valued()))
}

/// I2 over every event generated so far.
pub fn check_unique_ids(world: &World, report: &mut InvariantReport) {
    let mut minted: BTreeMap<RefId, EventId> = BTreeMap::new();
    let mut introduced: BTreeMap<RefId, EventId> = BTreeMap::new();
    let mut bad = |detail: String| {
        report.record(Violation {
            invariant: Invariant::I2,
            location: Location::Trace,
            replica: None,
            objects: Vec::new(),
            detail,
        })
    };
    for e in world.events() {
        for eff in &e.chain {
            match &eff.payload {
                Payload::InrefAdd { id, .. } => {
                    if id.origin != e.id.replica {
                        bad(format!("{} mints {id} from another replica's id space", e.id));
                    }
                    if let Some(prev) = minted.insert(*id, e.id) {
                        bad(format!("{id} added by both {prev} and {}", e.id));
                    }
                }
                Payload::OutrefSet { value: Some(r), .. } => {
                    if let Some(prev) = introduced.insert(r.id, e.id) {
                        bad(format!("{} introduced by both {prev} and {}", r.id, e.id));
                    }
                }
                _ => {}
            }
        }
    }
    for (id, e) in &introduced {
        if minted.get(id) != Some(e) {
            bad(format!(
                "{id} introduced by {e} without a matching inref-add in the same event"
            ));
        }
    }
}

/// I3's trace clause: an inref-add to a deleted object outside its ignore
/// set must happen causally before the deletion.
pub fn check_late_additions(world: &World, report: &mut InvariantReport) {
    let mode = world.mode();
    for d in deletions(world) {
        for f in world.events() {
            if f.id == d.event.id {
                continue;
            }
            for (i, eff) in f.chain.iter().enumerate() {
                let Payload::InrefAdd { source, id } = eff.payload else {
                    continue;
                };
                if eff.object != d.target || d.last.contains(id) {
                    continue;
                }
                let msg = match mode {
                    CompositionMode::Atomic => 0,
                    CompositionMode::PureCausal => i as u32,
                };
                let seen = d.event.deps.applied_prefix(f.id, f.message_count(mode));
                if seen <= msg {
                    report.record(Violation {
                        invariant: Invariant::I3,
                        location: Location::Trace,
                        replica: None,
                        objects: vec![d.target, source],
                        detail: format!(
                            "{} adds ({source}, {id}) to {} concurrently with or after deletion {}",
                            f.id, d.target, d.event.id
                        ),
                    });
                }
            }
        }
    }
}

/// I5 and I6 on a quiesced world.
pub fn check_quiesced(world: &World, at: Location, report: &mut InvariantReport) {
    let reps = world.replicas();
    for rep in &reps[1..] {
        if rep.objects != reps[0].objects {
            let differing: Vec<ObjectKey> = rep
                .objects
                .keys()
                .chain(reps[0].objects.keys())
                .filter(|k| rep.objects.get(k) != reps[0].objects.get(k))
                .copied()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            report.record(Violation {
                invariant: Invariant::I5,
                location: at,
                replica: Some(rep.id),
                objects: differing,
                detail: format!("{} and {} differ after quiescence", reps[0].id, rep.id),
            });
        }
    }
    for rep in reps {
        let mut expected: BTreeMap<ObjectKey, BTreeSet<(ObjectKey, RefId)>> = BTreeMap::new();
        for (s, obj) in &rep.objects {
            for (_, r) in obj.outgoing() {
                expected.entry(r.target).or_default().insert((*s, r.id));
            }
        }
        for (t, obj) in &rep.objects {
            let current: BTreeSet<(ObjectKey, RefId)> = obj.inref.current().collect();
            let want = expected.remove(t).unwrap_or_default();
            if current != want {
                report.record(Violation {
                    invariant: Invariant::I6,
                    location: at,
                    replica: Some(rep.id),
                    objects: vec![*t],
                    detail: format!(
                        "inref of {t} lists {} pairs, {} references survive",
                        current.len(),
                        want.len()
                    ),
                });
            }
        }
    }
}

/// Non-root objects nothing refers to, as seen by a quiesced replica.
pub fn unreferenced(world: &World, replica: ReplicaId) -> Vec<ObjectKey> {
    let rep = world.replica(replica);
    let referenced: BTreeSet<ObjectKey> = rep
        .objects
        .values()
        .flat_map(|o| o.outgoing().map(|(_, r)| r.target))
        .collect();
    rep.objects
        .values()
        .filter(|o| !o.root && !referenced.contains(&o.key))
        .map(|o| o.key)
        .collect()
}

fn quiesce_checked(world: &mut World, at: Location, report: &mut InvariantReport) {
    let mut found = InvariantReport::default();
    let res = world.quiesce_with(|w, r| {
        check_replica(w, r, at, &mut found);
        check_refinement(w, at, &mut found);
    });
    report.merge(found);
    if let Err(stuck) = res {
        report.record(Violation {
            invariant: Invariant::I5,
            location: at,
            replica: Some(stuck.replica),
            objects: Vec::new(),
            detail: stuck.to_string(),
        });
    }
}

/// I7 on a quiesced world: register `(t, ∅)` for every unreferenced
/// non-root object, run the allowed announce rounds, require the query to
/// be stable everywhere, then delete the live candidates and quiesce.
/// Returns the number of objects deleted.
pub fn check_liveness(world: &mut World, report: &mut InvariantReport) -> usize {
    let at = Location::Liveness;
    let r0 = ReplicaId(0);
    let candidates = unreferenced(world, r0);
    if candidates.is_empty() {
        return 0;
    }
    let none = LastRefs::empty();
    for &t in &candidates {
        if let Err(e) = world.generate(
            r0,
            Op::MayDelete {
                target: t,
                last: IgnoreSet::none(),
            },
        ) {
            report.record(Violation {
                invariant: Invariant::I7,
                location: at,
                replica: Some(r0),
                objects: vec![t],
                detail: format!("could not register ({t}, {none}): {e}"),
            });
        }
    }
    quiesce_checked(world, at, report);
    for _ in 0..LIVENESS_ROUNDS {
        for r in world.replica_ids().collect::<Vec<_>>() {
            let _ = world.generate(r, Op::Announce);
        }
        quiesce_checked(world, at, report);
    }
    for &t in &candidates {
        for r in world.replica_ids() {
            if world.may_delete(r, t, &none) != Ok(true) {
                report.record(Violation {
                    invariant: Invariant::I7,
                    location: at,
                    replica: Some(r),
                    objects: vec![t],
                    detail: format!("({t}, {none}) not stable after {LIVENESS_ROUNDS} announce rounds"),
                });
            }
        }
    }
    let mut deleted = 0;
    for &t in &candidates {
        if world.replica(r0).object(t).is_some_and(|o| o.deleted) {
            continue;
        }
        match world.generate(
            r0,
            Op::Delete {
                target: t,
                last: IgnoreSet::none(),
            },
        ) {
            Ok(_) => deleted += 1,
            Err(e) => report.record(Violation {
                invariant: Invariant::I7,
                location: at,
                replica: Some(r0),
                objects: vec![t],
                detail: format!("delete of unreferenced {t} refused: {e}"),
            }),
        }
    }
    quiesce_checked(world, at, report);
    deleted
}

/// Replays `trace` and checks every invariant: I1, I3 (state clause), I4
/// and stable⇒oracle after every step; then I5 and I6 after forced
/// quiescence; then I7 with bounded gossip; finally I2 and the trace-wide
/// clause of I3 over everything that was generated, including the
/// liveness deletions.
pub fn check_invariants(trace: &Trace) -> Result<InvariantReport, ReplayMismatch> {
    let mut report = InvariantReport::default();
    let mut multi = false;
    let mut stable_seen: BTreeSet<(ReplicaId, ObjectKey, LastRefs)> = BTreeSet::new();
    let mut world = replay_with(trace, |w, step, s| {
        let at = Location::Step(step);
        let r = s.replica();
        check_replica(w, r, at, &mut report);
        if check_refinement(w, at, &mut report) > 0 {
            for rep in w.replicas() {
                for q in rep.stability.queries.values().filter(|q| q.is_stable()) {
                    stable_seen.insert((rep.id, q.target, q.last.clone()));
                }
            }
        }
        multi = multi || has_multi_valued(w, r);
        if let TraceStep::Generate(g) = s {
            report.coverage.events += 1;
            match w.log().last() {
                Some(crate::model::world::Step::Generate { outcome: Ok(o), .. }) => {
                    if matches!(g.op, Op::Delete { .. }) {
                        report.coverage.deletes += 1;
                    }
                    if let Outcome::Invoked { target } = o {
                        if w.replica(r).object(*target).is_none_or(|t| t.deleted) {
                            report.record(Violation {
                                invariant: Invariant::I1,
                                location: at,
                                replica: Some(r),
                                objects: vec![*target],
                                detail: format!("{} returned deleted object {target}", g.op),
                            });
                        }
                    }
                }
                _ => report.coverage.failed_ops += 1,
            }
        }
    })?;
    report.coverage.traces = 1;
    report.coverage.steps = trace.len();
    report.coverage.multi_valued_traces = multi as usize;
    report.coverage.stable_queries = stable_seen.len();

    quiesce_checked(&mut world, Location::Quiescence, &mut report);
    check_quiesced(&world, Location::Quiescence, &mut report);
    report.coverage.liveness_deletes = check_liveness(&mut world, &mut report);
    check_quiesced(&world, Location::Liveness, &mut report);
    check_unique_ids(&world, &mut report);
    check_late_additions(&world, &mut report);
    Ok(report)
}

/// Replays `trace` to quiescence and compares every replica's objects.
/// Traces that do not replay count as not converging.
pub fn convergence_check(trace: &Trace) -> bool {
    let Ok(mut world) = super::replay::replay(trace) else {
        return false;
    };
    if world.quiesce().is_err() {
        return false;
    }
    let reps = world.replicas();
    reps.iter().all(|r| r.objects == reps[0].objects)
}
