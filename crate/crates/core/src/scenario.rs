//! The two preset scenarios: concurrent assignments (`fig2`) and the
//! race between copying a reference and deleting its target (`fig1`).

use crate::harness::catalog::{self, A, B, R0, R1, X};
use crate::harness::check::{check_refinement, check_replica, InvariantReport, Location};
use crate::harness::explore::{explore_mode, ExploreError, Limits};
use crate::model::effector::CompositionMode;
use crate::model::ids::{ObjectKey, ReplicaId};
use crate::model::world::{Outcome, Step, World};
use crate::refs::ops::{IgnoreSet, Op, PreconditionFailure};

fn failures(report: &InvariantReport) -> String {
    report
        .violations()
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// A named boolean check of a scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub name: &'static str,
    pub world: World,
    pub checks: Vec<Check>,
    aliases: Vec<(ObjectKey, &'static str)>,
}

impl ScenarioRun {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn alias(&self, key: ObjectKey) -> Option<&'static str> {
        self.aliases.iter().find(|(k, _)| *k == key).map(|(_, a)| *a)
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

pub mod fig2 {
    use super::*;

    pub const R2: ReplicaId = ReplicaId(2);
    pub const A: ObjectKey = ObjectKey { origin: R0, seq: 1 };
    pub const B: ObjectKey = ObjectKey { origin: R0, seq: 2 };
    pub const C: ObjectKey = ObjectKey { origin: R0, seq: 3 };
    pub const X: ObjectKey = ObjectKey { origin: R0, seq: 4 };
    pub const Y: ObjectKey = ObjectKey { origin: R0, seq: 5 };

    pub const ALIASES: [(ObjectKey, &str); 5] = [(A, "A"), (B, "B"), (C, "C"), (X, "X"), (Y, "Y")];

    /// `init(A.a, X); init(C.c, Y)` then, on three replicas at once,
    /// `B.b := A.a || B.b := A.a || B.b := C.c`, then quiescence.
    pub fn world() -> World {
        let mut w = World::new(3, CompositionMode::PureCausal);
        for (key, root, attr) in [
            (A, true, "a"),
            (B, true, "b"),
            (C, true, "c"),
            (X, false, "x"),
            (Y, false, "y"),
        ] {
            w.generate(R0, Op::create(key, root, &[attr])).expect("fresh key");
        }
        w.generate(R0, Op::init(A, "a", X)).expect("init A.a");
        w.generate(R0, Op::init(C, "c", Y)).expect("init C.c");
        w.quiesce().expect("setup quiesces");
        w.generate(R0, Op::assign(B, "b", A, "a")).expect("assign at r0");
        w.generate(R1, Op::assign(B, "b", A, "a")).expect("assign at r1");
        w.generate(R2, Op::assign(B, "b", C, "c")).expect("assign at r2");
        w.quiesce().expect("quiesces");
        w
    }
}

/// Concurrent assignments. On every replica B.b ends with three entries
/// (two to X, one to Y) and the inrefs of X and Y list three and two sources.
pub fn fig2() -> ScenarioRun {
    use fig2::*;
    let world = fig2::world();
    let mut run = ScenarioRun {
        name: "fig2",
        world,
        checks: Vec::new(),
        aliases: ALIASES.to_vec(),
    };
    for r in run.world.replica_ids().collect::<Vec<_>>() {
        let rep = run.world.replica(r);
        let bb = &rep.objects[&B].attrs[&"b".into()];
        let to = |t| bb.references().filter(|x| x.target == t).count();
        let (entries, to_x, to_y) = (bb.len(), to(X), to(Y));
        let inref_x = rep.objects[&X].inref.current().count();
        let inref_y = rep.objects[&Y].inref.current().count();
        let a_single = matches!(rep.objects[&A].attrs[&"a".into()].single(), Some(Some(_)));
        let c_single = matches!(rep.objects[&C].attrs[&"c".into()].single(), Some(Some(_)));
        run.check(
            format!("{r}: B.b has 3 entries, 2 to X and 1 to Y"),
            entries == 3 && to_x == 2 && to_y == 1,
            format!("{entries} entries, {to_x} to X, {to_y} to Y"),
        );
        run.check(
            format!("{r}: inref(X) has 3 pairs"),
            inref_x == 3,
            format!("{inref_x} pairs"),
        );
        run.check(
            format!("{r}: inref(Y) has 2 pairs"),
            inref_y == 2,
            format!("{inref_y} pairs"),
        );
        run.check(format!("{r}: A.a and C.c are single-valued"), a_single && c_single, "");
    }
    let mut report = InvariantReport::default();
    for r in run.world.replica_ids() {
        check_replica(&run.world, r, Location::Quiescence, &mut report);
    }
    run.check("referential integrity", report.is_clean(), failures(&report));
    run
}

/// The copy/delete race, scripted: r0 drops `A.a` while r1, not having seen
/// that, copies it into `B.b`. Both gossip twice; r0 then tries to delete
/// X. Every state is checked for dangling references.
pub fn fig1_world() -> (World, Result<Outcome, PreconditionFailure>, InvariantReport) {
    let mut w = catalog::fig1()
        .setup_world(CompositionMode::PureCausal)
        .expect("catalog setup");
    let mut report = InvariantReport::default();
    fn step(w: &mut World, r: ReplicaId, op: Op, report: &mut InvariantReport) -> Result<Outcome, PreconditionFailure> {
        let out = w.generate(r, op);
        check_replica(w, r, Location::Trace, report);
        check_refinement(w, Location::Trace, report);
        out
    }
    step(&mut w, R0, Op::assign_null(A, "a"), &mut report).expect("r0 drops its reference");
    step(&mut w, R1, Op::assign(B, "b", A, "a"), &mut report).expect("r1 copies the reference");
    for _ in 0..2 {
        step(&mut w, R0, Op::Announce, &mut report).expect("announce");
        step(&mut w, R1, Op::Announce, &mut report).expect("announce");
        let _ = w.quiesce_with(|w, r| {
            check_replica(w, r, Location::Quiescence, &mut report);
            check_refinement(w, Location::Quiescence, &mut report);
        });
    }
    let delete = step(
        &mut w,
        R0,
        Op::Delete {
            target: X,
            last: IgnoreSet::none(),
        },
        &mut report,
    );
    (w, delete, report)
}

/// Exhaustive counts for the copy/delete race program.
#[derive(Debug, Clone, Default)]
pub struct Fig1Exploration {
    pub states: usize,
    pub terminal_states: usize,
    /// Terminal states in which the copy into `B.b` succeeded.
    pub copied: usize,
    /// Terminal states in which the delete of X succeeded.
    pub deleted: usize,
    /// Reached states in which both succeeded (must be zero).
    pub both: usize,
    pub report: InvariantReport,
}

fn succeeded(world: &World, pred: impl Fn(&Op) -> bool) -> bool {
    world
        .log()
        .iter()
        .any(|s| matches!(s, Step::Generate { op, outcome: Ok(Outcome::Event { .. }), .. } if pred(op)))
}

pub fn fig1_explore(mode: CompositionMode) -> Result<Fig1Exploration, ExploreError> {
    let mut out = Fig1Exploration::default();
    let (mut copied, mut deleted, mut both) = (0, 0, 0);
    let e = explore_mode(&catalog::fig1(), Limits::new(catalog::fig1().events.len()), mode, |v| {
        let c = succeeded(v.world, |op| matches!(op, Op::Assign { .. }));
        let d = succeeded(v.world, |op| matches!(op, Op::Delete { .. }));
        if c && d {
            both += 1;
        }
        if v.terminal {
            copied += c as usize;
            deleted += d as usize;
        }
    })?;
    out.states = e.states;
    out.terminal_states = e.terminal_states;
    out.report = e.report;
    out.copied = copied;
    out.deleted = deleted;
    out.both = both;
    Ok(out)
}

/// The copy/delete race. The scripted run must refuse the delete, and no
/// interleaving of the program may let the delete succeed alongside the copy.
pub fn fig1() -> ScenarioRun {
    let (world, delete, report) = fig1_world();
    let mut run = ScenarioRun {
        name: "fig1",
        world,
        checks: Vec::new(),
        aliases: vec![(A, "A"), (B, "B"), (X, "X"), (catalog::Y, "Y")],
    };
    run.check(
        "scripted race: delete(X) refused",
        matches!(delete, Err(PreconditionFailure::NotUnreachable { .. })),
        format!("{delete:?}"),
    );
    let kept = run
        .world
        .replicas()
        .iter()
        .all(|r| !r.objects[&X].deleted && r.objects[&B].outgoing().any(|(_, x)| x.target == X));
    run.check("scripted race: X kept alive by B.b everywhere", kept, "");
    run.check(
        "scripted race: no dangling reference",
        report.is_clean(),
        failures(&report),
    );
    for mode in [CompositionMode::PureCausal, CompositionMode::Atomic] {
        match fig1_explore(mode) {
            Ok(e) => {
                run.check(
                    format!("{mode}: delete refused in every interleaving with the copy"),
                    e.both == 0,
                    format!(
                        "{} states, {} terminal, copy in {}, delete in {}, both in {}",
                        e.states, e.terminal_states, e.copied, e.deleted, e.both
                    ),
                );
                run.check(
                    format!("{mode}: no invariant violation in any interleaving"),
                    e.report.is_clean(),
                    failures(&e.report),
                );
            }
            Err(err) => run.check(format!("{mode}: exploration"), false, err.to_string()),
        }
    }
    run
}
