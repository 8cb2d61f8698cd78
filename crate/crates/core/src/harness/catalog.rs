//! Fixed small programs for the exhaustive explorer.
//!
//! Every program starts from the same setup on two replicas: roots `A`
//! (created at r0) and `B` (at r1), plus non-roots `X` and `Y` created at
//! r0. `A.a` refers to `X`; nothing refers to `Y`. Deletion queries
//! `(X, ∅)` and `(Y, ∅)` are registered and each replica has announced
//! once, so one more round from each can make `Y` deletable.

use rayon::prelude::*;

use super::check::InvariantReport;
use super::explore::{exhaustive_explore, ExploreError, ExploreSummary, Limits, Program};
use crate::model::ids::{ObjectKey, ReplicaId};
use crate::refs::ops::{IgnoreSet, Op};

pub const R0: ReplicaId = ReplicaId(0);
pub const R1: ReplicaId = ReplicaId(1);
pub const A: ObjectKey = ObjectKey { origin: R0, seq: 1 };
pub const B: ObjectKey = ObjectKey { origin: R1, seq: 1 };
pub const X: ObjectKey = ObjectKey { origin: R0, seq: 2 };
pub const Y: ObjectKey = ObjectKey { origin: R0, seq: 3 };

/// Display name of the catalog objects, for graph output.
pub fn alias(key: ObjectKey) -> Option<&'static str> {
    match key {
        A => Some("A"),
        B => Some("B"),
        X => Some("X"),
        Y => Some("Y"),
        _ => None,
    }
}

fn delete(target: ObjectKey) -> Op {
    Op::Delete {
        target,
        last: IgnoreSet::none(),
    }
}

pub fn setup() -> Vec<(ReplicaId, Op)> {
    vec![
        (R0, Op::create(A, true, &["a", "b"])),
        (R1, Op::create(B, true, &["a", "b"])),
        (R0, Op::create(X, false, &["a", "b"])),
        (R0, Op::create(Y, false, &["a", "b"])),
        (R0, Op::init(A, "a", X)),
        (
            R0,
            Op::MayDelete {
                target: X,
                last: IgnoreSet::none(),
            },
        ),
        (
            R0,
            Op::MayDelete {
                target: Y,
                last: IgnoreSet::none(),
            },
        ),
        (R0, Op::Announce),
        (R1, Op::Announce),
    ]
}

/// The operations a catalog program draws from, with short names.
pub fn operations() -> Vec<(&'static str, Op)> {
    vec![
        ("B.b:=A.a", Op::assign(B, "b", A, "a")),
        ("A.a:=null", Op::assign_null(A, "a")),
        ("B.b:=null", Op::assign_null(B, "b")),
        ("announce", Op::Announce),
        ("delete(X)", delete(X)),
        ("delete(Y)", delete(Y)),
    ]
}

/// Every program of at most `max_events` catalog operations over the two
/// replicas. Only the per-replica order matters to the explorer, so each
/// program is a pair of operation sequences.
pub fn programs(max_events: usize) -> Vec<Program> {
    let ops: Vec<Op> = operations().into_iter().map(|(_, op)| op).collect();
    let mut out = Vec::new();
    for total in 0..=max_events {
        for left in 0..=total {
            for a in sequences(&ops, left) {
                for b in sequences(&ops, total - left) {
                    let events = a
                        .iter()
                        .map(|op| (R0, op.clone()))
                        .chain(b.iter().map(|op| (R1, op.clone())))
                        .collect();
                    out.push(Program {
                        replicas: 2,
                        setup: setup(),
                        events,
                    });
                }
            }
        }
    }
    out
}

fn sequences(ops: &[Op], len: usize) -> Vec<Vec<Op>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<Op>| {
                ops.iter().map(move |op| {
                    let mut next = prefix.clone();
                    next.push(op.clone());
                    next
                })
            })
            .collect();
    }
    out
}

/// The copy/delete race: r0 drops its reference to `X` and tries to
/// delete it after two gossip rounds, while r1 concurrently copies the
/// reference into `B.b` and gossips too.
pub fn fig1() -> Program {
    Program {
        replicas: 2,
        setup: setup(),
        events: vec![
            (R0, Op::assign_null(A, "a")),
            (R0, Op::Announce),
            (R0, Op::Announce),
            (R0, delete(X)),
            (R1, Op::assign(B, "b", A, "a")),
            (R1, Op::Announce),
            (R1, Op::Announce),
        ],
    }
}

/// Number of programs `programs(max_events)` yields.
pub fn program_count(max_events: usize) -> usize {
    let n = operations().len();
    (0..=max_events).map(|k| (k + 1) * n.pow(k as u32)).sum()
}

/// Totals of exploring every catalog program up to some size.
#[derive(Debug, Clone, Default)]
pub struct CatalogSummary {
    pub programs: usize,
    pub causal_states: usize,
    pub atomic_states: usize,
    pub terminal_states: usize,
    pub report: InvariantReport,
}

/// Explores every catalog program of at most `max_events` operations in
/// both modes, in parallel. Reports are merged in program order.
pub fn explore_all(max_events: usize, limits: Limits) -> Result<CatalogSummary, ExploreError> {
    let results: Vec<Result<ExploreSummary, ExploreError>> = programs(max_events)
        .par_iter()
        .map(|p| exhaustive_explore(p, limits))
        .collect();
    let mut out = CatalogSummary::default();
    for r in results {
        let s = r?;
        out.programs += 1;
        out.causal_states += s.causal_states;
        out.atomic_states += s.atomic_states;
        out.terminal_states += s.terminal_states;
        out.report.merge(s.report);
    }
    Ok(out)
}
