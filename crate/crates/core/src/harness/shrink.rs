//! Greedy trace shrinking.

use thiserror::Error;

use super::check::{check_invariants, Invariant};
use super::replay::{reexecute, ReplayMismatch};
use super::trace::{Trace, TraceStep};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShrinkError {
    #[error("trace does not violate any invariant")]
    NotFailing,
    #[error(transparent)]
    Replay(#[from] ReplayMismatch),
}

/// The invariant a shrink run preserves: the first one `trace` violates.
pub fn failing_invariant(trace: &Trace) -> Result<Option<Invariant>, ReplayMismatch> {
    Ok(check_invariants(trace)?.failed_invariants().first().copied())
}

/// Shrinks a failing trace while it keeps failing the same invariant:
/// first drops generator steps one at a time, then delivery steps. Every
/// candidate is re-executed, so the result replays strictly.
pub fn shrink(failing: &Trace) -> Result<Trace, ShrinkError> {
    let target = failing_invariant(failing)?.ok_or(ShrinkError::NotFailing)?;
    Ok(shrink_while(failing, |t| {
        check_invariants(t).is_ok_and(|r| !r.passed(target))
    }))
}

/// Greedy shrinking against an arbitrary predicate. `keep` should hold for
/// `trace`; the result is never longer than `trace` and satisfies `keep`
/// whenever `trace` does.
pub fn shrink_while(trace: &Trace, keep: impl Fn(&Trace) -> bool) -> Trace {
    let mut best = trace.clone();
    let normalized = reexecute(trace);
    if normalized.len() <= best.len() && keep(&normalized) {
        best = normalized;
    }
    for pass in [Pass::Events, Pass::Deliveries] {
        loop {
            let mut improved = false;
            let mut i = best.steps.len();
            while i > 0 {
                i -= 1;
                if i >= best.steps.len() || !pass.removes(&best.steps[i]) {
                    continue;
                }
                let mut candidate = best.clone();
                candidate.steps.remove(i);
                let candidate = reexecute(&candidate);
                if candidate.len() < best.len() && keep(&candidate) {
                    best = candidate;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
    }
    best
}

#[derive(Clone, Copy)]
enum Pass {
    Events,
    Deliveries,
}

impl Pass {
    fn removes(self, step: &TraceStep) -> bool {
        matches!(
            (self, step),
            (Pass::Events, TraceStep::Generate(_)) | (Pass::Deliveries, TraceStep::Deliver { .. })
        )
    }
}
