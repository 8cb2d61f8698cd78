//! Vector clocks and per-replica delivery progress.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ids::{EventId, ReplicaId};

/// Map from replica to event count. Absent entries read as zero and are
/// never stored, so structural equality is clock equality.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VectorClock(BTreeMap<ReplicaId, u64>);

impl VectorClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, replica: ReplicaId) -> u64 {
        self.0.get(&replica).copied().unwrap_or(0)
    }

    pub fn set(&mut self, replica: ReplicaId, value: u64) {
        if value == 0 {
            self.0.remove(&replica);
        } else {
            self.0.insert(replica, value);
        }
    }

    pub fn increment(&mut self, replica: ReplicaId) -> u64 {
        let next = self.get(replica) + 1;
        self.set(replica, next);
        next
    }

    pub fn merge(&mut self, other: &VectorClock) {
        for (&r, &v) in &other.0 {
            if v > self.get(r) {
                self.set(r, v);
            }
        }
    }

    /// Pointwise minimum.
    pub fn meet(&self, other: &VectorClock) -> VectorClock {
        let mut out = VectorClock::new();
        for (&r, &v) in &self.0 {
            out.set(r, v.min(other.get(r)));
        }
        out
    }

    pub fn le(&self, other: &VectorClock) -> bool {
        self.0.iter().all(|(&r, &v)| v <= other.get(r))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ReplicaId, u64)> + '_ {
        self.0.iter().map(|(&r, &v)| (r, v))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }
}

impl PartialOrd for VectorClock {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self.le(other), other.le(self)) {
            (true, true) => Some(Ordering::Equal),
            (true, false) => Some(Ordering::Less),
            (false, true) => Some(Ordering::Greater),
            (false, false) => None,
        }
    }
}

impl fmt::Display for VectorClock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, (r, v)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{r}:{v}")?;
        }
        f.write_str("]")
    }
}

/// How far a replica has applied the events of one origin: `events` whole
/// events, plus the first `prefix` messages of event `events + 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub events: u64,
    pub prefix: u32,
}

/// Causal progress of a replica: a vector clock of fully applied events
/// plus, per origin, the applied prefix of the next (partially delivered)
/// event chain.
///
/// Every origin applies its own chains atomically, so a replica can only
/// hold one partial chain per origin: the one right after its last fully
/// applied event from that origin.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Progress {
    pub clock: VectorClock,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub partial: BTreeMap<ReplicaId, u32>,
}

impl Progress {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn position(&self, origin: ReplicaId) -> Position {
        Position {
            events: self.clock.get(origin),
            prefix: self.partial.get(&origin).copied().unwrap_or(0),
        }
    }

    /// Number of messages of `event` covered, given its chain length.
    pub fn applied_prefix(&self, event: EventId, chain_len: u32) -> u32 {
        let pos = self.position(event.replica);
        if event.seq <= pos.events {
            chain_len
        } else if event.seq == pos.events + 1 {
            pos.prefix
        } else {
            0
        }
    }

    /// Records that message `index` of `event` (of `chain_len` messages)
    /// has been applied. The caller guarantees it was the next one.
    pub fn advance(&mut self, event: EventId, index: u32, chain_len: u32) {
        debug_assert_eq!(self.applied_prefix(event, chain_len), index);
        if index + 1 >= chain_len {
            self.clock.set(event.replica, event.seq);
            self.partial.remove(&event.replica);
        } else {
            self.partial.insert(event.replica, index + 1);
        }
    }

    /// True when everything `other` has applied is applied here too.
    pub fn covers(&self, other: &Progress) -> bool {
        let origins = other.clock.iter().map(|(r, _)| r).chain(other.partial.keys().copied());
        for origin in origins {
            if self.position(origin) < other.position(origin) {
                return false;
            }
        }
        true
    }

    pub fn has_partial(&self) -> bool {
        !self.partial.is_empty()
    }
}

impl fmt::Display for Progress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.clock)?;
        for (r, p) in &self.partial {
            write!(f, "+{r}:{}/{p}", self.clock.get(*r) + 1)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vc(entries: &[(u16, u64)]) -> VectorClock {
        let mut c = VectorClock::new();
        for &(r, v) in entries {
            c.set(ReplicaId(r), v);
        }
        c
    }

    #[test]
    fn zero_entries_are_not_stored() {
        let mut c = vc(&[(0, 1)]);
        c.set(ReplicaId(0), 0);
        assert_eq!(c, VectorClock::new());
        assert!(c.is_zero());
    }

    #[test]
    fn concurrent_clocks_are_incomparable() {
        let a = vc(&[(0, 2), (1, 1)]);
        let b = vc(&[(0, 1), (1, 2)]);
        assert_eq!(a.partial_cmp(&b), None);
        assert_eq!(a.meet(&b), vc(&[(0, 1), (1, 1)]));
    }

    #[test]
    fn progress_tracks_partial_chain() {
        let e = EventId {
            replica: ReplicaId(1),
            seq: 1,
        };
        let mut p = Progress::new();
        assert_eq!(p.applied_prefix(e, 3), 0);
        p.advance(e, 0, 3);
        p.advance(e, 1, 3);
        assert_eq!(p.applied_prefix(e, 3), 2);
        assert!(p.has_partial());
        p.advance(e, 2, 3);
        assert_eq!(p.applied_prefix(e, 3), 3);
        assert!(!p.has_partial());
        assert_eq!(p.clock.get(ReplicaId(1)), 1);
    }

    #[test]
    fn covers_compares_positions() {
        let e = EventId {
            replica: ReplicaId(0),
            seq: 1,
        };
        let mut full = Progress::new();
        full.advance(e, 0, 1);
        let mut half = Progress::new();
        let e2 = EventId {
            replica: ReplicaId(0),
            seq: 2,
        };
        half.advance(e, 0, 1);
        half.advance(e2, 0, 2);
        assert!(half.covers(&full));
        assert!(!full.covers(&half));
        assert!(full.covers(&Progress::new()));
    }

    proptest! {
        #[test]
        fn merge_is_least_upper_bound(a in proptest::collection::vec(0u64..5, 3), b in proptest::collection::vec(0u64..5, 3)) {
            let ca = vc(&[(0, a[0]), (1, a[1]), (2, a[2])]);
            let cb = vc(&[(0, b[0]), (1, b[1]), (2, b[2])]);
            let mut m = ca.clone();
            m.merge(&cb);
            prop_assert!(ca.le(&m) && cb.le(&m));
            for r in 0..3u16 {
                prop_assert_eq!(m.get(ReplicaId(r)), ca.get(ReplicaId(r)).max(cb.get(ReplicaId(r))));
            }
            let g = ca.meet(&cb);
            prop_assert!(g.le(&ca) && g.le(&cb));
        }
    }
}
