//! The outref: a multi-value register of reference entries.
//!
//! A write removes exactly the entries its generator observed and adds one
//! new entry. Entries written concurrently (unseen by the writer) survive,
//! so concurrent assignments reconcile to the union of their values.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::ids::{Dot, ObjectKey, RefId};

/// A non-NULL register value: the target and the unique reference id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Reference {
    pub target: ObjectKey,
    pub id: RefId,
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.target, self.id)
    }
}

/// One register entry. `value == None` is NULL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OutRefEntry {
    pub value: Option<Reference>,
    pub dot: Dot,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutRef {
    entries: BTreeMap<Dot, Option<Reference>>,
}

impl OutRef {
    /// A register holding a single NULL written by `dot`.
    pub fn null(dot: Dot) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(dot, None);
        Self { entries }
    }

    pub fn entries(&self) -> impl Iterator<Item = OutRefEntry> + '_ {
        self.entries.iter().map(|(&dot, &value)| OutRefEntry { value, dot })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The value when exactly one entry survives.
    pub fn single(&self) -> Option<Option<Reference>> {
        if self.entries.len() == 1 {
            self.entries.values().next().copied()
        } else {
            None
        }
    }

    pub fn is_multi_valued(&self) -> bool {
        self.entries.len() > 1
    }

    pub fn references(&self) -> impl Iterator<Item = Reference> + '_ {
        self.entries.values().filter_map(|v| *v)
    }

    pub fn dots(&self) -> BTreeSet<Dot> {
        self.entries.keys().copied().collect()
    }

    /// Applies a write: removes entries whose dot is in `observed`, inserts
    /// `value` under `dot`, and returns the removed entries.
    pub fn apply_write(&mut self, value: Option<Reference>, dot: Dot, observed: &BTreeSet<Dot>) -> Vec<OutRefEntry> {
        let mut overwritten = Vec::new();
        self.entries.retain(|&d, &mut v| {
            if observed.contains(&d) {
                overwritten.push(OutRefEntry { value: v, dot: d });
                false
            } else {
                true
            }
        });
        self.entries.insert(dot, value);
        overwritten
    }
}

/// A local write: the writer observes every current entry, so all of them
/// are overwritten. Returns the new register and the overwritten entries.
pub fn mvr_assign(out: &OutRef, value: Option<Reference>, dot: Dot) -> (OutRef, Vec<OutRefEntry>) {
    debug_assert!(!out.entries.contains_key(&dot), "write dot reused");
    let mut next = out.clone();
    let observed = out.dots();
    let overwritten = next.apply_write(value, dot, &observed);
    (next, overwritten)
}

impl fmt::Display for OutRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, v) in self.entries.values().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match v {
                Some(r) => write!(f, "{r}")?,
                None => f.write_str("null")?,
            }
        }
        f.write_str("}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ids::ReplicaId;

    fn dot(r: u16, c: u32) -> Dot {
        Dot {
            replica: ReplicaId(r),
            counter: c,
        }
    }

    fn reference(t: u32, id: u32) -> Option<Reference> {
        Some(Reference {
            target: ObjectKey::new(ReplicaId(0), t),
            id: RefId {
                origin: ReplicaId(0),
                counter: id,
            },
        })
    }

    #[test]
    fn sequential_overwrite_replaces() {
        let reg = OutRef::null(dot(0, 1));
        let (reg, gone) = mvr_assign(&reg, reference(1, 1), dot(0, 2));
        assert_eq!(
            gone,
            vec![OutRefEntry {
                value: None,
                dot: dot(0, 1)
            }]
        );
        let (reg, gone) = mvr_assign(&reg, reference(2, 2), dot(0, 3));
        assert_eq!(gone.len(), 1);
        assert_eq!(gone[0].value, reference(1, 1));
        assert_eq!(reg.single(), Some(reference(2, 2)));
    }

    #[test]
    fn concurrent_writes_both_survive() {
        let base = OutRef::null(dot(0, 1));
        let observed = base.dots();
        let mut a = base.clone();
        a.apply_write(reference(1, 1), dot(0, 2), &observed);
        a.apply_write(reference(2, 2), dot(1, 1), &observed);
        let mut b = base.clone();
        b.apply_write(reference(2, 2), dot(1, 1), &observed);
        b.apply_write(reference(1, 1), dot(0, 2), &observed);
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert!(a.is_multi_valued());
        assert_eq!(a.single(), None);
    }

    #[test]
    fn three_way_concurrency_keeps_three() {
        let base = OutRef::null(dot(0, 1));
        let observed = base.dots();
        let mut reg = base.clone();
        for (i, r) in [0u16, 1, 2].into_iter().enumerate() {
            reg.apply_write(reference(i as u32, i as u32), dot(r, 5), &observed);
        }
        assert_eq!(reg.len(), 3);
        assert_eq!(reg.references().count(), 3);
    }

    #[test]
    fn null_write_counts_as_a_value() {
        let reg = OutRef::null(dot(0, 1));
        let (reg, gone) = mvr_assign(&reg, None, dot(0, 2));
        assert_eq!(gone.len(), 1);
        assert_eq!(reg.single(), Some(None));
        assert_eq!(reg.to_string(), "{null}");
    }
}
