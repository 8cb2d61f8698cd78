//! The inref: a reference listing kept by every target object.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::ids::{ObjectKey, RefId};

/// Set of reference ids handed to deletion checks. References listed here
/// are ignored when testing whether a target is unreferenced.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LastRefs(pub BTreeSet<RefId>);

impl LastRefs {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn contains(&self, id: RefId) -> bool {
        self.0.contains(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = RefId> + '_ {
        self.0.iter().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn union_with(&mut self, other: &LastRefs) {
        self.0.extend(other.0.iter().copied());
    }
}

impl FromIterator<RefId> for LastRefs {
    fn from_iter<I: IntoIterator<Item = RefId>>(iter: I) -> Self {
        LastRefs(iter.into_iter().collect())
    }
}

impl fmt::Display for LastRefs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, r) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{r}")?;
        }
        f.write_str("}")
    }
}

/// Two-set listing of `(source, ref)` pairs. A pair enters each set at
/// most once; `current = added \ removed`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InRef {
    added: BTreeSet<(ObjectKey, RefId)>,
    removed: BTreeSet<(ObjectKey, RefId)>,
}

impl InRef {
    pub fn add(&mut self, source: ObjectKey, id: RefId) {
        self.added.insert((source, id));
    }

    pub fn remove(&mut self, source: ObjectKey, id: RefId) {
        self.removed.insert((source, id));
    }

    pub fn current(&self) -> impl Iterator<Item = (ObjectKey, RefId)> + '_ {
        self.added.difference(&self.removed).copied()
    }

    pub fn contains(&self, source: ObjectKey, id: RefId) -> bool {
        self.added.contains(&(source, id)) && !self.removed.contains(&(source, id))
    }

    pub fn is_empty(&self) -> bool {
        self.current().next().is_none()
    }

    /// `current ⊆ last`.
    pub fn within(&self, last: &LastRefs) -> bool {
        self.current().all(|(_, id)| last.contains(id))
    }

    /// `removed ⊆ added`.
    pub fn is_well_formed(&self) -> bool {
        self.removed.is_subset(&self.added)
    }

    pub fn added(&self) -> &BTreeSet<(ObjectKey, RefId)> {
        &self.added
    }

    pub fn removed(&self) -> &BTreeSet<(ObjectKey, RefId)> {
        &self.removed
    }
}
