use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::inref::{InRef, LastRefs};
use super::outref::{OutRef, Reference};
use crate::model::ids::{Attr, Dot, ObjectKey};

/// Replica-local state of one object: its inref, one outref per attribute,
/// and the deletion tombstone.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub key: ObjectKey,
    pub root: bool,
    pub deleted: bool,
    pub inref: InRef,
    pub attrs: BTreeMap<Attr, OutRef>,
    #[serde(default, skip_serializing_if = "LastRefs::is_empty")]
    pub last_refs_at_delete: LastRefs,
}

impl ObjectRecord {
    pub fn new(key: ObjectKey, root: bool, attrs: impl IntoIterator<Item = (Attr, Dot)>) -> Self {
        Self {
            key,
            root,
            deleted: false,
            inref: InRef::default(),
            attrs: attrs.into_iter().map(|(a, dot)| (a, OutRef::null(dot))).collect(),
            last_refs_at_delete: LastRefs::empty(),
        }
    }

    /// Every non-NULL entry held by this object, with its attribute.
    pub fn outgoing(&self) -> impl Iterator<Item = (&Attr, Reference)> + '_ {
        self.attrs
            .iter()
            .flat_map(|(a, out)| out.references().map(move |r| (a, r)))
    }

    /// Ids of references this object holds to itself.
    pub fn self_refs(&self) -> LastRefs {
        self.outgoing()
            .filter(|(_, r)| r.target == self.key)
            .map(|(_, r)| r.id)
            .collect()
    }

    /// Some listed source other than the object itself.
    pub fn has_external_source(&self) -> bool {
        self.inref.current().any(|(s, _)| s != self.key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ids::{RefId, ReplicaId};

    #[test]
    fn fresh_object_has_null_attrs() {
        let key = ObjectKey::new(ReplicaId(0), 1);
        let dot = Dot {
            replica: ReplicaId(0),
            counter: 1,
        };
        let obj = ObjectRecord::new(key, true, [(Attr::from("a"), dot)]);
        assert_eq!(obj.attrs[&Attr::from("a")].single(), Some(None));
        assert!(obj.inref.is_empty());
        assert_eq!(obj.outgoing().count(), 0);
    }

    #[test]
    fn self_refs_only_lists_self_targets() {
        let key = ObjectKey::new(ReplicaId(0), 1);
        let other = ObjectKey::new(ReplicaId(0), 2);
        let d = |c| Dot {
            replica: ReplicaId(0),
            counter: c,
        };
        let id = |c| RefId {
            origin: ReplicaId(0),
            counter: c,
        };
        let mut obj = ObjectRecord::new(key, false, [(Attr::from("a"), d(1)), (Attr::from("b"), d(2))]);
        let a = obj.attrs.get_mut(&Attr::from("a")).unwrap();
        a.apply_write(Some(Reference { target: key, id: id(7) }), d(3), &[d(1)].into());
        let b = obj.attrs.get_mut(&Attr::from("b")).unwrap();
        b.apply_write(
            Some(Reference {
                target: other,
                id: id(8),
            }),
            d(4),
            &[d(2)].into(),
        );
        assert_eq!(obj.self_refs(), [id(7)].into_iter().collect());
        obj.inref.add(key, id(7));
        assert!(!obj.has_external_source());
        obj.inref.add(other, id(9));
        assert!(obj.has_external_source());
    }
}
