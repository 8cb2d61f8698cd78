//! Application-level operations on references and their generators.
//!
//! A generator reads the origin replica's state, checks preconditions and
//! emits an effector chain. It never mutates shared state. Chains follow
//! two ordering rules:
//!
//! * creating or copying a reference adds to the target's inref first and
//!   only then sets the source outref;
//! * retiring a reference clears the source outref first and only then
//!   removes the pair from the target's inref.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::inref::LastRefs;
use super::object::ObjectRecord;
use super::outref::{OutRefEntry, Reference};
use crate::model::effector::{Effector, Payload};
use crate::model::ids::{Attr, Dot, ObjectKey, RefId, ReplicaId};

/// Which references a deletion check ignores.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IgnoreSet {
    /// The references the target holds to itself, read at the origin.
    SelfCycle,
    Explicit(LastRefs),
}

impl IgnoreSet {
    pub fn none() -> Self {
        IgnoreSet::Explicit(LastRefs::empty())
    }

    pub fn resolve(&self, target: &ObjectRecord) -> LastRefs {
        match self {
            IgnoreSet::SelfCycle => target.self_refs(),
            IgnoreSet::Explicit(l) => l.clone(),
        }
    }
}

/// An operation descriptor consumed by `World::generate`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Op {
    Create {
        key: ObjectKey,
        root: bool,
        attrs: Vec<Attr>,
    },
    Init {
        source: ObjectKey,
        attr: Attr,
        target: ObjectKey,
    },
    Assign {
        dst: ObjectKey,
        dst_attr: Attr,
        src: ObjectKey,
        src_attr: Attr,
    },
    AssignNull {
        source: ObjectKey,
        attr: Attr,
    },
    Invoke {
        source: ObjectKey,
        attr: Attr,
    },
    /// Reads the deletion query status, registering the query if needed.
    MayDelete {
        target: ObjectKey,
        last: IgnoreSet,
    },
    Delete {
        target: ObjectKey,
        last: IgnoreSet,
    },
    Announce,
}

impl Op {
    pub fn create(key: ObjectKey, root: bool, attrs: &[&str]) -> Op {
        Op::Create {
            key,
            root,
            attrs: attrs.iter().map(|a| Attr::from(*a)).collect(),
        }
    }

    pub fn init(source: ObjectKey, attr: &str, target: ObjectKey) -> Op {
        Op::Init {
            source,
            attr: attr.into(),
            target,
        }
    }

    pub fn assign(dst: ObjectKey, dst_attr: &str, src: ObjectKey, src_attr: &str) -> Op {
        Op::Assign {
            dst,
            dst_attr: dst_attr.into(),
            src,
            src_attr: src_attr.into(),
        }
    }

    pub fn assign_null(source: ObjectKey, attr: &str) -> Op {
        Op::AssignNull {
            source,
            attr: attr.into(),
        }
    }

    pub fn invoke(source: ObjectKey, attr: &str) -> Op {
        Op::Invoke {
            source,
            attr: attr.into(),
        }
    }

    pub fn may_delete(target: ObjectKey) -> Op {
        Op::MayDelete {
            target,
            last: IgnoreSet::SelfCycle,
        }
    }

    pub fn delete(target: ObjectKey) -> Op {
        Op::Delete {
            target,
            last: IgnoreSet::SelfCycle,
        }
    }

    /// Short kind name, used for statistics and operation mixes.
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Create { .. } => "create",
            Op::Init { .. } => "init",
            Op::Assign { .. } => "assign",
            Op::AssignNull { .. } => "assign-null",
            Op::Invoke { .. } => "invoke",
            Op::MayDelete { .. } => "may-delete",
            Op::Delete { .. } => "delete",
            Op::Announce => "announce",
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let last = |l: &IgnoreSet| match l {
            IgnoreSet::SelfCycle => "self".to_string(),
            IgnoreSet::Explicit(l) => l.to_string(),
        };
        match self {
            Op::Create { key, root, attrs } => {
                write!(f, "create {key}{}", if *root { " root" } else { "" })?;
                for a in attrs {
                    write!(f, " {a}")?;
                }
                Ok(())
            }
            Op::Init { source, attr, target } => write!(f, "init({source}.{attr}, {target})"),
            Op::Assign {
                dst,
                dst_attr,
                src,
                src_attr,
            } => {
                write!(f, "{dst}.{dst_attr} := {src}.{src_attr}")
            }
            Op::AssignNull { source, attr } => write!(f, "{source}.{attr} := null"),
            Op::Invoke { source, attr } => write!(f, "invoke {source}.{attr}"),
            Op::MayDelete { target, last: l } => write!(f, "may_delete({target}, {})", last(l)),
            Op::Delete { target, last: l } => write!(f, "delete({target}, {})", last(l)),
            Op::Announce => f.write_str("announce"),
        }
    }
}

/// Why a generator refused an operation. The whole operation fails.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Error, Serialize, Deserialize)]
#[serde(tag = "failure", rename_all = "kebab-case")]
pub enum PreconditionFailure {
    #[error("object {key} already exists")]
    KeyInUse { key: ObjectKey },
    #[error("unknown object {key}")]
    UnknownObject { key: ObjectKey },
    #[error("object {key} has no attribute {attr}")]
    UnknownAttribute { key: ObjectKey, attr: Attr },
    #[error("object {key} is deleted")]
    DeletedObject { key: ObjectKey },
    #[error("object {key} is not reachable from this replica")]
    Unreachable { key: ObjectKey },
    #[error("{key}.{attr} is multi-valued")]
    MultiValued { key: ObjectKey, attr: Attr },
    #[error("{key}.{attr} is null")]
    NullSource { key: ObjectKey, attr: Attr },
    #[error("{key}.{attr} is a null reference")]
    NullReference { key: ObjectKey, attr: Attr },
    #[error("object {key} is not stably unreachable")]
    NotUnreachable { key: ObjectKey },
    #[error("object {key} is a root")]
    RootObject { key: ObjectKey },
    #[error("object {key} is already deleted")]
    AlreadyDeleted { key: ObjectKey },
}

/// Read-only view of the origin replica used by generators.
pub struct Origin<'a> {
    pub replica: ReplicaId,
    pub objects: &'a BTreeMap<ObjectKey, ObjectRecord>,
    pub handles: &'a BTreeSet<ObjectKey>,
    pub next_ref: u32,
    pub next_dot: u32,
}

/// Side effects on the origin's private (non-replicated) state that take
/// place only if the operation succeeds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LocalEffect {
    None,
    GrantHandle(ObjectKey),
    ReleaseHandle(ObjectKey),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub chain: Vec<Effector>,
    pub local: LocalEffect,
    pub refs_used: u32,
    pub dots_used: u32,
}

impl<'a> Origin<'a> {
    fn object(&self, key: ObjectKey) -> Result<&'a ObjectRecord, PreconditionFailure> {
        self.objects.get(&key).ok_or(PreconditionFailure::UnknownObject { key })
    }

    fn live(&self, key: ObjectKey) -> Result<&'a ObjectRecord, PreconditionFailure> {
        let obj = self.object(key)?;
        if obj.deleted {
            return Err(PreconditionFailure::DeletedObject { key });
        }
        Ok(obj)
    }

    /// Live and reachable from here: a root, held through this replica's
    /// creation handle, or listed by a source other than itself.
    fn accessible(&self, key: ObjectKey) -> Result<&'a ObjectRecord, PreconditionFailure> {
        let obj = self.live(key)?;
        if !is_reachable(obj, self.handles) {
            return Err(PreconditionFailure::Unreachable { key });
        }
        Ok(obj)
    }

    fn attr(&self, obj: &'a ObjectRecord, attr: &Attr) -> Result<&'a super::outref::OutRef, PreconditionFailure> {
        obj.attrs
            .get(attr)
            .ok_or_else(|| PreconditionFailure::UnknownAttribute {
                key: obj.key,
                attr: attr.clone(),
            })
    }

    fn ref_id(&self, n: u32) -> RefId {
        RefId {
            origin: self.replica,
            counter: self.next_ref + n,
        }
    }

    fn dot(&self, n: u32) -> Dot {
        Dot {
            replica: self.replica,
            counter: self.next_dot + n,
        }
    }

    /// Plans the generator of a replicated operation. `stable` reports the
    /// origin's deletion query status for `(target, last)`.
    pub fn plan(&self, op: &Op, stable: impl Fn(ObjectKey, &LastRefs) -> bool) -> Result<Plan, PreconditionFailure> {
        match op {
            Op::Create { key, root, attrs } => {
                if self.objects.contains_key(key) {
                    return Err(PreconditionFailure::KeyInUse { key: *key });
                }
                let mut seen = BTreeSet::new();
                let attrs: Vec<(Attr, Dot)> = attrs
                    .iter()
                    .filter(|a| seen.insert((*a).clone()))
                    .enumerate()
                    .map(|(i, a)| (a.clone(), self.dot(i as u32)))
                    .collect();
                let dots_used = attrs.len() as u32;
                Ok(Plan {
                    chain: vec![Effector {
                        object: *key,
                        payload: Payload::CreateObject { root: *root, attrs },
                    }],
                    local: if *root {
                        LocalEffect::None
                    } else {
                        LocalEffect::GrantHandle(*key)
                    },
                    refs_used: 0,
                    dots_used,
                })
            }
            Op::Init { source, attr, target } => {
                let src = self.accessible(*source)?;
                let out = self.attr(src, attr)?;
                self.accessible(*target)?;
                Ok(self.reference_chain(*source, attr, out, *target))
            }
            Op::Assign {
                dst,
                dst_attr,
                src,
                src_attr,
            } => {
                let from = self.accessible(*src)?;
                let from_out = self.attr(from, src_attr)?;
                let target = match from_out.single() {
                    None => {
                        return Err(PreconditionFailure::MultiValued {
                            key: *src,
                            attr: src_attr.clone(),
                        })
                    }
                    Some(None) => {
                        return Err(PreconditionFailure::NullSource {
                            key: *src,
                            attr: src_attr.clone(),
                        })
                    }
                    Some(Some(r)) => r.target,
                };
                let to = self.accessible(*dst)?;
                let to_out = self.attr(to, dst_attr)?;
                // Held references never point at deleted objects; checked
                // anyway so a broken invariant fails loudly here.
                self.live(target)?;
                Ok(self.reference_chain(*dst, dst_attr, to_out, target))
            }
            Op::AssignNull { source, attr } => {
                let obj = self.accessible(*source)?;
                let out = self.attr(obj, attr)?;
                let mut chain = Vec::new();
                retire(&mut chain, *source, attr, out, self.dot(0));
                Ok(Plan {
                    chain,
                    local: LocalEffect::None,
                    refs_used: 0,
                    dots_used: 1,
                })
            }
            Op::Delete { target, last } => {
                let obj = self.object(*target)?;
                if obj.root {
                    return Err(PreconditionFailure::RootObject { key: *target });
                }
                if obj.deleted {
                    return Err(PreconditionFailure::AlreadyDeleted { key: *target });
                }
                let last = last.resolve(obj);
                if !stable(*target, &last) {
                    return Err(PreconditionFailure::NotUnreachable { key: *target });
                }
                let mut chain = Vec::new();
                for (i, (attr, out)) in obj.attrs.iter().enumerate() {
                    retire(&mut chain, *target, attr, out, self.dot(i as u32));
                }
                chain.push(Effector {
                    object: *target,
                    payload: Payload::MarkDeleted { last },
                });
                Ok(Plan {
                    chain,
                    local: LocalEffect::ReleaseHandle(*target),
                    refs_used: 0,
                    dots_used: obj.attrs.len() as u32,
                })
            }
            Op::MayDelete { target, last } => {
                let obj = self.object(*target)?;
                Ok(Plan {
                    chain: vec![Effector {
                        object: *target,
                        payload: Payload::RegisterQuery {
                            last: last.resolve(obj),
                        },
                    }],
                    local: LocalEffect::None,
                    refs_used: 0,
                    dots_used: 0,
                })
            }
            Op::Invoke { .. } | Op::Announce => {
                unreachable!("{} is not a replicated operation", op.kind())
            }
        }
    }

    /// `[inref-add; outref-set; inref-remove*]` for a fresh reference from
    /// `source.attr` to `target`.
    fn reference_chain(&self, source: ObjectKey, attr: &Attr, out: &super::outref::OutRef, target: ObjectKey) -> Plan {
        let id = self.ref_id(0);
        let mut chain = vec![Effector {
            object: target,
            payload: Payload::InrefAdd { source, id },
        }];
        let value = Some(Reference { target, id });
        write_and_retire(&mut chain, source, attr, out, value, self.dot(0));
        Plan {
            chain,
            local: LocalEffect::None,
            refs_used: 1,
            dots_used: 1,
        }
    }
}

fn retire(chain: &mut Vec<Effector>, source: ObjectKey, attr: &Attr, out: &super::outref::OutRef, dot: Dot) {
    write_and_retire(chain, source, attr, out, None, dot);
}

/// `outref-set` overwriting every entry the origin sees, followed by one
/// `inref-remove` per overwritten non-NULL entry, ordered by reference id.
fn write_and_retire(
    chain: &mut Vec<Effector>,
    source: ObjectKey,
    attr: &Attr,
    out: &super::outref::OutRef,
    value: Option<Reference>,
    dot: Dot,
) {
    let mut overwritten: Vec<Reference> = out.entries().filter_map(|e: OutRefEntry| e.value).collect();
    overwritten.sort_by_key(|r| (r.id, r.target));
    chain.push(Effector {
        object: source,
        payload: Payload::OutrefSet {
            attr: attr.clone(),
            value,
            dot,
            observed: out.dots(),
        },
    });
    for r in overwritten {
        chain.push(Effector {
            object: r.target,
            payload: Payload::InrefRemove { source, id: r.id },
        });
    }
}

/// Whether `obj` can be reached from a replica holding `handles`.
pub fn is_reachable(obj: &ObjectRecord, handles: &BTreeSet<ObjectKey>) -> bool {
    obj.root || handles.contains(&obj.key) || obj.has_external_source()
}

/// Reads `source.attr` and returns its unique non-NULL target.
pub fn invoke(
    objects: &BTreeMap<ObjectKey, ObjectRecord>,
    source: ObjectKey,
    attr: &Attr,
) -> Result<ObjectKey, PreconditionFailure> {
    let obj = objects
        .get(&source)
        .ok_or(PreconditionFailure::UnknownObject { key: source })?;
    let out = obj
        .attrs
        .get(attr)
        .ok_or_else(|| PreconditionFailure::UnknownAttribute {
            key: source,
            attr: attr.clone(),
        })?;
    match out.single() {
        None => Err(PreconditionFailure::MultiValued {
            key: source,
            attr: attr.clone(),
        }),
        Some(None) => Err(PreconditionFailure::NullReference {
            key: source,
            attr: attr.clone(),
        }),
        Some(Some(r)) => Ok(r.target),
    }
}

/// Applies one effector to an object map. Payloads are total: an effector
/// for a missing object is ignored.
pub fn apply_effector(objects: &mut BTreeMap<ObjectKey, ObjectRecord>, eff: &Effector) {
    let key = eff.object;
    if let Payload::CreateObject { root, attrs } = &eff.payload {
        objects
            .entry(key)
            .or_insert_with(|| ObjectRecord::new(key, *root, attrs.iter().cloned()));
        return;
    }
    let Some(obj) = objects.get_mut(&key) else {
        return;
    };
    match &eff.payload {
        Payload::CreateObject { .. } => {}
        Payload::InrefAdd { source, id } => obj.inref.add(*source, *id),
        Payload::InrefRemove { source, id } => obj.inref.remove(*source, *id),
        Payload::OutrefSet {
            attr,
            value,
            dot,
            observed,
        } => {
            if let Some(out) = obj.attrs.get_mut(attr) {
                out.apply_write(*value, *dot, observed);
            }
        }
        Payload::MarkDeleted { last } => {
            obj.deleted = true;
            obj.last_refs_at_delete.union_with(last);
        }
        Payload::RegisterQuery { .. } => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(n: u32) -> ObjectKey {
        ObjectKey::new(ReplicaId(0), n)
    }

    fn objects_with(objs: Vec<ObjectRecord>) -> BTreeMap<ObjectKey, ObjectRecord> {
        objs.into_iter().map(|o| (o.key, o)).collect()
    }

    fn root(n: u32, attr: &str, dot: u32) -> ObjectRecord {
        ObjectRecord::new(
            key(n),
            true,
            [(
                Attr::from(attr),
                Dot {
                    replica: ReplicaId(0),
                    counter: dot,
                },
            )],
        )
    }

    fn origin<'a>(objects: &'a BTreeMap<ObjectKey, ObjectRecord>, handles: &'a BTreeSet<ObjectKey>) -> Origin<'a> {
        Origin {
            replica: ReplicaId(0),
            objects,
            handles,
            next_ref: 1,
            next_dot: 100,
        }
    }

    #[test]
    fn init_chain_adds_inref_before_outref() {
        let objs = objects_with(vec![root(1, "a", 1), root(2, "x", 2)]);
        let handles = BTreeSet::new();
        let plan = origin(&objs, &handles)
            .plan(&Op::init(key(1), "a", key(2)), |_, _| false)
            .unwrap();
        assert_eq!(plan.chain.len(), 2);
        assert!(matches!(plan.chain[0].payload, Payload::InrefAdd { source, .. } if source == key(1)));
        assert_eq!(plan.chain[0].object, key(2));
        assert!(matches!(plan.chain[1].payload, Payload::OutrefSet { .. }));
        assert_eq!(plan.refs_used, 1);
    }

    #[test]
    fn overwrite_appends_sorted_removals() {
        let mut objs = objects_with(vec![root(1, "a", 1), root(2, "x", 2), root(3, "y", 3)]);
        for (id, t) in [(9u32, 2u32), (4, 3)] {
            let out = objs.get_mut(&key(1)).unwrap().attrs.get_mut(&Attr::from("a")).unwrap();
            let observed = BTreeSet::new();
            out.apply_write(
                Some(Reference {
                    target: key(t),
                    id: RefId {
                        origin: ReplicaId(1),
                        counter: id,
                    },
                }),
                Dot {
                    replica: ReplicaId(1),
                    counter: id,
                },
                &observed,
            );
        }
        let handles = BTreeSet::new();
        let plan = origin(&objs, &handles)
            .plan(&Op::assign_null(key(1), "a"), |_, _| false)
            .unwrap();
        let kinds: Vec<String> = plan.chain.iter().map(|e| e.to_string()).collect();
        assert!(kinds[0].starts_with("outref-set k0.1.a := null"));
        assert_eq!(kinds[1], "inref-remove k0.3 <- k0.1 #1.4");
        assert_eq!(kinds[2], "inref-remove k0.2 <- k0.1 #1.9");
    }

    #[test]
    fn assign_requires_single_valued_non_null_source() {
        let objs = objects_with(vec![root(1, "a", 1), root(2, "b", 2)]);
        let handles = BTreeSet::new();
        let o = origin(&objs, &handles);
        assert_eq!(
            o.plan(&Op::assign(key(2), "b", key(1), "a"), |_, _| false),
            Err(PreconditionFailure::NullSource {
                key: key(1),
                attr: "a".into()
            })
        );
        assert_eq!(
            o.plan(&Op::assign(key(2), "b", key(1), "zz"), |_, _| false),
            Err(PreconditionFailure::UnknownAttribute {
                key: key(1),
                attr: "zz".into()
            })
        );
    }

    #[test]
    fn unreachable_target_refused() {
        let mut objs = objects_with(vec![root(1, "a", 1)]);
        objs.insert(key(5), ObjectRecord::new(key(5), false, []));
        let none = BTreeSet::new();
        assert_eq!(
            origin(&objs, &none).plan(&Op::init(key(1), "a", key(5)), |_, _| false),
            Err(PreconditionFailure::Unreachable { key: key(5) })
        );
        let handles: BTreeSet<_> = [key(5)].into();
        assert!(origin(&objs, &handles)
            .plan(&Op::init(key(1), "a", key(5)), |_, _| false)
            .is_ok());
    }

    #[test]
    fn delete_refused_unless_stable() {
        let mut objs = objects_with(vec![root(1, "a", 1)]);
        objs.insert(
            key(5),
            ObjectRecord::new(
                key(5),
                false,
                [(
                    Attr::from("f"),
                    Dot {
                        replica: ReplicaId(0),
                        counter: 7,
                    },
                )],
            ),
        );
        let h = BTreeSet::new();
        let o = origin(&objs, &h);
        assert_eq!(
            o.plan(&Op::delete(key(5)), |_, _| false),
            Err(PreconditionFailure::NotUnreachable { key: key(5) })
        );
        assert_eq!(
            o.plan(&Op::delete(key(1)), |_, _| true),
            Err(PreconditionFailure::RootObject { key: key(1) })
        );
        let plan = o.plan(&Op::delete(key(5)), |_, _| true).unwrap();
        assert_eq!(plan.chain.len(), 2);
        assert!(matches!(plan.chain[1].payload, Payload::MarkDeleted { .. }));
        assert_eq!(plan.local, LocalEffect::ReleaseHandle(key(5)));
    }

    #[test]
    fn invoke_errors() {
        let objs = objects_with(vec![root(1, "a", 1)]);
        assert_eq!(
            invoke(&objs, key(1), &"a".into()),
            Err(PreconditionFailure::NullReference {
                key: key(1),
                attr: "a".into()
            })
        );
        assert_eq!(
            invoke(&objs, key(9), &"a".into()),
            Err(PreconditionFailure::UnknownObject { key: key(9) })
        );
    }
}
