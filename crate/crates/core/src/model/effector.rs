//! Effector payloads, events and the messages that carry them.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::clock::Progress;
use super::ids::{AnnounceId, Attr, Dot, EventId, ObjectKey, RefId};
use crate::refs::inref::LastRefs;
use crate::refs::ops::Op;
use crate::refs::outref::Reference;

/// How a generator's effector chain is shipped to other replicas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompositionMode {
    /// The whole chain is one message applied in one step.
    Atomic,
    /// One message per effector, delivered in chain order.
    #[default]
    PureCausal,
}

impl fmt::Display for CompositionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompositionMode::Atomic => "atomic",
            CompositionMode::PureCausal => "pure-causal",
        })
    }
}

impl std::str::FromStr for CompositionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "atomic" => Ok(CompositionMode::Atomic),
            "pure-causal" => Ok(CompositionMode::PureCausal),
            other => Err(format!("unknown composition mode {other:?}")),
        }
    }
}

/// The self-contained update an effector performs on one object.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payload {
    CreateObject {
        root: bool,
        attrs: Vec<(Attr, Dot)>,
    },
    InrefAdd {
        source: ObjectKey,
        id: RefId,
    },
    InrefRemove {
        source: ObjectKey,
        id: RefId,
    },
    OutrefSet {
        attr: Attr,
        value: Option<Reference>,
        dot: Dot,
        observed: BTreeSet<Dot>,
    },
    MarkDeleted {
        last: LastRefs,
    },
    /// Registers a deletion query `(object, last)` with the stability detector.
    RegisterQuery {
        last: LastRefs,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Effector {
    pub object: ObjectKey,
    pub payload: Payload,
}

impl fmt::Display for Effector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.object;
        match &self.payload {
            Payload::CreateObject { root, attrs } => {
                write!(f, "create {o}{}", if *root { " root" } else { "" })?;
                for (a, _) in attrs {
                    write!(f, " {a}")?;
                }
                Ok(())
            }
            Payload::InrefAdd { source, id } => write!(f, "inref-add {o} <- {source} {id}"),
            Payload::InrefRemove { source, id } => write!(f, "inref-remove {o} <- {source} {id}"),
            Payload::OutrefSet {
                attr,
                value,
                dot,
                observed,
            } => {
                write!(f, "outref-set {o}.{attr} := ")?;
                match value {
                    Some(r) => write!(f, "{r}")?,
                    None => f.write_str("null")?,
                }
                write!(f, " {dot} over")?;
                for d in observed {
                    write!(f, " {d}")?;
                }
                Ok(())
            }
            Payload::MarkDeleted { last } => write!(f, "mark-deleted {o} last {last}"),
            Payload::RegisterQuery { last } => write!(f, "register {o} last {last}"),
        }
    }
}

/// A successful generator invocation and its ordered effector chain.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Event {
    pub id: EventId,
    pub op: Op,
    /// Origin progress at generation time.
    pub deps: Progress,
    pub chain: Vec<Effector>,
}

impl Event {
    pub fn message_count(&self, mode: CompositionMode) -> u32 {
        match mode {
            CompositionMode::Atomic => 1,
            CompositionMode::PureCausal => self.chain.len() as u32,
        }
    }

    /// Effectors carried by message `index`.
    pub fn message(&self, mode: CompositionMode, index: u32) -> &[Effector] {
        match mode {
            CompositionMode::Atomic => &self.chain,
            CompositionMode::PureCausal => std::slice::from_ref(&self.chain[index as usize]),
        }
    }

    pub fn summary(&self) -> Vec<String> {
        self.chain.iter().map(ToString::to_string).collect()
    }
}

/// A downstream message as seen by the delivery layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectorMessage<'a> {
    pub event: EventId,
    pub chain_index: u32,
    pub effectors: &'a [Effector],
}

/// Names one deliverable unit: an effector message or a progress announcement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MessageRef {
    Effector { event: EventId, index: u32 },
    Announce { id: AnnounceId },
}

impl fmt::Display for MessageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MessageRef::Effector { event, index } => write!(f, "{event}/{index}"),
            MessageRef::Announce { id } => write!(f, "{id}"),
        }
    }
}
