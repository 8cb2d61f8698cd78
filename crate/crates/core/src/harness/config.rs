use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::effector::CompositionMode;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigInvalid(pub String);

/// Relative weights of the operation kinds drawn by the random generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpMix {
    pub create: u32,
    pub init: u32,
    pub assign: u32,
    pub assign_null: u32,
    pub invoke: u32,
    pub may_delete: u32,
    pub delete: u32,
    pub announce: u32,
}

impl Default for OpMix {
    fn default() -> Self {
        Self {
            create: 2,
            init: 5,
            assign: 6,
            assign_null: 3,
            invoke: 1,
            may_delete: 2,
            delete: 2,
            announce: 1,
        }
    }
}

impl OpMix {
    /// A mix that draws only one kind.
    pub fn only(kind: &str) -> Option<Self> {
        let mut m = OpMix {
            create: 0,
            init: 0,
            assign: 0,
            assign_null: 0,
            invoke: 0,
            may_delete: 0,
            delete: 0,
            announce: 0,
        };
        *m.weight_mut(kind)? = 1;
        Some(m)
    }

    pub const KINDS: [&'static str; 8] = [
        "create",
        "init",
        "assign",
        "assign-null",
        "invoke",
        "may-delete",
        "delete",
        "announce",
    ];

    pub fn weights(&self) -> [u32; 8] {
        [
            self.create,
            self.init,
            self.assign,
            self.assign_null,
            self.invoke,
            self.may_delete,
            self.delete,
            self.announce,
        ]
    }

    fn weight_mut(&mut self, kind: &str) -> Option<&mut u32> {
        Some(match kind {
            "create" => &mut self.create,
            "init" => &mut self.init,
            "assign" => &mut self.assign,
            "assign-null" => &mut self.assign_null,
            "invoke" => &mut self.invoke,
            "may-delete" => &mut self.may_delete,
            "delete" => &mut self.delete,
            "announce" => &mut self.announce,
            _ => return None,
        })
    }

    pub fn total(&self) -> u64 {
        self.weights().iter().map(|&w| w as u64).sum()
    }
}

/// Parameters of a random execution.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Config {
    pub replicas: usize,
    pub events: usize,
    pub mode: CompositionMode,
    pub mix: OpMix,
    /// Chance per generated event, in thousandths, of a synchronization
    /// burst before it: every replica catches up and announces, twice.
    /// Without bursts the stability detector almost never fires inside a
    /// random trace.
    pub sync_permille: u32,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            replicas: 3,
            events: 20,
            mode: CompositionMode::PureCausal,
            mix: OpMix::default(),
            sync_permille: 40,
        }
    }
}

/// Replica ids are 16-bit; larger worlds are far outside desk scale anyway.
pub const MAX_REPLICAS: usize = 64;
pub const MAX_EVENTS: usize = 100_000;

impl Config {
    pub fn with_mode(mut self, mode: CompositionMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigInvalid> {
        if self.replicas == 0 || self.replicas > MAX_REPLICAS {
            return Err(ConfigInvalid(format!(
                "replica count {} outside 1..={MAX_REPLICAS}",
                self.replicas
            )));
        }
        if self.events == 0 || self.events > MAX_EVENTS {
            return Err(ConfigInvalid(format!(
                "event count {} outside 1..={MAX_EVENTS}",
                self.events
            )));
        }
        if self.sync_permille > 1000 {
            return Err(ConfigInvalid(format!(
                "sync rate {} exceeds 1000 per mille",
                self.sync_permille
            )));
        }
        if self.mix.total() == 0 {
            return Err(ConfigInvalid("operation mix has no positive weight".into()));
        }
        Ok(())
    }
}
