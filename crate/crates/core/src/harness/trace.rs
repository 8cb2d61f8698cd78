use serde::{Deserialize, Serialize};

use super::config::Config;
use crate::model::clock::Progress;
use crate::model::effector::MessageRef;
use crate::model::ids::ReplicaId;
use crate::model::world::{Outcome, Step, World};
use crate::refs::ops::{Op, PreconditionFailure};

/// Result of a generator invocation as recorded in a trace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenResult {
    Ok(Outcome),
    Failed(PreconditionFailure),
}

impl From<Result<Outcome, PreconditionFailure>> for GenResult {
    fn from(r: Result<Outcome, PreconditionFailure>) -> Self {
        match r {
            Ok(o) => GenResult::Ok(o),
            Err(f) => GenResult::Failed(f),
        }
    }
}

impl From<GenResult> for Result<Outcome, PreconditionFailure> {
    fn from(r: GenResult) -> Self {
        match r {
            GenResult::Ok(o) => Ok(o),
            GenResult::Failed(f) => Err(f),
        }
    }
}

/// One generator invocation. For replicated events `deps` and `chain`
/// describe what the generator emitted; replay checks them.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GenRecord {
    pub replica: ReplicaId,
    pub op: Op,
    pub result: GenResult,
    pub deps: Option<Progress>,
    pub chain: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TraceStep {
    Generate(GenRecord),
    Deliver { replica: ReplicaId, msg: MessageRef },
}

impl TraceStep {
    pub fn replica(&self) -> ReplicaId {
        match self {
            TraceStep::Generate(g) => g.replica,
            TraceStep::Deliver { replica, .. } => *replica,
        }
    }
}

/// A seed, its configuration and the full interleaving of generator
/// invocations and message deliveries.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trace {
    pub seed: u64,
    pub config: Config,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn new(seed: u64, config: Config) -> Self {
        Self {
            seed,
            config,
            steps: Vec::new(),
        }
    }

    /// Rebuilds the trace of everything `world` has done so far.
    pub fn from_world(seed: u64, config: Config, world: &World) -> Self {
        let steps = world
            .log()
            .iter()
            .map(|step| match step {
                Step::Generate { replica, op, outcome } => {
                    let event = match outcome {
                        Ok(Outcome::Event { id }) => world.event(*id),
                        _ => None,
                    };
                    TraceStep::Generate(GenRecord {
                        replica: *replica,
                        op: op.clone(),
                        result: outcome.clone().into(),
                        deps: event.map(|e| e.deps.clone()),
                        chain: event.map(|e| e.summary()).unwrap_or_default(),
                    })
                }
                Step::Deliver { replica, msg } => TraceStep::Deliver {
                    replica: *replica,
                    msg: *msg,
                },
            })
            .collect();
        Self { seed, config, steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s, TraceStep::Generate(_)))
            .count()
    }

    pub fn delivery_count(&self) -> usize {
        self.steps.len() - self.event_count()
    }
}
