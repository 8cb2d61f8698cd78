//! Line-delimited JSON trace files.
//!
//! ```text
//! {"record":"header","format":"refcrdt-trace","version":1,"seed":7,"config":{...}}
//! {"record":"event","step":0,"replica":"r0","op":{...},"result":{...},"deps":{...},"chain":[...]}
//! {"record":"deliver","step":1,"replica":"r1","msg":{"kind":"effector","event":"e0.1","index":0}}
//! ```
//!
//! Every record sits on its own line and steps are numbered consecutively,
//! so a trace can be diffed, grepped and cut by hand.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::config::{Config, ConfigInvalid};
use crate::harness::trace::{GenRecord, GenResult, Trace, TraceStep};
use crate::model::clock::Progress;
use crate::model::effector::MessageRef;
use crate::model::ids::ReplicaId;
use crate::refs::ops::Op;

pub const FORMAT: &str = "refcrdt-trace";
pub const VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum TraceFileError {
    #[error("empty trace file")]
    Empty,
    #[error("line {line}: malformed record")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line 1: expected a header record")]
    MissingHeader,
    #[error("unknown trace format {0:?}")]
    UnknownFormat(String),
    #[error("unsupported trace version {0}")]
    UnsupportedVersion(u64),
    #[error("line {line}: unexpected header record")]
    DuplicateHeader { line: usize },
    #[error("line {line}: expected step {expected}, found {found}")]
    StepOrder { line: usize, expected: usize, found: usize },
    #[error("line {line}: blank line")]
    BlankLine { line: usize },
    #[error(transparent)]
    Config(#[from] ConfigInvalid),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum Record {
    Header {
        format: String,
        version: u64,
        seed: u64,
        config: Config,
    },
    Event {
        step: usize,
        replica: ReplicaId,
        op: Op,
        result: GenResult,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        deps: Option<Progress>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        chain: Vec<String>,
    },
    Deliver {
        step: usize,
        replica: ReplicaId,
        msg: MessageRef,
    },
}

/// Only the fields needed to decide whether the rest can be read.
#[derive(Deserialize)]
struct HeaderProbe {
    record: String,
    #[serde(default)]
    format: String,
    #[serde(default)]
    version: u64,
}

pub fn serialize(trace: &Trace) -> String {
    let mut out = String::new();
    let header = Record::Header {
        format: FORMAT.to_string(),
        version: VERSION,
        seed: trace.seed,
        config: trace.config.clone(),
    };
    push_line(&mut out, &header);
    for (step, s) in trace.steps.iter().enumerate() {
        let record = match s {
            TraceStep::Generate(g) => Record::Event {
                step,
                replica: g.replica,
                op: g.op.clone(),
                result: g.result.clone(),
                deps: g.deps.clone(),
                chain: g.chain.clone(),
            },
            TraceStep::Deliver { replica, msg } => Record::Deliver {
                step,
                replica: *replica,
                msg: *msg,
            },
        };
        push_line(&mut out, &record);
    }
    out
}

fn push_line(out: &mut String, record: &Record) {
    out.push_str(&serde_json::to_string(record).expect("trace records serialize"));
    out.push('\n');
}

pub fn parse(text: &str) -> Result<Trace, TraceFileError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or(TraceFileError::Empty)?;
    let probe: HeaderProbe = serde_json::from_str(first).map_err(|source| TraceFileError::Json { line: 1, source })?;
    if probe.record != "header" {
        return Err(TraceFileError::MissingHeader);
    }
    if probe.format != FORMAT {
        return Err(TraceFileError::UnknownFormat(probe.format));
    }
    if probe.version != VERSION {
        return Err(TraceFileError::UnsupportedVersion(probe.version));
    }
    let Record::Header { seed, config, .. } =
        serde_json::from_str(first).map_err(|source| TraceFileError::Json { line: 1, source })?
    else {
        return Err(TraceFileError::MissingHeader);
    };
    config.validate()?;

    let mut trace = Trace::new(seed, config);
    for (line, text) in lines {
        if text.trim().is_empty() {
            return Err(TraceFileError::BlankLine { line });
        }
        let record: Record = serde_json::from_str(text).map_err(|source| TraceFileError::Json { line, source })?;
        let expected = trace.steps.len();
        let (found, step) = match record {
            Record::Header { .. } => return Err(TraceFileError::DuplicateHeader { line }),
            Record::Event {
                step,
                replica,
                op,
                result,
                deps,
                chain,
            } => (
                step,
                TraceStep::Generate(GenRecord {
                    replica,
                    op,
                    result,
                    deps,
                    chain,
                }),
            ),
            Record::Deliver { step, replica, msg } => (step, TraceStep::Deliver { replica, msg }),
        };
        if found != expected {
            return Err(TraceFileError::StepOrder { line, expected, found });
        }
        trace.steps.push(step);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_other_versions() {
        let text = r#"{"record":"header","format":"refcrdt-trace","version":2}"#;
        assert!(matches!(parse(text), Err(TraceFileError::UnsupportedVersion(2))));
        assert!(matches!(parse(""), Err(TraceFileError::Empty)));
        let text = r#"{"record":"deliver","step":0}"#;
        assert!(matches!(parse(text), Err(TraceFileError::MissingHeader)));
    }

    #[test]
    fn empty_trace_round_trips() {
        let t = Trace::new(9, Config::default());
        let text = serialize(&t);
        assert_eq!(text.lines().count(), 1);
        let back = parse(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(serialize(&back), text);
    }

    #[test]
    fn steps_must_be_consecutive() {
        let mut text = serialize(&Trace::new(1, Config::default()));
        text.push_str(r#"{"record":"deliver","step":3,"replica":"r1","msg":{"kind":"announce","id":"a0.1"}}"#);
        assert!(matches!(parse(&text), Err(TraceFileError::StepOrder { found: 3, .. })));
    }
}
