//! Identifiers used throughout the simulator.
//!
//! Every identifier has a compact textual form (`r1`, `k0.3`, `#2.7`, ...)
//! which is also its serialized form in trace files.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed identifier {input:?}: expected {expected}")]
pub struct ParseIdError {
    input: String,
    expected: &'static str,
}

impl ParseIdError {
    fn new(input: &str, expected: &'static str) -> Self {
        Self {
            input: input.chars().take(64).collect(),
            expected,
        }
    }
}

/// Index of a replica in the fixed replica set of a world.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReplicaId(pub u16);

impl ReplicaId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Low-level object address: origin replica plus a per-replica counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectKey {
    pub origin: ReplicaId,
    pub seq: u32,
}

impl ObjectKey {
    pub fn new(origin: ReplicaId, seq: u32) -> Self {
        Self { origin, seq }
    }
}

/// Globally unique identifier of one reference instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RefId {
    pub origin: ReplicaId,
    pub counter: u32,
}

/// Identifies one register write (multi-value register dot).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Dot {
    pub replica: ReplicaId,
    pub counter: u32,
}

/// A generated data event: origin replica and its 1-based sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId {
    pub replica: ReplicaId,
    pub seq: u64,
}

/// A progress announcement: announcer and its 1-based announcement number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AnnounceId {
    pub replica: ReplicaId,
    pub seq: u64,
}

/// Name of an outref-holding attribute of an object.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Attr(pub String);

impl Attr {
    pub fn new(name: impl Into<String>) -> Self {
        Attr(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Attr {
    fn from(s: &str) -> Self {
        Attr(s.to_string())
    }
}

impl fmt::Display for Attr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl fmt::Display for ObjectKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k{}.{}", self.origin.0, self.seq)
    }
}

impl fmt::Display for RefId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}.{}", self.origin.0, self.counter)
    }
}

impl fmt::Display for Dot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w{}.{}", self.replica.0, self.counter)
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}.{}", self.replica.0, self.seq)
    }
}

impl fmt::Display for AnnounceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}.{}", self.replica.0, self.seq)
    }
}

fn split_pair<'a>(s: &'a str, prefix: char, expected: &'static str) -> Result<(u16, &'a str), ParseIdError> {
    let rest = s.strip_prefix(prefix).ok_or_else(|| ParseIdError::new(s, expected))?;
    let (a, b) = rest.split_once('.').ok_or_else(|| ParseIdError::new(s, expected))?;
    let a = parse_digits(a).ok_or_else(|| ParseIdError::new(s, expected))?;
    Ok((a, b))
}

// `str::parse` accepts a leading '+', which would break the textual round trip.
fn parse_digits<T: FromStr>(s: &str) -> Option<T> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

impl FromStr for ReplicaId {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('r')
            .and_then(parse_digits)
            .map(ReplicaId)
            .ok_or_else(|| ParseIdError::new(s, "r<n>"))
    }
}

impl FromStr for ObjectKey {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        const EXP: &str = "k<replica>.<seq>";
        let (origin, seq) = split_pair(s, 'k', EXP)?;
        let seq = parse_digits(seq).ok_or_else(|| ParseIdError::new(s, EXP))?;
        Ok(ObjectKey::new(ReplicaId(origin), seq))
    }
}

impl FromStr for RefId {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        const EXP: &str = "#<replica>.<counter>";
        let (origin, counter) = split_pair(s, '#', EXP)?;
        let counter = parse_digits(counter).ok_or_else(|| ParseIdError::new(s, EXP))?;
        Ok(RefId {
            origin: ReplicaId(origin),
            counter,
        })
    }
}

impl FromStr for Dot {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        const EXP: &str = "w<replica>.<counter>";
        let (replica, counter) = split_pair(s, 'w', EXP)?;
        let counter = parse_digits(counter).ok_or_else(|| ParseIdError::new(s, EXP))?;
        Ok(Dot {
            replica: ReplicaId(replica),
            counter,
        })
    }
}

impl FromStr for EventId {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        const EXP: &str = "e<replica>.<seq>";
        let (replica, seq) = split_pair(s, 'e', EXP)?;
        let seq = parse_digits(seq).ok_or_else(|| ParseIdError::new(s, EXP))?;
        Ok(EventId {
            replica: ReplicaId(replica),
            seq,
        })
    }
}

impl FromStr for AnnounceId {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        const EXP: &str = "a<replica>.<seq>";
        let (replica, seq) = split_pair(s, 'a', EXP)?;
        let seq = parse_digits(seq).ok_or_else(|| ParseIdError::new(s, EXP))?;
        Ok(AnnounceId {
            replica: ReplicaId(replica),
            seq,
        })
    }
}

macro_rules! serde_via_str {
    ($($ty:ty),*) => {$(
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    )*};
}

serde_via_str!(ReplicaId, ObjectKey, RefId, Dot, EventId, AnnounceId);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textual_forms_parse_back() {
        let k = ObjectKey::new(ReplicaId(2), 17);
        assert_eq!(k.to_string(), "k2.17");
        assert_eq!("k2.17".parse::<ObjectKey>().unwrap(), k);
        let r: RefId = "#0.42".parse().unwrap();
        assert_eq!(r.counter, 42);
        assert_eq!("e1.3".parse::<EventId>().unwrap().seq, 3);
        assert_eq!("r4".parse::<ReplicaId>().unwrap(), ReplicaId(4));
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "k", "k1", "k1.", "k.1", "x1.2", "k1.+2", "k1.2.3", "k99999999.1"] {
            assert!(bad.parse::<ObjectKey>().is_err(), "{bad}");
        }
        assert!("r-1".parse::<ReplicaId>().is_err());
    }
}
