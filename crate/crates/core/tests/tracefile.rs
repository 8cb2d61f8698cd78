use proptest::prelude::*;

use refcrdt::harness::{check_invariants, random_execution, Config};
use refcrdt::tracefile::{self, TraceFileError};

fn sample() -> String {
    tracefile::serialize(&random_execution(9, &Config::default()).unwrap())
}

proptest! {
    #[test]
    fn arbitrary_text_never_panics(text in ".{0,400}") {
        let _ = tracefile::parse(&text);
    }

    #[test]
    fn corrupted_traces_are_rejected_or_checked(cut in 0usize..4000, byte in any::<u8>()) {
        let mut bytes = sample().into_bytes();
        let at = cut % bytes.len();
        bytes[at] = byte;
        let Ok(text) = String::from_utf8(bytes) else { return Ok(()) };
        if let Ok(trace) = tracefile::parse(&text) {
            // A surviving edit either replays or is reported as a mismatch.
            let _ = check_invariants(&trace);
        }
    }

    #[test]
    fn truncation_keeps_a_prefix(lines in 1usize..60) {
        let text = sample();
        let kept: String = text.split_inclusive('\n').take(lines).collect();
        let trace = tracefile::parse(&kept).unwrap();
        prop_assert_eq!(trace.len(), kept.lines().count() - 1);
        refcrdt::harness::replay::replay(&trace).unwrap();
    }
}

#[test]
fn header_is_required() {
    let text = sample();
    let body: String = text.split_inclusive('\n').skip(1).collect();
    assert!(matches!(tracefile::parse(&body), Err(TraceFileError::MissingHeader)));
    assert!(matches!(tracefile::parse(""), Err(TraceFileError::Empty)));
}

#[test]
fn future_versions_are_refused() {
    let text = sample().replacen("\"version\":1", "\"version\":2", 1);
    assert!(matches!(
        tracefile::parse(&text),
        Err(TraceFileError::UnsupportedVersion(2))
    ));
}

fn id_round_trip<T>(s: &str) -> bool
where
    T: std::str::FromStr + std::fmt::Display + PartialEq,
{
    s.parse::<T>()
        .map_or(true, |v| v.to_string().parse::<T>().is_ok_and(|w| w == v))
}

proptest! {
    #[test]
    fn ids_print_back_to_themselves(s in "[rkwea#+]?[0-9+]{0,6}(\\.[0-9+]{0,6})?") {
        use refcrdt::{AnnounceId, Dot, EventId, ObjectKey, RefId, ReplicaId};
        prop_assert!(id_round_trip::<ReplicaId>(&s));
        prop_assert!(id_round_trip::<ObjectKey>(&s));
        prop_assert!(id_round_trip::<RefId>(&s));
        prop_assert!(id_round_trip::<Dot>(&s));
        prop_assert!(id_round_trip::<EventId>(&s));
        prop_assert!(id_round_trip::<AnnounceId>(&s));
    }
}

/// The checked-in fuzz seeds stay valid inputs for every trace target.
#[test]
fn fuzz_corpus_seeds_parse_and_check() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let mut seen = 0;
    for target in ["parse_trace", "trace_roundtrip", "check_trace"] {
        for entry in std::fs::read_dir(root.join(target)).unwrap() {
            let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
            let trace = tracefile::parse(&text).unwrap();
            assert_eq!(tracefile::serialize(&trace), text);
            assert!(check_invariants(&trace).unwrap().is_clean());
            seen += 1;
        }
    }
    assert!(seen >= 15);
}
