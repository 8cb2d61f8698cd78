#![no_main]

use libfuzzer_sys::fuzz_target;
use refcrdt::{AnnounceId, Dot, EventId, ObjectKey, RefId, ReplicaId};

fn round_trip<T>(s: &str)
where
    T: std::str::FromStr + std::fmt::Display + PartialEq + std::fmt::Debug,
{
    if let Ok(v) = s.parse::<T>() {
        assert_eq!(v.to_string().parse::<T>().ok(), Some(v));
    }
}

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    round_trip::<ReplicaId>(s);
    round_trip::<ObjectKey>(s);
    round_trip::<RefId>(s);
    round_trip::<Dot>(s);
    round_trip::<EventId>(s);
    round_trip::<AnnounceId>(s);
});
