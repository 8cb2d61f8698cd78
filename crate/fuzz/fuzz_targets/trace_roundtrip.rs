#![no_main]

use libfuzzer_sys::fuzz_target;
use refcrdt::tracefile::{parse, serialize};

// Anything the parser accepts must survive serialization unchanged.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(trace) = parse(text) else { return };
    let again = serialize(&trace);
    assert_eq!(parse(&again).expect("serialized trace parses"), trace);
    assert_eq!(serialize(&parse(&again).unwrap()), again);
});
