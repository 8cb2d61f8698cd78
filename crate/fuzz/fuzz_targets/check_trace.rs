#![no_main]

use libfuzzer_sys::fuzz_target;

// Parsed traces are untrusted: replay may reject them, but neither replay
// nor the checker may panic. Violations are not asserted, since a trace can
// legitimately pass explicit ignore sets that break integrity.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(trace) = refcrdt::tracefile::parse(text) else {
        return;
    };
    if trace.len() > 2_000 || trace.config.replicas > 8 {
        return;
    }
    let _ = refcrdt::check_invariants(&trace);
});
