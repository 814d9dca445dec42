//! Fuzz the impulse-response CSV parser: arbitrary bytes must never panic,
//! and anything that parses must survive a write/parse round trip intact.

#![no_main]

use libfuzzer_sys::fuzz_target;
use uwoc_core::io::{parse_impulse_csv, write_impulse_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(response) = parse_impulse_csv(text) {
        // Accepted input satisfies the type invariants.
        assert!(response.bins().iter().all(|&b| b >= 0.0 && b.is_finite()));
        assert!(response.total_fraction() <= 1.0 + 1e-9);
        assert!(response.bin_width() > 0.0);
        // And round-trips exactly through the canonical writer.
        let written = write_impulse_csv(&response);
        let reparsed = parse_impulse_csv(&written).expect("canonical form must parse");
        assert_eq!(response, reparsed);
    }
});
