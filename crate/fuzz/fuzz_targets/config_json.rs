//! Fuzz the sweep-config loader: parsing and validating arbitrary bytes
//! must never panic, and accepted configs round-trip through the canonical
//! serialization.

#![no_main]

use libfuzzer_sys::fuzz_target;
use uwoc_core::config::SweepConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = SweepConfig::from_json_str(text) {
        // Validation may reject, but must not panic.
        let _ = config.validate();
        let canonical = config.canonical_json();
        let reparsed =
            SweepConfig::from_json_str(&canonical).expect("canonical form must parse");
        assert_eq!(config, reparsed);
    }
});
