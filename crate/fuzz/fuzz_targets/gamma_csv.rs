//! Fuzz the gamma-set CSV parser: no panics, and accepted inputs round-trip
//! through the canonical writer.

#![no_main]

use libfuzzer_sys::fuzz_target;
use uwoc_core::io::{parse_gamma_csv, write_gamma_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(gamma) = parse_gamma_csv(text) {
        assert!(gamma.gamma_s >= 0.0 && gamma.gamma_s.is_finite());
        assert!(gamma.gamma_isi.iter().all(|&g| g >= 0.0 && g.is_finite()));
        let written = write_gamma_csv(&gamma);
        let reparsed = parse_gamma_csv(&written).expect("canonical form must parse");
        assert_eq!(gamma, reparsed);
    }
});
