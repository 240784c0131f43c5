#![no_main]

use libfuzzer_sys::fuzz_target;

// The instance loader must reject arbitrary bytes with an error, never a
// panic; accepted instances must survive a serialize/parse round trip.
fuzz_target!(|data: &[u8]| {
    if let Ok(instance) = riskprof::io::parse_instance(data) {
        let canonical = riskprof::io::instance_to_json(&instance);
        let reparsed = riskprof::io::parse_instance(canonical.as_bytes())
            .expect("canonical serialization must re-parse");
        assert_eq!(
            canonical,
            riskprof::io::instance_to_json(&reparsed),
            "canonical serialization must be a fixed point"
        );
    }
});
