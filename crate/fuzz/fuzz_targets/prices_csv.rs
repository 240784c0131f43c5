#![no_main]

use libfuzzer_sys::fuzz_target;

use riskprof::return_model::{validate_marginal, ReturnGrid};

// The CSV loader and the ingestion that follows it must never panic on
// untrusted bytes, and every ingested marginal must validate.
fuzz_target!(|data: &[u8]| {
    let Ok(series) = riskprof::io::parse_prices_csv(data) else {
        return;
    };
    if series.len() > 8 || series.iter().any(|s| s.observations.len() > 64) {
        return; // keep iterations fast; size is not what we are probing
    }
    let grid = ReturnGrid::new(1.0, -100, 300).unwrap();
    if let Ok(out) = riskprof::io::ingest(&series, 1, grid) {
        for entry in &out.instance.stocks {
            validate_marginal(entry.dist.clone(), None).expect("ingest output must validate");
        }
    }
});
