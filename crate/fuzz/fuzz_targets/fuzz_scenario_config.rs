//! Scenario JSON parsing plus validation must never panic, whatever the
//! input bytes. Accepted configs must also survive a serialize/reparse cycle.

#![no_main]

use libfuzzer_sys::fuzz_target;

use grflow::scenario::Scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(s) = Scenario::from_json(text) else { return };
    let _ = s.digest();
    if s.validate().is_ok() {
        let round = serde_json::to_string(&s).unwrap();
        let back = Scenario::from_json(&round).expect("accepted config must reparse");
        assert!(back.validate().is_ok(), "validity must survive a round trip");
    }
});
