//! Trajectory import must never panic on arbitrary bytes, and anything it
//! accepts must round-trip bit-exactly through export.

#![no_main]

use libfuzzer_sys::fuzz_target;

use grflow::trajectory_io::{export_json, import_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(traj) = import_json(text) else { return };
    let out = export_json(&traj);
    let again = import_json(&out).expect("exported trajectory must import");
    assert_eq!(out, export_json(&again), "export must be a fixed point");
});
