#![no_main]

use libfuzzer_sys::fuzz_target;
use robustbf::harness::{parse_csv, write_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(rows) = parse_csv(text) else { return };
    let _ = parse_csv(&write_csv(&rows));
});
