#![no_main]

use libfuzzer_sys::fuzz_target;
use robustbf::distributed::EventLog;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(log) = EventLog::from_json_lines(text) else { return };
    let _ = log.check(3, &[1.0, 1.0, 1.0]);
    let _ = log.proposals();
    EventLog::from_json_lines(&log.to_json_lines()).unwrap();
});
