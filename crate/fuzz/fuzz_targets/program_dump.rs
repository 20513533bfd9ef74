#![no_main]

use libfuzzer_sys::fuzz_target;
use robustbf::conic::dump::{parse_program, write_program};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(prog) = parse_program(text) else { return };
    let _ = prog.check();
    parse_program(&write_program(&prog)).unwrap();
});
