#![no_main]

use libfuzzer_sys::fuzz_target;
use robustbf::NetworkInstance;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(inst) = NetworkInstance::from_json(text) else { return };
    let again = NetworkInstance::from_json(&inst.to_json().unwrap()).unwrap();
    assert_eq!(inst.config(), again.config());
});
