#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = enslab::io::parse_config(text) {
        let again = enslab::io::parse_config(&enslab::io::emit_config(&config)).expect("emitted config parses");
        assert_eq!(again, config);
    }
});
