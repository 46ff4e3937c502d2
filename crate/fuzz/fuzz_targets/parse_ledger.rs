#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(ledger) = enslab::io::parse_ledger(text) {
        let again = enslab::io::parse_ledger(&enslab::io::ledger_to_csv(&ledger)).expect("written ledger parses");
        assert_eq!(again, ledger);
    }
});
