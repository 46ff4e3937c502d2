#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = enslab::io::decode_checkpoint(data) {
        assert_eq!(enslab::io::encode_checkpoint(&ckpt.state, ckpt.scheme), data);
    }
});
