#![no_main]

use gnr_formats::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = Checkpoint::decode(data) {
        assert!(Checkpoint::decode(&ck.encode()).unwrap().bits_eq(&ck));
    }
});
