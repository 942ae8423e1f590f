#![no_main]

use gnr_formats::TimelineFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = TimelineFile::parse(text) {
        assert_eq!(TimelineFile::parse(&t.render()).unwrap(), t);
    }
});
