#![no_main]

use gnr_formats::{KvDocument, RunConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(doc) = KvDocument::parse(text) {
        let _ = KvDocument::parse(&doc.render());
    }
    if let Ok(cfg) = RunConfig::parse(text) {
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
});
