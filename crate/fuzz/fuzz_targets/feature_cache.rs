#![no_main]

use gnr_formats::FeatureCache;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = FeatureCache::decode(data) {
        assert_eq!(c.data.len(), c.rows * c.dim);
    }
});
