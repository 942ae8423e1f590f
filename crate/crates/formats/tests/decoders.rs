//! Every decoder rejects arbitrary input with an error instead of panicking,
//! and every encoder's output decodes back to the same value.

use gnr_formats::{Checkpoint, FeatureCache, Interpolation, KvDocument, NamedArray, RunConfig, TimelineFile};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn binary_decoders_survive_arbitrary_bytes(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        let _ = Checkpoint::decode(&bytes);
        let _ = FeatureCache::decode(&bytes);
    }

    #[test]
    fn text_parsers_survive_arbitrary_text(text in "[\\[\\]a-z_=#.,0-9 \\n-]{0,200}") {
        let _ = KvDocument::parse(&text);
        let _ = RunConfig::parse(&text);
        let _ = TimelineFile::parse(&text);
    }

    #[test]
    fn checkpoints_survive_single_byte_corruption(pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let ck = Checkpoint {
            meta: [("kind".to_string(), "probe".to_string())].into_iter().collect(),
            arrays: vec![NamedArray::new("w", vec![2, 2], vec![1.0, -2.0, 0.5, 3.25])],
        };
        let mut bytes = ck.encode();
        let i = pos.index(bytes.len());
        bytes[i] ^= flip;
        prop_assert!(Checkpoint::decode(&bytes).is_err());
    }

    #[test]
    fn feature_caches_round_trip(rows in 0usize..6, dim in 1usize..6, seed in any::<u32>()) {
        let data = (0..rows * dim).map(|i| ((i as u32).wrapping_mul(seed) % 1000) as f32 / 7.0).collect();
        let c = FeatureCache { rows, dim, extractor_id: "probe".into(), data };
        prop_assert_eq!(FeatureCache::decode(&c.encode()).unwrap(), c);
    }
}

#[test]
fn echoed_config_reparses_to_the_same_value() {
    let text = "[train]\nseed = 4\nlambda_cyc = 15\n[data]\nroot = somewhere\n[output]\nrun_name = r\n";
    let cfg = RunConfig::parse(text).unwrap();
    assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    assert_eq!(cfg.train.seed, 4);
}

#[test]
fn timelines_round_trip() {
    let t = TimelineFile {
        interpolation: Interpolation::Linear,
        keyframes: vec![(0, [0.5; 8]), (12, [-1.0; 8])],
    };
    assert_eq!(TimelineFile::parse(&t.render()).unwrap(), t);
}

fn corpus(target: &str) -> Vec<Vec<u8>> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut seeds: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| std::fs::read(e.unwrap().path()).unwrap()).collect();
    seeds.sort();
    assert!(!seeds.is_empty(), "no seeds for {target}");
    seeds
}

#[test]
fn fuzz_seeds_decode() {
    for s in corpus("checkpoint") {
        Checkpoint::decode(&s).unwrap();
    }
    for s in corpus("feature_cache") {
        FeatureCache::decode(&s).unwrap();
    }
    for s in corpus("timeline") {
        TimelineFile::parse(std::str::from_utf8(&s).unwrap()).unwrap();
    }
    for s in corpus("run_config") {
        RunConfig::parse(std::str::from_utf8(&s).unwrap()).unwrap();
    }
}
