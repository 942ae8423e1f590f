//! Fréchet distance, its extrapolated variant, diversity FID and pairwise
//! output diversity.

pub mod diversity;
pub mod extractor;
pub mod fid;

use std::path::Path;

pub use diversity::{dfid, pairwise_diversity, DfidResult, Translator};
pub use extractor::{extractor_by_id, FeatureExtractor, RandomConvExtractor, DEFAULT_EXTRACTOR};
pub use fid::{
    default_batch_sizes, fid_inf, frechet_distance, frechet_from_moments, FeatureSet, FidInf, DEFAULT_FID_INF_SIZES,
};

use gnr_formats::FeatureCache;

use crate::error::{Error, Result};

/// One evaluated metric with enough context to reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub population_sizes: Vec<usize>,
    pub extractor_id: String,
    pub config_echo: String,
}

pub fn save_features(path: &Path, set: &FeatureSet) -> Result<()> {
    std::fs::write(path, set.to_cache().encode()).map_err(|e| Error::io(path, e))
}

pub fn load_features(path: &Path) -> Result<FeatureSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let cache = FeatureCache::decode(&bytes).map_err(|source| Error::Format {
        path: path.to_path_buf(),
        source,
    })?;
    FeatureSet::from_cache(&cache)
}
