//! Typed run configuration on top of [`KvDocument`].
//!
//! Every key has a default, unknown sections and keys are rejected, and
//! [`RunConfig::to_text`] writes every field so the echo re-parses to an equal
//! value.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{ConfigError, ValidationError};
use crate::kv::{Entry, KvDocument, Section};

pub const STYLE_DIM: usize = 8;
pub const SUPPORTED_RESOLUTIONS: [usize; 4] = [32, 64, 128, 256];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub style_dim: usize,
    pub lambda_adv: f64,
    pub lambda_scon: f64,
    pub lambda_cyc: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub total_iterations: u64,
    pub r1_gamma: f64,
    pub resolution: usize,
    pub seed: u64,
    pub base_channels: usize,
    pub max_channels: usize,
    pub downsample_depth: usize,
    pub no_stddev_branch: bool,
    pub mode_seeking_loss: bool,
    pub lambda_ms: f64,
    pub checkpoint_every: u64,
    pub sample_every: u64,
}

impl Default for TrainConfig {
    /// Desk-scale defaults: 64x64, 2000 iterations.
    fn default() -> Self {
        Self {
            batch_size: 7,
            style_dim: STYLE_DIM,
            lambda_adv: 1.0,
            lambda_scon: 10.0,
            lambda_cyc: 20.0,
            learning_rate: 0.002,
            adam_beta1: 0.0,
            adam_beta2: 0.99,
            total_iterations: 2000,
            r1_gamma: 10.0,
            resolution: 64,
            seed: 1,
            base_channels: 8,
            max_channels: 256,
            downsample_depth: 2,
            no_stddev_branch: false,
            mode_seeking_loss: false,
            lambda_ms: 1.0,
            checkpoint_every: 500,
            sample_every: 500,
        }
    }
}

impl TrainConfig {
    /// Full-scale settings: 256x256 for 300k iterations with 32 base channels.
    pub fn full_scale() -> Self {
        Self {
            total_iterations: 300_000,
            resolution: 256,
            base_channels: 32,
            checkpoint_every: 10_000,
            sample_every: 10_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let f = |k: &str| format!("train.{k}");
        if self.batch_size < 2 {
            return Err(ValidationError::new(
                f("batch_size"),
                format!("must be at least 2 for the batch-statistic branch (got {})", self.batch_size),
            ));
        }
        if self.style_dim != STYLE_DIM {
            return Err(ValidationError::new(
                f("style_dim"),
                format!("must be {STYLE_DIM} (got {})", self.style_dim),
            ));
        }
        for (key, v) in [
            ("lambda_adv", self.lambda_adv),
            ("lambda_scon", self.lambda_scon),
            ("lambda_cyc", self.lambda_cyc),
            ("r1_gamma", self.r1_gamma),
            ("lambda_ms", self.lambda_ms),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(ValidationError::new(
                    f(key),
                    format!("must be finite and non-negative (got {v})"),
                ));
            }
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(ValidationError::new(
                f("learning_rate"),
                format!("must be positive (got {})", self.learning_rate),
            ));
        }
        for (key, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(ValidationError::new(f(key), format!("must lie in [0, 1) (got {v})")));
            }
        }
        if self.total_iterations == 0 {
            return Err(ValidationError::new(f("total_iterations"), "must be positive"));
        }
        if !SUPPORTED_RESOLUTIONS.contains(&self.resolution) {
            return Err(ValidationError::new(
                f("resolution"),
                format!("must be one of {SUPPORTED_RESOLUTIONS:?} (got {})", self.resolution),
            ));
        }
        if self.base_channels == 0 || self.max_channels < self.base_channels {
            return Err(ValidationError::new(
                f("base_channels"),
                format!(
                    "must be positive and not exceed max_channels (got {} / {})",
                    self.base_channels, self.max_channels
                ),
            ));
        }
        if self.downsample_depth == 0 || self.resolution >> (self.downsample_depth + 1) < 4 {
            return Err(ValidationError::new(
                f("downsample_depth"),
                format!(
                    "resolution {} is too small for depth {}",
                    self.resolution, self.downsample_depth
                ),
            ));
        }
        if self.checkpoint_every == 0 || self.sample_every == 0 {
            return Err(ValidationError::new(
                f("checkpoint_every"),
                "checkpoint and sample intervals must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    /// Augmentations per test image in DFID.
    pub dfid_m: usize,
    /// Test images in DFID.
    pub dfid_n: usize,
    pub diversity_k: usize,
    pub diversity_n: usize,
    pub extractor: String,
    /// Subset sizes for FID-infinity; empty selects the log-spaced default.
    pub fid_batch_sizes: Vec<usize>,
    pub fid_resamples: usize,
    pub seed: u64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            dfid_m: 200,
            dfid_n: 20,
            diversity_k: 10,
            diversity_n: 20,
            extractor: "random-conv-64".to_string(),
            fid_batch_sizes: Vec::new(),
            fid_resamples: 5,
            seed: 7,
        }
    }
}

impl MetricsConfig {
    pub fn full_scale() -> Self {
        Self {
            dfid_m: 1000,
            dfid_n: 100,
            diversity_n: 100,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.dfid_m < 2 {
            return Err(ValidationError::new("metrics.dfid_m", "must be at least 2"));
        }
        if self.dfid_n == 0 {
            return Err(ValidationError::new("metrics.dfid_n", "must be positive"));
        }
        if self.diversity_k < 2 {
            return Err(ValidationError::new("metrics.diversity_k", "must be at least 2"));
        }
        if self.diversity_n == 0 {
            return Err(ValidationError::new("metrics.diversity_n", "must be positive"));
        }
        if self.extractor.is_empty() {
            return Err(ValidationError::new("metrics.extractor", "must not be empty"));
        }
        if self.fid_resamples == 0 {
            return Err(ValidationError::new("metrics.fid_resamples", "must be positive"));
        }
        if !self.fid_batch_sizes.is_empty() {
            let distinct: BTreeSet<_> = self.fid_batch_sizes.iter().collect();
            if distinct.len() < 3 {
                return Err(ValidationError::new(
                    "metrics.fid_batch_sizes",
                    "needs at least 3 distinct sizes",
                ));
            }
            if self.fid_batch_sizes.iter().any(|&n| n < 2) {
                return Err(ValidationError::new("metrics.fid_batch_sizes", "sizes must be at least 2"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Dataset root holding `domainA/` and `domainB/`.
    pub data_root: PathBuf,
    pub metrics: MetricsConfig,
    pub output_dir: PathBuf,
    /// Fixed run directory name; a timestamped name is generated when empty.
    pub run_name: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            data_root: PathBuf::from("data/toy"),
            metrics: MetricsConfig::default(),
            output_dir: PathBuf::from("runs"),
            run_name: String::new(),
        }
    }
}

struct SectionReader<'a> {
    name: &'static str,
    section: Option<&'a Section>,
    seen: BTreeSet<&'a str>,
}

impl<'a> SectionReader<'a> {
    fn new(doc: &'a KvDocument, name: &'static str) -> Self {
        Self {
            name,
            section: doc.section(name),
            seen: BTreeSet::new(),
        }
    }

    fn entry(&mut self, key: &'static str) -> Option<&'a Entry> {
        let e = self.section?.get(key)?;
        self.seen.insert(key);
        Some(e)
    }

    fn parse<T: FromStr>(&mut self, key: &'static str, default: T) -> Result<T, ValidationError> {
        let section = self.name;
        match self.entry(key) {
            None => Ok(default),
            Some(e) => e.value.parse::<T>().map_err(|_| {
                ValidationError::new(
                    format!("{section}.{key}"),
                    format!("cannot parse {:?} (line {})", e.value, e.line),
                )
            }),
        }
    }

    fn string(&mut self, key: &'static str, default: &str) -> String {
        self.entry(key)
            .map(|e| e.value.clone())
            .unwrap_or_else(|| default.to_string())
    }

    fn list(&mut self, key: &'static str, default: &[usize]) -> Result<Vec<usize>, ValidationError> {
        let section = self.name;
        match self.entry(key) {
            None => Ok(default.to_vec()),
            Some(e) if e.value.trim().is_empty() => Ok(Vec::new()),
            Some(e) => e
                .value
                .split(',')
                .map(|t| {
                    t.trim().parse::<usize>().map_err(|_| {
                        ValidationError::new(
                            format!("{section}.{key}"),
                            format!("cannot parse list item {:?} (line {})", t.trim(), e.line),
                        )
                    })
                })
                .collect(),
        }
    }

    fn finish(self) -> Result<(), ValidationError> {
        if let Some(section) = self.section {
            if let Some(e) = section.entries.iter().find(|e| !self.seen.contains(e.key.as_str())) {
                return Err(ValidationError::new(
                    format!("{}.{}", self.name, e.key),
                    format!("unknown key (line {})", e.line),
                ));
            }
        }
        Ok(())
    }
}

const SECTIONS: [&str; 4] = ["train", "data", "metrics", "output"];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let doc = KvDocument::parse(text)?;
        Ok(Self::from_document(&doc)?)
    }

    pub fn from_document(doc: &KvDocument) -> Result<Self, ValidationError> {
        for s in &doc.sections {
            if !SECTIONS.contains(&s.name.as_str()) {
                let what = if s.name.is_empty() {
                    match s.entries.first() {
                        Some(e) => format!("key outside any section (line {})", e.line),
                        None => "empty section".to_string(),
                    }
                } else {
                    format!("unknown section (line {})", s.line)
                };
                return Err(ValidationError::new(s.name.clone(), what));
            }
        }
        let d = TrainConfig::default();
        let mut r = SectionReader::new(doc, "train");
        let train = TrainConfig {
            batch_size: r.parse("batch_size", d.batch_size)?,
            style_dim: r.parse("style_dim", d.style_dim)?,
            lambda_adv: r.parse("lambda_adv", d.lambda_adv)?,
            lambda_scon: r.parse("lambda_scon", d.lambda_scon)?,
            lambda_cyc: r.parse("lambda_cyc", d.lambda_cyc)?,
            learning_rate: r.parse("learning_rate", d.learning_rate)?,
            adam_beta1: r.parse("adam_beta1", d.adam_beta1)?,
            adam_beta2: r.parse("adam_beta2", d.adam_beta2)?,
            total_iterations: r.parse("total_iterations", d.total_iterations)?,
            r1_gamma: r.parse("r1_gamma", d.r1_gamma)?,
            resolution: r.parse("resolution", d.resolution)?,
            seed: r.parse("seed", d.seed)?,
            base_channels: r.parse("base_channels", d.base_channels)?,
            max_channels: r.parse("max_channels", d.max_channels)?,
            downsample_depth: r.parse("downsample_depth", d.downsample_depth)?,
            no_stddev_branch: r.parse("no_stddev_branch", d.no_stddev_branch)?,
            mode_seeking_loss: r.parse("mode_seeking_loss", d.mode_seeking_loss)?,
            lambda_ms: r.parse("lambda_ms", d.lambda_ms)?,
            checkpoint_every: r.parse("checkpoint_every", d.checkpoint_every)?,
            sample_every: r.parse("sample_every", d.sample_every)?,
        };
        r.finish()?;

        let defaults = RunConfig::default();
        let mut r = SectionReader::new(doc, "data");
        let data_root = PathBuf::from(r.string("root", &defaults.data_root.to_string_lossy()));
        r.finish()?;

        let d = MetricsConfig::default();
        let mut r = SectionReader::new(doc, "metrics");
        let metrics = MetricsConfig {
            dfid_m: r.parse("dfid_m", d.dfid_m)?,
            dfid_n: r.parse("dfid_n", d.dfid_n)?,
            diversity_k: r.parse("diversity_k", d.diversity_k)?,
            diversity_n: r.parse("diversity_n", d.diversity_n)?,
            extractor: r.string("extractor", &d.extractor),
            fid_batch_sizes: r.list("fid_batch_sizes", &d.fid_batch_sizes)?,
            fid_resamples: r.parse("fid_resamples", d.fid_resamples)?,
            seed: r.parse("seed", d.seed)?,
        };
        r.finish()?;

        let mut r = SectionReader::new(doc, "output");
        let output_dir = PathBuf::from(r.string("dir", &defaults.output_dir.to_string_lossy()));
        let run_name = r.string("run_name", "");
        r.finish()?;

        if data_root.as_os_str().is_empty() {
            return Err(ValidationError::new("data.root", "must not be empty"));
        }
        if output_dir.as_os_str().is_empty() {
            return Err(ValidationError::new("output.dir", "must not be empty"));
        }
        if run_name.contains(['/', '\\']) || run_name == "." || run_name == ".." {
            return Err(ValidationError::new("output.run_name", "must be a plain directory name"));
        }

        let cfg = RunConfig {
            train,
            data_root,
            metrics,
            output_dir,
            run_name,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        self.train.validate()?;
        self.metrics.validate()
    }

    /// Canonical text form with every field spelled out.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let m = &self.metrics;
        let sizes = m
            .fid_batch_sizes
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        let quote = |s: &str| {
            if s.is_empty() || s.trim() != s {
                format!("\"{s}\"")
            } else {
                s.to_string()
            }
        };
        format!(
            "[train]\n\
             batch_size = {}\n\
             style_dim = {}\n\
             lambda_adv = {}\n\
             lambda_scon = {}\n\
             lambda_cyc = {}\n\
             learning_rate = {}\n\
             adam_beta1 = {}\n\
             adam_beta2 = {}\n\
             total_iterations = {}\n\
             r1_gamma = {}\n\
             resolution = {}\n\
             seed = {}\n\
             base_channels = {}\n\
             max_channels = {}\n\
             downsample_depth = {}\n\
             no_stddev_branch = {}\n\
             mode_seeking_loss = {}\n\
             lambda_ms = {}\n\
             checkpoint_every = {}\n\
             sample_every = {}\n\
             \n[data]\n\
             root = {}\n\
             \n[metrics]\n\
             dfid_m = {}\n\
             dfid_n = {}\n\
             diversity_k = {}\n\
             diversity_n = {}\n\
             extractor = {}\n\
             fid_batch_sizes = {}\n\
             fid_resamples = {}\n\
             seed = {}\n\
             \n[output]\n\
             dir = {}\n\
             run_name = {}\n",
            t.batch_size,
            t.style_dim,
            t.lambda_adv,
            t.lambda_scon,
            t.lambda_cyc,
            t.learning_rate,
            t.adam_beta1,
            t.adam_beta2,
            t.total_iterations,
            t.r1_gamma,
            t.resolution,
            t.seed,
            t.base_channels,
            t.max_channels,
            t.downsample_depth,
            t.no_stddev_branch,
            t.mode_seeking_loss,
            t.lambda_ms,
            t.checkpoint_every,
            t.sample_every,
            quote(&self.data_root.to_string_lossy()),
            m.dfid_m,
            m.dfid_n,
            m.diversity_k,
            m.diversity_n,
            quote(&m.extractor),
            quote(&sizes),
            m.fid_resamples,
            m.seed,
            quote(&self.output_dir.to_string_lossy()),
            quote(&self.run_name),
        )
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
