//! Text and binary formats shared by the training, evaluation and video tools.
//!
//! Everything here is plain Rust with no tensor dependency, so each decoder can be
//! fuzzed in isolation (see `fuzz/` at the repository root).

pub mod config;
pub mod container;
pub mod error;
pub mod features;
pub mod kv;
pub mod timeline;

pub use config::{MetricsConfig, RunConfig, TrainConfig};
pub use container::{Checkpoint, NamedArray};
pub use error::{ConfigError, FormatError, ValidationError};
pub use features::FeatureCache;
pub use kv::KvDocument;
pub use timeline::{Interpolation, TimelineFile};
