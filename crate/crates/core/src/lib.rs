pub mod data;
pub mod error;
pub mod explore;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod optim;
pub mod trainer;

pub use error::{Error, Result};
