pub mod beta;
pub mod dissim;
pub mod empirics;
pub mod model;
pub mod ranking;
pub mod error;
pub mod rational;
pub mod sampling;
pub mod seed;
pub mod series;

pub use error::{Error, Result};

/// Library version, recorded in models and manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
