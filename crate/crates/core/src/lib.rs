pub mod classifier;
pub mod data;
pub mod error;
pub mod metrics;
pub mod mieo;
pub mod model_file;
pub mod nn;
pub mod search;
pub mod synth;

pub use error::{Error, Result};
