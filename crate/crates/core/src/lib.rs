pub mod array_io;
pub mod distance;
pub mod error;
pub mod loader;
pub mod manifest;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod neighbors;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::Matrix;
