pub mod bessel;
pub mod critpoints;
pub mod error;
pub mod experiments;
pub mod field;
pub mod hermite;
pub mod quad;
pub mod randmat;
pub mod rng;
pub mod spectrum;
pub mod stats;

pub use error::{Error, Result};
