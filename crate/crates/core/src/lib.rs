pub mod dips;
pub mod direct;
pub mod error;
pub mod estimator;
pub mod evaluator;
pub mod ips;
pub mod model;
pub mod objective;
pub mod param_space;
pub mod partition_io;
pub mod registry;
pub mod rng;
pub mod scenario;
pub mod special;
pub mod stats;
pub mod toys;
pub mod uncertainty;
pub mod turbulence;

pub use error::{Error, Result};
