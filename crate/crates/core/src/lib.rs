pub mod autodiff;
pub mod balance;
pub mod checkpoint;
pub mod cli;
pub mod classifier;
pub mod container;
pub mod dataset;
pub mod error;
pub mod explain;
pub mod metrics;

pub use error::{Error, Result};
