pub mod baselines;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod numeric;
pub mod objectives;
pub mod report;
pub mod store;
pub mod training;

pub use error::{Error, Result};
