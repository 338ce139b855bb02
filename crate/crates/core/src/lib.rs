pub mod backprop;
pub mod bandit;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod forest;
pub mod loss;
pub mod model_file;
pub mod optim;
pub mod prune;
pub mod synth;
pub mod train;
pub mod tree;

pub use error::{Error, Result};
