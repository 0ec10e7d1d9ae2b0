pub mod augment;
pub mod data;
pub mod error;
pub mod eval;
pub mod labels;
pub mod nn;
pub mod score;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
