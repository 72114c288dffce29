pub mod baselines;
#[cfg(doctest)]
mod book;
pub mod bounds;
pub mod checkpoint;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod neural;
pub mod normalize;
pub mod oracle;
pub mod problems;

pub use error::{Error, Result};
