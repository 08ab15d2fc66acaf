#![allow(clippy::needless_range_loop)]

pub mod attribution;
pub mod cli;
pub mod corpus;
pub mod decomp;
pub mod error;
pub mod eval;
pub mod hierarchy;
pub mod model;
pub mod numerics;
pub mod sampler;
pub mod synthetic;

pub use error::{Error, Result};
