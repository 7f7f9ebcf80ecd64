pub mod cli;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod procgen;
pub mod randfield;
pub mod seeds;
pub mod shifttest;
pub mod stats;

pub use error::{Error, Result};
