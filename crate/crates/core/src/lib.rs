//! Multilingual, multi-speaker VITS-style text-to-speech at desk scale.

pub mod align;
pub mod context;
pub mod data;
mod error;
pub mod frontend;
pub mod model;
pub mod pipeline;
pub mod train;

pub use error::{Error, Result};
