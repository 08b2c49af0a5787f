//! Content-aware image narrowing in CNN feature space.
//!
//! An image is passed through a small convolutional network; vertical seams
//! are carved out of the feature maps from the deepest tap to the finest,
//! with finer seams pulled into the receptive fields of the deeper ones. The
//! narrowed image is then recovered by optimizing its pixels until its own
//! features match the carved maps, refined by optimizing a bilinear sampling
//! grid, and finally brought to the requested width with a column-cell warp.

pub mod carver;
pub mod config;
pub mod engine;
pub mod error;
pub mod evaluate;
pub mod image_io;
pub mod importance;
pub mod network;
pub mod pipeline;
pub mod reconstruct;
pub mod rng;
pub mod warp;

pub use error::{Error, Result};
