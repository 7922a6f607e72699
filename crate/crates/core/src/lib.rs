//! Video super-resolution alignment laboratory.
//!
//! Alignment operators (bilinear, nearest and patch warps), a multi-frame
//! shifted-window attention super-resolution model with its training loop,
//! flow statistics and image-quality metrics.

pub mod error;
pub mod numerics;
pub mod par;

pub use error::{Error, Result};
pub mod align;
pub mod frame_io;
pub mod analytics;
pub mod metrics;
pub mod model;
pub mod training;
