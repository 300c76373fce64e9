//! LiDAR scene mixing, spatial-prior statistics, camera-LiDAR bridging and a
//! small semi-supervised trainer built around them.
//!
//! Points live in the sensor frame: x forward, y left, z up, meters. Angles
//! are radians.

pub mod camera;
pub mod cloud;
pub mod error;
pub mod geometry;
pub mod io;
pub mod mixing;
pub mod priors;
pub mod ssl;
pub mod synth;

pub use cloud::{Painted, PointCloud, IGNORE_LABEL};
pub use error::{Error, Result};
