//! Automated Doppler-angle estimation from B-mode ultrasound images.
//!
//! The pipeline: images are min-max normalized and contrast-equalized
//! ([`imaging`]), rotated with matching label updates ([`dataset`]), passed
//! through a frozen feature extractor ([`features`]), and regressed to an
//! angle by a shallow head ([`model`]) trained with Adam ([`training`]).
//! [`metrics`] scores predictions; [`geometry`] holds the angle convention
//! and Doppler velocity math.

pub mod config;
pub mod dataset;
pub mod error;
pub mod features;
pub mod geometry;
pub mod imaging;
pub mod metrics;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod training;

pub use error::{Error, Result};
