//! Active-acoustic 3D human pose estimation.
//!
//! A loudspeaker repeats a sweep while a first-order ambisonic microphone
//! listens; body posture changes the direct, scattered and reflected sound.
//! Per-period spectral features feed a convolutional estimator trained with
//! an adversarial subject-invariance term.

pub mod config;
pub mod dataset;
pub mod error;
pub mod features;
pub mod geom;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod plot;
pub mod signal;
pub mod sim;

pub use error::{Error, Result};
