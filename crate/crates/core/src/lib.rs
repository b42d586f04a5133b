//! Radial log-power spectra, spectral tail uplift, harmonic-cascade oracles
//! and a small auxiliary-loss detector trained on spectral features.

pub mod error;
pub mod features;
pub mod fmt;
pub mod harmonics;
pub mod ingest;
pub mod plane;
pub mod spectrum;
pub mod stal;
pub mod synth;
pub mod transforms;
pub mod verify;

pub use error::{Error, Result};
pub use plane::Plane;
