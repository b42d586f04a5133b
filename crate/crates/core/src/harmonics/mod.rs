//! Harmonic generation by pointwise nonlinearities.
//!
//! [`lab`] is the exact 1D polynomial laboratory used as a theorem oracle;
//! [`cascade2d`] and [`noise`] drive the 2D convolution experiments.

pub mod cascade2d;
pub mod lab;
pub mod noise;

pub use cascade2d::{cascade2d, Activation2d, Cascade2dConfig, KernelInit};
pub use lab::{
    check_theorem1, closed_form_top_power, poly_apply_coeffs, poly_apply_time, simulate_cascade,
    CascadeConfig, FilterTable, FourierSignal, PolyActivation, Theorem1Report, ToneInput,
    TopPowerReport,
};
pub use noise::{pink_noise, power_law_field};
