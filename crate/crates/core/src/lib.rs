//! Time-instance zero-crossing (TI ZX) waveform design for 1-bit
//! oversampled multiuser MIMO downlink.
//!
//! - [`zxmap`]: bit-to-waveform mapping and its Moore machine
//! - [`spectrum`]: analytic autocorrelation, PSD and power containment
//! - [`optimizer`]: max-min coefficient design under a containment floor
//! - [`mimosim`]: ZF-precoded channel, noise and 1-bit quantization
//! - [`detector`]: Hamming-distance block detection
//! - [`harness`]: BER sweeps and empirical spectra
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detector;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mimosim;
pub mod optimizer;
pub mod scalar;
pub mod spectrum;
mod tables;
pub mod zxmap;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tables::{TABLE4_MRX2, TABLE5_MRX3};
pub use zxmap::{Sign, ZxParams};

pub type CoefficientSet64 = zxmap::CoefficientSet<f64>;
pub type MooreMachine64 = zxmap::MooreMachine<f64>;
pub type Autocorrelation64 = spectrum::Autocorrelation<f64>;
pub type DesignProblem64 = optimizer::DesignProblem<f64>;
pub type DesignSolution64 = optimizer::DesignSolution<f64>;
pub type ChannelRealization64 = mimosim::ChannelRealization<f64>;

pub type CoefficientSet32 = zxmap::CoefficientSet<f32>;
pub type MooreMachine32 = zxmap::MooreMachine<f32>;
