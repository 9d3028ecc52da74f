//! Harmonic kernel decomposition and harmonic variational Gaussian processes.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod gp;
pub mod harness;
pub mod hkd;
pub mod init;
pub mod kernels;
pub mod linalg;
pub mod rng;
pub mod training;
pub mod transforms;

pub use error::{Error, Result};
