//! Perceptual steering and multichannel control.
//!
//! * [`numerics`]: small dense linear algebra, matrix exponential, RK4, Simpson.
//! * [`corridor`]: pinhole-camera corridor geometry and time-to-transit.
//! * [`steering`]: tau-balance steering laws, continuous, sampled and noisy.
//! * [`multichannel`]: controllability Gramians and minimum-energy steering.
//! * [`standard_parts`]: set-point controllers that tolerate channel dropouts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corridor;
pub mod error;
pub mod multichannel;
pub mod numerics;
pub mod standard_parts;
pub mod steering;

pub use error::{Error, Result};
