//! Hybrid TOA/TDOA/RSS/AOA source localization.
//!
//! The crate provides measurement simulation, the weighted least-squares
//! objective, a majorization-minimization (MM) solver that fuses any subset
//! of the four measurement types, Cramér-Rao bounds, a weighted linear
//! least-squares baseline and a Monte-Carlo experiment harness.

pub mod crlb;
pub mod error;
pub mod harness;
pub mod mm;
pub mod objective;
pub mod seed;
pub mod selftest;
pub mod sim;
pub mod types;
pub mod wls;

pub use error::{Error, Result};
pub use nalgebra;
pub use types::{Dim, Mask, MeasurementKind, MeasurementSet, NetworkGeometry, NoiseSigmas, Point, RssParams};
