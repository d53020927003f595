//! Axis smoothing against the distance field of the initial curve, and
//! spline point reduction.

pub mod evolve;
pub mod field;
pub mod rdp;

pub use evolve::{curve_energy, reparameterize, smooth_curve, SmoothingParams, SmoothingReport};
pub use field::{voxelize_curve, DistanceField};
pub use rdp::{rdp_simplify, DEFAULT_RDP_FACTOR};
