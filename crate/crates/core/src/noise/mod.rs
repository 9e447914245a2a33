//! Brownian drives, noise profiles and the fields assembled from them.

mod drive;
mod fields;
mod geometry;
mod temporal;

pub use drive::{integer_ratio, sample_drive, RoughDrive, DEFAULT_HOLDER_EXPONENT, MIN_REFINEMENT};
pub use fields::{Coefficients, NoiseModel, TailClosure, Weights, TRUNCATION_BUDGET};
pub use geometry::{decay_function, make_geometry, GeometryParams, NoiseCase, NoiseGeometry};
pub use temporal::{check_tail_condition, make_temporal, tail_statistic, ControlledPath, TemporalProfile, TAIL_CHECK_START};
