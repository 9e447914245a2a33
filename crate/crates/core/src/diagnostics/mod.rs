//! Scalar functionals along a trajectory: energy, localized mass and
//! momentum, the Lyapunov functional, linearized operators and monitors.

mod decoupling;
mod functionals;
mod linearized;
mod localizers;
mod monitors;

pub use decoupling::{decoupling_integral, decoupling_sweep, DecouplingFit, OverlapFactor};
pub use functionals::{
    energy, h_coercivity, local_quantities, lyapunov, lyapunov_from, mass, power_integral, quadratic_form_h, rotate, unstable_direction,
    HOperator, LocalQuantities,
};
pub use linearized::{coercivity_estimate, projected_min_rayleigh, CoercivityReport, Linearized};
pub use localizers::{LocalizerSet, SmoothStep};
pub use monitors::{
    almost_conservation_monitor, diagnose, energy_drift_bound, svg_plot, time_derivative, unstable_direction_monitor,
    validate_stream, write_records_csv, DiagnosticsRecord, MonitorSeries, Rates,
};
