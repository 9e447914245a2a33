//! Configuration, persistence and the experiment drivers.

mod config;
mod construction;
mod decay;
mod equivalence;
mod record;

pub use config::{FitConfig, GridConfig, NoiseConfig, NoiseKind, RunConfig, ScanConfig, SolitonConfig, OUTPUT_ROOT_VAR};
pub use construction::{
    a_theta_boot_monitor, local_mass_rates, mod_monitor, monitor_suite, partition_error, phi_of, run_backward_construction,
    tail_weight, ven_boot_monitor, CauchyEntry, ConstructionSet, RunOptions,
};
pub use decay::{fit_decay, write_slope_table, DecayModel, DecayReport, LineFit, MIN_DECAY_SAMPLES};
pub use equivalence::{run_equivalence_study, EquivalenceLevel, EquivalenceStudy};
pub use record::{read_records, write_record, Checkpoint, MonitorFit, RunRecord, RunStatus};
