//! Post-processing: regulation metrics, IEEE 1159 overvoltage check,
//! parameter studies and the rpm-driven vehicle experiment.

mod ieee1159;
mod power;
mod regulation;
mod steady;
mod study;
mod vehicle;

use thiserror::Error;

use crate::engine::SolveError;
use crate::netlist::NetlistError;

pub use ieee1159::{ieee1159_overvoltage, Ieee1159Config, Ieee1159Result, Verdict};
pub use power::{power_dissipation_check, PowerWarning};
pub use regulation::{line_regulation, RegulationReport, SweepPoint, SweepResult};
pub use steady::steady_state_voltage;
pub use study::{parameter_study, StudyAxis, StudyRow, StudySetup};
pub use vehicle::{rpm_to_input_voltage, vehicle_experiment, Interpolated, RpmVoltageMap, VehicleRow};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least {needed} converged points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("series is empty")]
    EmptySeries,
    #[error("sample times must be nondecreasing")]
    UnorderedSeries,
    #[error("window of {window:e} s exceeds the waveform span of {span:e} s")]
    WindowTooLong { window: f64, span: f64 },
    #[error("window must be positive")]
    InvalidWindow,
    #[error("no node named `{0}`")]
    UnknownNode(String),
    #[error("{component}.{param} = {value} lies outside the catalogue range")]
    OutOfCatalogue { component: String, param: String, value: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid rpm map: {0}")]
    InvalidMap(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}
