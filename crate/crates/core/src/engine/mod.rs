//! Modified nodal analysis: DC operating point, transient, DC sweep.

mod circuit;
mod dc;
mod lu;
mod sweep;
mod transient;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devices::IntegrationMethod;
use crate::netlist::Violation;

pub use dc::{assemble_mna, dc_operating_point, kcl_residuals, NodeResidual};
pub use lu::{solve_linear, MnaSystem};
pub use sweep::{dc_sweep, sweep_grid, DcSweep, DcSweepPoint};
pub use transient::{sample_count, transient, TransientWarning, Waveform, REVERSE_POLARITY_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub reltol: f64,
    pub vntol: f64,
    pub abstol: f64,
    pub max_newton_iters: usize,
    pub gmin: f64,
    /// Transient integration; trapezoidal steps fall back to backward Euler
    /// when Newton fails.
    pub integration: IntegrationMethod,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            reltol: 1e-3,
            vntol: 1e-6,
            abstol: 1e-12,
            max_newton_iters: 100,
            gmin: 1e-12,
            integration: IntegrationMethod::Trapezoidal,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolveError> {
        let ok = [self.reltol, self.vntol, self.abstol, self.gmin].iter().all(|v| v.is_finite() && *v > 0.0)
            && self.max_newton_iters > 0;
        if ok {
            Ok(())
        } else {
            Err(SolveError::InvalidOptions)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Plain,
    GminStep,
    SourceStep,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonDiagnostics {
    /// Newton iterations spent across every strategy.
    pub iterations: usize,
    /// Node or branch with the largest last update.
    pub worst_unknown: String,
    pub last_update: f64,
    /// Simulation time of the failing step, for transient runs.
    pub time: Option<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("netlist is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidNetlist(Vec<Violation>),
    #[error("singular topology: {0}")]
    SingularTopology(String),
    #[error("singular matrix at row {row}")]
    SingularMatrix { row: usize },
    #[error("Newton did not converge after {} iterations{} (worst unknown {}, last update {:.3e})",
        .0.iterations,
        .0.time.map(|t| format!(" at t = {t:e} s")).unwrap_or_default(),
        .0.worst_unknown,
        .0.last_update)]
    NoConvergence(NewtonDiagnostics),
    #[error("no voltage source named `{0}`")]
    UnknownSource(String),
    #[error("no node named `{0}`")]
    UnknownNode(String),
    #[error("invalid sweep: step must be nonzero and point from start to stop")]
    InvalidSweep,
    #[error("invalid timestep: require 0 < tstep <= tstop")]
    InvalidTimestep,
    #[error("solver tolerances must be finite and positive")]
    InvalidOptions,
    #[error("bias vector has {got} entries, expected {expected}")]
    BiasDimension { expected: usize, got: usize },
}

/// Converged DC solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub node_names: Vec<String>,
    /// Indexed like `node_names`; entry 0 is ground.
    pub node_voltages: Vec<f64>,
    pub source_names: Vec<String>,
    /// Branch current flowing into each source's positive terminal; a
    /// source delivering power reports a negative current.
    pub source_currents: Vec<f64>,
    pub iterations: usize,
    pub strategy_used: Strategy,
    #[serde(skip)]
    pub(crate) solution: Vec<f64>,
}

impl OperatingPoint {
    pub fn voltage(&self, node: &str) -> Option<f64> {
        let node = crate::netlist::normalize_node(node);
        self.node_names.iter().position(|n| *n == node).map(|i| self.node_voltages[i])
    }

    pub fn source_current(&self, source: &str) -> Option<f64> {
        self.source_names.iter().position(|n| n.eq_ignore_ascii_case(source)).map(|i| self.source_currents[i])
    }
}
