//! CLI error taxonomy mapped onto process exit codes:
//! 1 usage/config, 2 data, 3 numerical failure.

use std::fmt;

use zplqe_core::fitkit::FitError;
use zplqe_core::physics::PhysicsError;
use zplqe_core::pipeline::PipelineError;
use zplqe_core::simulator::SimulatorError;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or an invalid configuration file.
    Config(String),
    /// Unreadable, malformed, or insufficient input data.
    Data(String),
    /// A numerical routine failed (non-convergence, singularity).
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(format!("i/o: {e}"))
    }
}

impl From<PhysicsError> for CliError {
    fn from(e: PhysicsError) -> Self {
        match e {
            PhysicsError::InvalidParameter { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SimulatorError> for CliError {
    fn from(e: SimulatorError) -> Self {
        match e {
            SimulatorError::Physics(p) => p.into(),
            SimulatorError::InvalidInput(m) => CliError::Config(m),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::NonConvergence(_) | FitError::BootstrapUnstable { .. } => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Physics(p) => p.into(),
            PipelineError::Fit(f) => f.into(),
            PipelineError::PositionOutOfBounds { .. }
            | PipelineError::NegativeArea { .. }
            | PipelineError::InsufficientData(_) => CliError::Data(e.to_string()),
        }
    }
}
