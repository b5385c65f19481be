//! CLI errors mapped onto the documented exit codes: 1 usage, 2 fatal
//! data validation, 3 numerical/contract failure.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    FatalData(String),
    Contract(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::FatalData(_) => 2,
            CliError::Contract(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::FatalData(msg) => write!(f, "fatal data validation: {msg}"),
            CliError::Contract(msg) => write!(f, "failure: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn fatal_data(msg: impl Into<String>) -> CliError {
    CliError::FatalData(msg.into())
}

pub fn contract(msg: impl Into<String>) -> CliError {
    CliError::Contract(msg.into())
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Contract(format!("io: {e}"))
    }
}

impl From<perpbt_core::engine::EngineError> for CliError {
    fn from(e: perpbt_core::engine::EngineError) -> Self {
        match e {
            perpbt_core::engine::EngineError::FatalData { .. } => {
                CliError::FatalData(e.to_string())
            }
            other => CliError::Contract(other.to_string()),
        }
    }
}

impl From<perpbt_core::marketdata::MarketDataError> for CliError {
    fn from(e: perpbt_core::marketdata::MarketDataError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<perpbt_core::screening::ScreeningError> for CliError {
    fn from(e: perpbt_core::screening::ScreeningError) -> Self {
        match e {
            perpbt_core::screening::ScreeningError::Engine(engine) => engine.into(),
            other => CliError::Contract(other.to_string()),
        }
    }
}

impl From<perpbt_core::diagnostics::DiagnosticsError> for CliError {
    fn from(e: perpbt_core::diagnostics::DiagnosticsError) -> Self {
        match e {
            perpbt_core::diagnostics::DiagnosticsError::Engine(engine) => engine.into(),
            other => CliError::Contract(other.to_string()),
        }
    }
}

impl From<perpbt_core::audit::AuditError> for CliError {
    fn from(e: perpbt_core::audit::AuditError) -> Self {
        match e {
            perpbt_core::audit::AuditError::Engine(engine) => engine.into(),
            other => CliError::Contract(other.to_string()),
        }
    }
}

impl From<perpbt_core::tuner::TunerError> for CliError {
    fn from(e: perpbt_core::tuner::TunerError) -> Self {
        CliError::Usage(e.to_string())
    }
}
