//! Pipeline stages behind the `opstab` command.

pub mod config;
pub mod replay;
pub mod stages;

use std::fmt;

use opstab_core::corpus::CorpusError;
use opstab_core::genclient::GenError;
use opstab_core::metrics::MetricsError;
use opstab_core::pmf::PmfError;
use opstab_core::report::ReportError;
use opstab_core::sandbox::SandboxError;

/// Failure classes, each with its own exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// The computation ran but produced nothing reportable.
    Domain(String),
    /// Bad arguments, configuration, corpus contents, or stage ordering.
    Usage(String),
    /// Sandbox, filesystem, or endpoint failure.
    Infrastructure(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Infrastructure(_) => 3,
        }
    }

    /// Same class, message prefixed with `what`.
    pub fn context(self, what: &str) -> CliError {
        match self {
            CliError::Domain(m) => CliError::Domain(format!("{what}: {m}")),
            CliError::Usage(m) => CliError::Usage(format!("{what}: {m}")),
            CliError::Infrastructure(m) => CliError::Infrastructure(format!("{what}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Domain(m) | CliError::Usage(m) | CliError::Infrastructure(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io { .. } => CliError::Infrastructure(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SandboxError> for CliError {
    fn from(e: SandboxError) -> Self {
        match e {
            SandboxError::Config(_) | SandboxError::Contract(_) | SandboxError::Artifact { .. } => {
                CliError::Usage(e.to_string())
            }
            SandboxError::Spawn { .. } | SandboxError::Io { .. } => CliError::Infrastructure(e.to_string()),
        }
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        match e {
            GenError::Config(_) | GenError::Corpus(_) => CliError::Usage(e.to_string()),
            GenError::Endpoint { .. } | GenError::Io { .. } => CliError::Infrastructure(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::File { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<PmfError> for CliError {
    fn from(e: PmfError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io { .. } => CliError::Infrastructure(e.to_string()),
            ReportError::Malformed { .. } => CliError::Usage(e.to_string()),
        }
    }
}
