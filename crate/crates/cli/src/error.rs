use std::fmt;

use chomp_sdr::SdrError;

/// Failure of a subcommand, grouped by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Exit 2.
    Config(String),
    /// Exit 3.
    Csv(String),
    /// Exit 4.
    Dimension(String),
    /// Exit 1.
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Csv(_) => 3,
            CliError::Dimension(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration: {m}"),
            CliError::Csv(m) => write!(f, "csv: {m}"),
            CliError::Dimension(m) => write!(f, "dimensions: {m}"),
            CliError::Other(m) => f.write_str(m),
        }
    }
}

impl From<SdrError> for CliError {
    fn from(e: SdrError) -> Self {
        match e {
            SdrError::InvalidConfig(_) => CliError::Config(e.to_string()),
            SdrError::DimensionMismatch { .. } | SdrError::DimsMismatch { .. } => CliError::Dimension(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}
