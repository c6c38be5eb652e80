use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("distance {0} m is below the 1 m validity floor of the path-loss model")]
    PathLossDomain(f64),

    #[error("crlb-degenerate: {0} sensing subcarriers, need at least 2")]
    CrlbDegenerate(u32),

    #[error("invalid scenario: {0}")]
    InvalidScenario(Violations),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no finite handover region on any grid row")]
    AllRowsUnbounded,

    #[error("echo frame carries no signal energy")]
    DegenerateFrame,

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One broken scenario invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// round(ρN) < 2, the delay CRLB has a zero denominator.
    CrlbDegenerate {
        sensing_subcarriers: u32,
    },
    /// N·Δf differs from B.
    GridInconsistent {
        n_delta_f: f64,
        bandwidth: f64,
    },
    NonPositive {
        field: &'static str,
        value: f64,
    },
    OutOfRange {
        field: &'static str,
        value: f64,
    },
}

impl Violation {
    /// Short machine-readable tag.
    pub fn code(&self) -> &'static str {
        match self {
            Violation::CrlbDegenerate { .. } => "crlb-degenerate",
            Violation::GridInconsistent { .. } => "grid-inconsistent",
            Violation::NonPositive { .. } => "non-positive",
            Violation::OutOfRange { .. } => "out-of-range",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::CrlbDegenerate { sensing_subcarriers } => {
                write!(f, "crlb-degenerate: round(pilot_ratio * n_subcarriers) = {sensing_subcarriers} < 2")
            }
            Violation::GridInconsistent { n_delta_f, bandwidth } => write!(
                f,
                "grid-inconsistent: n_subcarriers * delta_f = {n_delta_f} Hz but bandwidth_b = {bandwidth} Hz"
            ),
            Violation::NonPositive { field, value } => {
                write!(f, "{field} must be positive, got {value}")
            }
            Violation::OutOfRange { field, value } => write!(f, "{field} out of range: {value}"),
        }
    }
}

/// Every violated invariant of a scenario, not just the first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Violations(pub Vec<Violation>);

impl Violations {
    pub fn contains_code(&self, code: &str) -> bool {
        self.0.iter().any(|v| v.code() == code)
    }
}

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}
