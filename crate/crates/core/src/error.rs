use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("unstable system: largest drift real part {max_real_part:e} rad/s")]
    Unstable { max_real_part: f64 },
    #[error("no convergence: {what} (estimate {estimate:e}, error {error:e})")]
    NonConvergence {
        what: String,
        estimate: f64,
        error: f64,
    },
    #[error("no bracketing triple found for {0}")]
    BracketFailure(String),
    #[error("unphysical covariance: smallest eigenvalue of Xi + i sigma is {min_eig:e}")]
    Unphysical { min_eig: f64 },
    #[error("record too short: need {needed:e} s around the pulse centre, have {available:e} s")]
    InsufficientRecord { needed: f64, available: f64 },
    #[error("insufficient samples: {have} trajectories, need at least {need}")]
    InsufficientSamples { have: usize, need: usize },
    #[error("step size {dt:e} s exceeds limit {limit:e} s")]
    StepSize { dt: f64, limit: f64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::ContractViolation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. } | Error::BracketFailure(_) => 3,
            Error::Io { .. } => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let nc = Error::NonConvergence {
            what: "x".into(),
            estimate: 0.0,
            error: 1.0,
        };
        assert_eq!(nc.exit_code(), 3);
        assert_eq!(Error::BracketFailure("x".into()).exit_code(), 3);
        assert_eq!(Error::contract("x").exit_code(), 2);
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::Unstable { max_real_part: 1.0 }.exit_code(), 2);
        let io = Error::io("f", std::io::Error::other("x"));
        assert_eq!(io.exit_code(), 1);
    }
}
