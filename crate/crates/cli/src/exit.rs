//! Process exit classification.

use std::fmt;

/// Exit status reported by the `cssr` binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Config = 1,
    Data = 2,
    Backend = 3,
}

/// An error tagged with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(kind: ExitKind, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            kind,
            error: error.into(),
        }
    }

    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Failure::new(ExitKind::Config, error)
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Failure::new(ExitKind::Data, error)
    }

    pub fn backend(error: impl Into<anyhow::Error>) -> Self {
        Failure::new(ExitKind::Backend, error)
    }

    /// Classifies a core error: backend faults, then configuration, then data.
    pub fn from_core(error: cssr_core::Error) -> Self {
        use cssr_core::Error as E;
        let kind = if error.is_backend() {
            ExitKind::Backend
        } else {
            match &error {
                E::Config(_) => ExitKind::Config,
                _ => ExitKind::Data,
            }
        };
        Failure::new(kind, error)
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }

    pub fn context(self, msg: impl fmt::Display + Send + Sync + 'static) -> Self {
        Failure {
            kind: self.kind,
            error: self.error.context(msg),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T> = Result<T, Failure>;
