use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

/// Exit status for each failure category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Parse,
    Numerical,
    Config,
    Output,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Parse => 2,
            Category::Numerical => 3,
            Category::Config => 4,
            Category::Output => 5,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read data file {path}: {source}")]
    Data {
        path: PathBuf,
        source: vcpanel::Error,
    },
    #[error("cannot read config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] vcpanel::Error),
}

impl CliError {
    pub fn category(&self) -> Category {
        use vcpanel::Error as E;
        match self {
            CliError::Data { .. } => Category::Parse,
            CliError::Config { .. } | CliError::Invalid(_) => Category::Config,
            CliError::Write { .. } => Category::Output,
            CliError::Core(e) => match e {
                E::ShapeMismatch { .. }
                | E::NonFinite { .. }
                | E::SupportViolation { .. }
                | E::TooSmall { .. }
                | E::UnbalancedPanel { .. }
                | E::DuplicateCell { .. }
                | E::Parse { .. }
                | E::Io(_) => Category::Parse,
                E::InvalidSupport { .. }
                | E::InvalidSpec(_)
                | E::InvalidArgument(_)
                | E::EmptyGrid
                | E::BadBlockLength { .. } => Category::Config,
                _ => Category::Numerical,
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.category().exit_code()
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Report<'a> {
            error: Category,
            exit_code: i32,
            message: &'a str,
        }
        let message = self.to_string();
        serde_json::to_string(&Report {
            error: self.category(),
            exit_code: self.exit_code(),
            message: &message,
        })
        .expect("plain strings serialize")
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
