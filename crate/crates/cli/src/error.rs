use std::fmt;

use superlime::classifier::ClassifierError;
use superlime::evaluation::EvalError;
use superlime::{ExplainError, ImagingError, SegmenterError};

/// Failure category; each maps to a fixed process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Io,
    Compute,
    Adapter,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Usage,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Io,
            message: message.into(),
        }
    }

    pub fn compute(message: impl Into<String>) -> Self {
        Self {
            kind: Kind::Compute,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            Kind::Usage => 1,
            Kind::Io => 2,
            Kind::Compute => 3,
            Kind::Adapter => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ImagingError> for CliError {
    fn from(e: ImagingError) -> Self {
        match e {
            ImagingError::InvalidDimensions { .. } | ImagingError::DimensionMismatch { .. } => {
                CliError::compute(e.to_string())
            }
            _ => CliError::io(e.to_string()),
        }
    }
}

impl From<SegmenterError> for CliError {
    fn from(e: SegmenterError) -> Self {
        match e {
            SegmenterError::InvalidParams { .. } | SegmenterError::UnknownMethod(_) => {
                CliError::usage(e.to_string())
            }
            SegmenterError::Imaging(inner) => inner.into(),
            SegmenterError::LabelFile(_) => CliError::io(e.to_string()),
            SegmenterError::DimensionMismatch { .. } | SegmenterError::TooManyLabels { .. } => {
                CliError::compute(e.to_string())
            }
        }
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::InvalidSpec(_) => CliError::usage(e.to_string()),
            _ => CliError {
                kind: Kind::Adapter,
                message: format!("classifier: {e}"),
            },
        }
    }
}

impl From<ExplainError> for CliError {
    fn from(e: ExplainError) -> Self {
        match e {
            ExplainError::InvalidConfig(_) => CliError::usage(e.to_string()),
            ExplainError::Segmenter(inner) => inner.into(),
            ExplainError::Classifier { .. } => CliError {
                kind: Kind::Adapter,
                message: e.to_string(),
            },
            ExplainError::ZeroSignal | ExplainError::Numerical(_) => CliError::compute(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::EmptyCorpus | EvalError::EmptyGrid => CliError::usage(e.to_string()),
            EvalError::Corpus(_) | EvalError::Output { .. } => CliError::io(e.to_string()),
            EvalError::Imaging(inner) => inner.into(),
            EvalError::Classifier(inner) => inner.into(),
            EvalError::Segmenter(inner) => inner.into(),
            EvalError::SweepFailed { .. }
            | EvalError::DimensionMismatch { .. }
            | EvalError::BothEmpty => CliError::compute(e.to_string()),
        }
    }
}
